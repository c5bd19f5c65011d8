"""Command line: ``sitetracker <command> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 for runtime
failures; whatever was produced before a runtime failure stays on disk.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..config import to_dict
from ..exceptions import InvalidConfig, SiteTrackerError
from ..learning import tracks_from_history, write_quality_report
from ..radio import RadioModel
from ..sim import generate_scenario
from ..sim.log import read_log, write_log
from .config import load_config, parse_config
from .experiments import (learn_from_run, occlusion_obstacles, resolve_threads,
                          run_experiment)
from .metrics import evaluate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("sitetracker")


class RuntimeFailure(Exception):
    """A command ran but could not finish; partial outputs are kept."""


def _load(args):
    cfg = load_config(args.config) if args.config else parse_config({})
    if args.seed is not None:
        data = cfg.to_dict()
        data["experiment"]["seeds"] = [args.seed]
        data["scenario"]["seed"] = args.seed
        data["tracker"]["seed"] = args.seed
        cfg = parse_config(data)
    return cfg


def _out(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _radio_prior(args, ap_positions):
    if args.radio_model:
        try:
            return RadioModel.load(args.radio_model)
        except (OSError, ValueError, KeyError) as exc:
            raise InvalidConfig(f"--radio-model {args.radio_model}: {exc}") from exc
    log.info("no --radio-model given; using default path-loss parameters at the logged APs")
    return RadioModel.from_positions(ap_positions)


def _measurements(args, cfg):
    """(scans, truth positions or None, device ids, AP positions) from --log or the config."""
    if args.log:
        if not Path(args.log).is_file():
            raise InvalidConfig(f"--log {args.log}: no such file")
        lg = read_log(args.log)
        if lg.ap_positions is None:
            raise InvalidConfig(f"{args.log}: missing AP header")
        return lg.scans, lg.truth_positions, lg.device_ids if lg.has_device is not None else [], \
            lg.ap_positions, lg.config.get("area")
    sc = generate_scenario(cfg.scenario_config(cfg.scenario.get("seed")))
    return sc.scans, sc.truth.positions, sc.truth.device_ids, sc.radio_model.positions, \
        sc.config.area


def cmd_simulate(args):
    cfg = _load(args)
    out = _out(args, "sim_out")
    sc = generate_scenario(cfg.scenario_config(cfg.scenario.get("seed")))
    write_log(sc, out / "scenario.log")
    sc.radio_model.save(out / "radio_model.txt")
    print(f"wrote {out / 'scenario.log'} ({len(sc.scans)} scans)")
    return EXIT_OK


def _track(args, cfg):
    from ..tracker import MultiTargetTracker
    scans, truth, devices, aps, area = _measurements(args, cfg)
    radio = _radio_prior(args, aps)
    tr = MultiTargetTracker(radio, cfg.tracker_config())
    tr.fit(scans)
    return tr, scans, truth, devices, radio, area


def _write_metrics(out, truth, devices, tr, burn_in):
    if truth is None or not devices:
        return None
    rep = evaluate(truth, devices, tr.trajectories(), start=burn_in)
    summary = {"rmse": rep.pooled_rmse, "p50": rep.percentile(0.5), "p90": rep.percentile(0.9),
               "id_swaps": rep.id_swaps,
               "coverage": {str(k): v for k, v in sorted(rep.coverage.items())}}
    (out / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_track(args):
    cfg = _load(args)
    out = _out(args, "track_out")
    tr, scans, truth, devices, _, _ = _track(args, cfg)
    tr.write_estimates(out / "estimates.csv")
    write_quality_report(tracks_from_history(tr.history_), out / "quality.csv",
                         cfg.learning.q_threshold)
    m = _write_metrics(out, truth, devices, tr, cfg.experiment.burn_in)
    if m is not None and np.isfinite(m["rmse"]):
        print(f"rmse {m['rmse']:.3f} m, p90 {m['p90']:.3f} m, id swaps {m['id_swaps']}")
    print(f"wrote {out / 'estimates.csv'}")
    return EXIT_OK


def _step_models_dict(models):
    out = {}
    for d, st in sorted(models.items()):
        out[str(d)] = {"uses_personal": st.uses_personal, "universal": to_dict(st.universal),
                       "personal": to_dict(st.personal) if st.personal is not None else None}
    return out


def cmd_learn(args):
    cfg = _load(args)
    out = _out(args, "learn_out")
    tr, scans, truth, devices, radio, area = _track(args, cfg)
    lc = cfg.learning
    write_quality_report(tracks_from_history(tr.history_), out / "quality.csv", lc.q_threshold)
    model, steps, qualified = learn_from_run(tr, scans, radio, lc, radio=lc.radio, steps=lc.steps)
    model.save(out / "radio_model.txt")
    (out / "step_models.json").write_text(
        json.dumps(_step_models_dict(steps), indent=2, sort_keys=True) + "\n")
    if lc.occlusion:
        if area is None:
            raise InvalidConfig("the occlusion map needs the scenario area")
        occ = occlusion_obstacles(scans, tuple(area), lc)
        occ.save(out / "occlusion_map.txt")
        occ.save_obstacles(out / "obstacles.txt")
    print(f"{len(qualified)} qualified track(s); wrote {out / 'radio_model.txt'}")
    return EXIT_OK


def cmd_experiment(args):
    cfg = _load(args)
    out = _out(args, "experiment_out")
    res = run_experiment(cfg, out, resolve_threads(args.threads), args.dump_masks)
    for e in res.errors:
        print(f"error: {e}", file=sys.stderr)
    print(f"wrote {out}")
    if res.errors:
        raise RuntimeFailure(f"{len(res.errors)} run(s) failed; partial results in {out}")
    return EXIT_OK


def cmd_validate(args):
    if not args.config:
        raise InvalidConfig("validate-config needs --config")
    load_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="override scenario, tracker and experiment seeds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes for sweeps (SITETRACKER_THREADS overrides)")
    common.add_argument("--radio-model", help="radio model file, one JSON record per AP")
    common.add_argument("--dump-masks", help="directory for foreground masks (PGM)")
    common.add_argument("--log", help="scenario log to read instead of simulating")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sitetracker", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
            ("simulate", cmd_simulate, "generate a scenario and write its measurement log"),
            ("track", cmd_track, "track a scenario and write estimates"),
            ("learn", cmd_learn, "track, then re-fit radio, step and occlusion models"),
            ("experiment", cmd_experiment, "run an experiment sweep"),
            ("validate-config", cmd_validate, "check a configuration file")):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, SiteTrackerError, ArithmeticError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
