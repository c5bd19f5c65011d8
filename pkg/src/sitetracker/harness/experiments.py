"""Experiment runners: simulate, optionally learn, track, score.

Every sweep point reuses the same seed list, so run ``i`` at two points
shares all scenario noise except the swept variable. Each (point, seed) job
is independent; with ``threads > 1`` jobs run in worker processes and their
rows are merged back in job order, so outputs do not depend on scheduling.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from ..exceptions import SiteTrackerError
from ..inertial import StepModelState
from ..learning import (OcclusionMap, cumulative_quality_score, learn_occlusion_map,
                        learn_radio_model, learn_step_models, qualified_tracks,
                        tracks_from_history)
from ..sim import generate_scenario
from ..sim.presets import mog_illumination
from ..tracker import (MultiTargetTracker, ScanMeasurements, VisionOnlyConfig,
                       VisionOnlyTracker)
from ..vision import write_pgm
from .config import RunConfig, parse_config
from .metrics import compute_rmse, evaluate

ABLATION_STAGES = ("reference", "untrained", "detector", "radio", "steps")

DEFAULT_POINTS = {
    "single": (0,),
    "ablation": ABLATION_STAGES,
    "occlusion": (0, 10, 20, 30),
    "heading": (0, 10, 20, 30, 50),
    "sfm": ("off", "on"),
    "visual_noise": (0, 2, 4, 8),
    "learning_rate": None,           # taken from learning.alpha_grid
    "quality": (0, 1, 2, 3),
    "step_learning": (0,),
    "crossing": (0,),
}

# difficulty ladder of the quality experiment: scenario and radio overrides
QUALITY_LEVELS = (
    ({}, (0.0, 0.0)),
    ({"camera": {"p_d": 0.6, "clutter_rate": 1.0}}, (0.0, 0.0)),
    ({"camera": {"p_d": 0.5, "clutter_rate": 1.5}, "imu": {"heading_bias_deg": [10.0, 30.0]}},
     (3.0, 0.3)),
    ({"camera": {"p_d": 0.4, "clutter_rate": 2.0}, "imu": {"heading_bias_deg": [20.0, 40.0]}},
     (6.0, 0.6)),
)

# quick settings used by the suite and "small" scale runs
SMALL = {"seeds": (0, 1), "n_scans": 120}

RUN_COLUMNS = ("experiment", "point", "seed", "variant", "status", "rmse", "p50", "p90",
               "coverage", "id_swaps", "tracks", "qualified", "cqs")


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    summary: dict
    errors: list = field(default_factory=list)
    cdfs: dict = field(default_factory=dict)      # label -> pooled error samples

    @property
    def ok(self):
        return not self.errors


# shared pieces ----------------------------------------------------------

def fmt(v):
    """Fixed formatting so reruns produce identical bytes."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if not math.isfinite(v) else f"{float(v):.6f}"
    return str(v)


def _row(kind, point, seed, variant, report=None, tracker=None, scans=None, q_threshold=300.0,
         **extra):
    row = {"experiment": kind, "point": point, "seed": seed, "variant": variant, "status": "ok"}
    if report is not None:
        row.update(rmse=report.pooled_rmse, p50=report.percentile(0.5),
                   p90=report.percentile(0.9),
                   coverage=float(np.mean(list(report.coverage.values()))) if report.coverage else 0.0,
                   id_swaps=report.id_swaps)
    if tracker is not None:
        tracks = tracks_from_history(tracker.history_)
        row.update(tracks=len(tracks), qualified=sum(t.Q >= q_threshold for t in tracks),
                   cqs=cumulative_quality_score(tracks, q_threshold))
    row.update(extra)
    return row


def track_scenario(scenario, radio_model, tracker_config, scans=None, step_models=None,
                   sfm_params=None, obstacles=None, burn_in=0):
    scans = scenario.scans if scans is None else scans
    tr = MultiTargetTracker(radio_model, tracker_config, step_models, sfm_params, obstacles)
    tr.fit(scans)
    rep = evaluate(scenario.truth.positions, scenario.truth.device_ids, tr.trajectories(),
                   start=burn_in)
    return tr, rep


def learn_from_run(tracker, scans, prior_radio, learning, prior_steps=None,
                   radio=True, steps=True):
    """Radio and step models re-fit from the run's qualified tracks."""
    qualified = qualified_tracks(tracks_from_history(tracker.history_), scans,
                                 learning.q_threshold)
    model = prior_radio
    if radio:
        model = learn_radio_model(qualified, prior_radio, learning.min_samples)
    step_models = dict(prior_steps or {})
    if steps:
        step_models = learn_step_models(qualified, scans, step_models,
                                        trim=learning.step_trim_sigmas,
                                        isolation=learning.step_isolation,
                                        heading_tolerance=learning.step_heading_tolerance)
    return model, step_models, qualified


def occlusion_obstacles(scans, area, learning):
    """Centers of cells that saw too few camera detections."""
    grid = OcclusionMap.covering(area, learning.occlusion_cell, learning.occlusion_threshold)
    window = learning.occlusion_window or None
    return learn_occlusion_map([s.camera for s in scans], grid, window)


def vision_only_report(scenario, tracker_config, burn_in=0):
    """Camera-only baseline started on every visible person, scored on device carriers."""
    truth = scenario.truth
    init = {a: truth.positions[0, a] for a in range(truth.positions.shape[1])}
    cfg = VisionOnlyConfig(particles=tracker_config.particles, pd=tracker_config.pd,
                           clutter_prior=tracker_config.clutter_prior,
                           clutter_density=tracker_config.clutter_density,
                           dt=tracker_config.dt, camera_sigma=tracker_config.camera_sigma,
                           area=tuple(scenario.config.area), seed=tracker_config.seed)
    vt = VisionOnlyTracker(cfg).fit(scenario.scans, init)
    return evaluate(truth.positions, truth.device_ids, vt.trajectories(), start=burn_in)


def _cfg(data):
    return data if isinstance(data, RunConfig) else parse_config(data)


# jobs: each takes (config dict, point, seed) and returns a list of rows ------

def job_single(cfg, point, seed):
    cfg = _cfg(cfg)
    sc = generate_scenario(cfg.scenario_config(seed))
    tr, rep = track_scenario(sc, sc.radio_model, cfg.tracker_config(seed=seed), sfm_params=cfg.sfm,
                             burn_in=cfg.experiment.burn_in)
    return [_row("single", point, seed, "true_model", rep, tr, q_threshold=cfg.learning.q_threshold)]


def job_ablation(cfg, point, seed):
    """All stages of one seed; later stages learn from earlier runs."""
    cfg = _cfg(cfg)
    ex, lc = cfg.experiment, cfg.learning
    wanted = set(point) if isinstance(point, (tuple, list)) else {point}
    sc = generate_scenario(cfg.scenario_config(seed))
    tcfg = cfg.tracker_config(seed=seed)
    mis = sc.radio_model.shifted(ex.mis_power, ex.mis_exponent)
    rows, runs = [], {}

    def record(stage, tr, rep):
        runs[stage] = (tr, rep)
        rows.append(_row("ablation", stage, seed, stage, rep, tr, q_threshold=lc.q_threshold,
                         _errors=rep.errors))

    if "reference" in wanted:
        record("reference", *track_scenario(sc, sc.radio_model, tcfg, burn_in=ex.burn_in))
    if "untrained" in wanted:
        un = generate_scenario(cfg.scenario_config(
            seed, camera={"p_d": ex.untrained_pd, "clutter_rate": ex.untrained_clutter}))
        record("untrained", *track_scenario(un, mis, tcfg, burn_in=ex.burn_in))
    need_detector = wanted & {"detector", "radio", "steps"}
    if need_detector:
        record("detector", *track_scenario(sc, mis, tcfg, burn_in=ex.burn_in))
    if wanted & {"radio", "steps"}:
        radio, _, _ = learn_from_run(runs["detector"][0], sc.scans, mis, lc, steps=False)
        record("radio", *track_scenario(sc, radio, tcfg, burn_in=ex.burn_in))
        if "steps" in wanted:
            radio2, steps, _ = learn_from_run(runs["radio"][0], sc.scans, radio, lc)
            record("steps", *track_scenario(sc, radio2, tcfg, step_models=steps,
                                            burn_in=ex.burn_in))
    return [r for r in rows if r["point"] in wanted]


def job_occlusion(cfg, point, seed):
    cfg = _cfg(cfg)
    ex = cfg.experiment
    sc = generate_scenario(cfg.scenario_config(seed, occlusion_fraction=float(point) / 100.0,
                                               occlusion_seed=seed))
    tcfg = cfg.tracker_config(seed=seed)
    tr, rep = track_scenario(sc, sc.radio_model, tcfg, burn_in=ex.burn_in)
    vrep = vision_only_report(sc, tcfg, ex.burn_in)
    return [_row("occlusion", point, seed, "multimodal", rep, tr, q_threshold=cfg.learning.q_threshold),
            _row("occlusion", point, seed, "vision_only", vrep)]


def job_heading(cfg, point, seed):
    cfg = _cfg(cfg)
    sc = generate_scenario(cfg.scenario_config(seed, imu={"heading_bias_deg": [0.0, float(point)]}))
    tr, rep = track_scenario(sc, sc.radio_model, cfg.tracker_config(seed=seed),
                             burn_in=cfg.experiment.burn_in)
    return [_row("heading", point, seed, "multimodal", rep, tr, q_threshold=cfg.learning.q_threshold)]


def job_sfm(cfg, point, seed):
    cfg = _cfg(cfg)
    sc = generate_scenario(cfg.scenario_config(seed))
    occ = occlusion_obstacles(sc.scans, sc.config.area, cfg.learning)
    obstacles = occ.obstacles()
    sfm = cfg.sfm
    if abs(sfm.obstacle_radius - occ.obstacle_radius) > 1e-12:
        sfm = replace(sfm, obstacle_radius=occ.obstacle_radius)
    on = point == "on"
    tr, rep = track_scenario(sc, sc.radio_model, cfg.tracker_config(seed=seed, sfm_enabled=on),
                             sfm_params=sfm, obstacles=obstacles, burn_in=cfg.experiment.burn_in)
    return [_row("sfm", point, seed, "sfm_on" if on else "sfm_off", rep, tr,
                 q_threshold=cfg.learning.q_threshold, obstacles=len(obstacles))]


def job_visual_noise(cfg, point, seed):
    cfg = _cfg(cfg)
    sc = generate_scenario(cfg.scenario_config(seed, camera={"visual_noise_objects": int(point)}))
    tr, rep = track_scenario(sc, sc.radio_model, cfg.tracker_config(seed=seed),
                             burn_in=cfg.experiment.burn_in)
    return [_row("visual_noise", point, seed, "multimodal", rep, tr,
                 q_threshold=cfg.learning.q_threshold)]


def rendered_scans(scenario, alpha, seed, keep_masks=None):
    """Scans whose camera detections come from the foreground detector."""
    from ..sim.render import CameraRig, RenderConfig, detect_sequence, render_frames
    rig = CameraRig.overhead(scenario.config.area)
    rc = RenderConfig(illumination=mog_illumination(scenario.config.n_scans), seed=seed)
    dets = detect_sequence(render_frames(scenario.truth.positions, rig, rc), rig, alpha,
                           keep_masks=keep_masks)
    return [ScanMeasurements(s.t, dets[s.t], s.radio, s.steps) for s in scenario.scans]


def job_learning_rate(cfg, point, seed, keep_masks=None, dump_masks=None):
    cfg = _cfg(cfg)
    sc = generate_scenario(cfg.scenario_config(seed))
    if dump_masks is not None and keep_masks is None:
        keep_masks = {}
    scans = rendered_scans(sc, float(point), seed, keep_masks)
    if dump_masks is not None:
        write_masks(keep_masks, Path(dump_masks) / f"alpha_{fmt(float(point))}_seed_{seed}")
    tr, rep = track_scenario(sc, sc.radio_model, cfg.tracker_config(seed=seed), scans=scans,
                             burn_in=cfg.experiment.burn_in)
    per_scan = float(np.mean([len(s.camera) for s in scans])) if scans else 0.0
    return [_row("learning_rate", point, seed, "mog", rep, tr, q_threshold=cfg.learning.q_threshold,
                 detections_per_scan=per_scan)]


def write_masks(masks, directory):
    """One binary PGM per scan, ``mask_<scan>.pgm``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in sorted(masks):
        write_pgm(masks[t], directory / f"mask_{t:05d}.pgm")


def track_errors(track, truth_positions):
    """RMSE of one best-particle track against its device's truth."""
    est = {s.scan: (s.x, s.y) for s in track.states}
    truth = {t: truth_positions[t, track.device_id] for t in est}
    return compute_rmse(truth, est)


def job_quality(cfg, point, seed):
    cfg = _cfg(cfg)
    overrides, (dp, dn) = QUALITY_LEVELS[int(point)]
    sc = generate_scenario(cfg.scenario_config(seed, **overrides))
    model = sc.radio_model.shifted(dp, dn) if (dp or dn) else sc.radio_model
    tr = MultiTargetTracker(model, cfg.tracker_config(seed=seed)).fit(sc.scans)
    rows = []
    for i, track in enumerate(tracks_from_history(tr.history_)):
        rows.append({"experiment": "quality", "point": point, "seed": seed,
                     "variant": f"track{i}", "status": "ok", "device_id": track.device_id,
                     "T": track.T, "Q": track.Q,
                     "rmse": track_errors(track, sc.truth.positions)})
    return rows


def job_step_learning(cfg, point, seed):
    cfg = _cfg(cfg)
    sc = generate_scenario(cfg.scenario_config(seed))
    tr, rep = track_scenario(sc, sc.radio_model, cfg.tracker_config(seed=seed),
                             burn_in=cfg.experiment.burn_in)
    _, steps, qualified = learn_from_run(tr, sc.scans, sc.radio_model, cfg.learning, radio=False)
    rows = []
    for d in sc.truth.device_ids:
        state = steps.get(d) or StepModelState()
        p = state.personal
        true_slope, true_icpt = sc.truth.personal[d]
        rows.append({"experiment": "step_learning", "point": point, "seed": seed,
                     "variant": f"device{d}", "status": "ok", "device_id": d,
                     "true_slope": float(true_slope), "true_intercept": float(true_icpt),
                     "slope": p.slope if p else float("nan"),
                     "intercept": p.intercept if p else float("nan"),
                     "r2": p.r_squared if p else float("nan"),
                     "personal": int(state.uses_personal),
                     "qualified": sum(q.device_id == d for q in qualified)})
    return rows


def job_crossing(cfg, point, seed):
    cfg = _cfg(cfg)
    sc = generate_scenario(cfg.scenario_config(seed))
    tr, rep = track_scenario(sc, sc.radio_model, cfg.tracker_config(seed=seed),
                             burn_in=cfg.experiment.burn_in)
    sep = crossing_separation(sc)
    return [_row("crossing", point, seed, "multimodal", rep, tr, q_threshold=cfg.learning.q_threshold,
                 min_separation_db=sep)]


def close_approaches(positions, a=0, b=1, within=3.0):
    """Scans where two agents reach a local minimum of distance below ``within``."""
    d = np.hypot(*(positions[:, a] - positions[:, b]).T)
    return [t for t in range(1, len(d) - 1) if d[t] < d[t - 1] and d[t] <= d[t + 1] and d[t] < within]


def crossing_separation(scenario, within=3.0):
    """Smallest expected-RSS distance (dB, Euclidean over APs) at any close approach."""
    p = scenario.truth.positions
    m = scenario.radio_model
    ts = close_approaches(p, within=within)
    if not ts:
        return float("inf")
    return float(min(np.linalg.norm(m.expected(p[t, 0]) - m.expected(p[t, 1])) for t in ts))


JOBS = {"single": job_single, "ablation": job_ablation, "occlusion": job_occlusion,
        "heading": job_heading, "sfm": job_sfm, "visual_noise": job_visual_noise,
        "learning_rate": job_learning_rate, "quality": job_quality,
        "step_learning": job_step_learning, "crossing": job_crossing}


# orchestration ----------------------------------------------------------

def resolve_threads(threads=None):
    env = os.environ.get("SITETRACKER_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            pass
    return max(1, int(threads or 1))


def _points(cfg):
    ex = cfg.experiment
    if ex.points:
        return tuple(ex.points)
    if ex.kind == "learning_rate":
        return tuple(cfg.learning.alpha_grid)
    return DEFAULT_POINTS[ex.kind]


def _run_job(args):
    kind, data, point, seed, opts = args
    try:
        return JOBS[kind](data, point, seed, **opts), None
    except (SiteTrackerError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        row = {"experiment": kind, "point": point, "seed": seed, "variant": "",
               "status": f"error: {type(exc).__name__}: {exc}"}
        return [row], f"{kind} point={point} seed={seed}: {exc}"


def _small(cfg):
    data = cfg.to_dict()
    data["experiment"]["seeds"] = list(SMALL["seeds"])
    data["experiment"]["n_scans"] = SMALL["n_scans"]
    if cfg.experiment.kind == "learning_rate":
        data["learning"]["alpha_grid"] = [0.002, 0.0032, 0.005]
    return parse_config(data)


def run_experiment(config, out=None, threads=1, dump_masks=None):
    """Run one experiment kind; writes ``runs.csv`` and ``summary.json`` into ``out``.

    ``dump_masks`` is a directory that receives the foreground masks of
    experiments that run the detector on rendered frames.
    """
    cfg = _cfg(config)
    if cfg.experiment.kind == "suite":
        return run_suite(cfg, out, threads, dump_masks)
    if cfg.experiment.scale == "small":
        cfg = _small(cfg)
    kind = cfg.experiment.kind
    data = cfg.to_dict()
    points = _points(cfg)
    opts = {"dump_masks": str(dump_masks)} if dump_masks is not None and kind == "learning_rate" else {}
    if kind == "ablation":
        # stages of one seed depend on each other, so a job covers a whole seed
        jobs = [(kind, data, tuple(points), s, opts) for s in cfg.experiment.seeds]
    else:
        jobs = [(kind, data, p, s, opts) for p in points for s in cfg.experiment.seeds]
    n = resolve_threads(threads)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    rows, errors = [], []
    for r, err in results:
        rows.extend(r)
        if err:
            errors.append(err)
    cdfs = {}
    for r in rows:
        e = r.pop("_errors", None)
        if e is not None:
            cdfs.setdefault(r["point"], []).append(np.asarray(e))
    cdfs = {k: np.sort(np.concatenate(v)) for k, v in cdfs.items()}
    res = ExperimentResult(kind, rows, summarize(kind, rows, points), errors, cdfs)
    if out is not None:
        write_result(res, out)
    return res


def run_suite(cfg, out=None, threads=1, dump_masks=None):
    """Every experiment kind at small scale, each into its own subdirectory."""
    results = {}
    for kind in JOBS:
        data = cfg.to_dict()
        data["experiment"]["kind"] = kind
        data["experiment"]["scale"] = "small"
        data["experiment"]["points"] = []
        data["experiment"]["preset"] = _SUITE_PRESETS.get(kind, cfg.experiment.preset)
        sub = None if out is None else Path(out) / kind
        results[kind] = run_experiment(parse_config(data), sub, threads, dump_masks)
    rows = [r for res in results.values() for r in res.rows]
    errors = [e for res in results.values() for e in res.errors]
    summary = {k: r.summary for k, r in results.items()}
    res = ExperimentResult("suite", rows, summary, errors)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(out) / "summary.json", summary)
    return res


_SUITE_PRESETS = {"sfm": "corridor", "learning_rate": "mog_sequence", "crossing": "crossing"}


def _mean(vals):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else float("nan")


def summarize(kind, rows, points):
    ok = [r for r in rows if r.get("status") == "ok"]
    s = {"kind": kind, "runs": len(rows), "failed": len(rows) - len(ok)}
    if kind == "quality":
        q = [r["Q"] for r in ok]
        e = [r["rmse"] for r in ok]
        s["tracks"] = len(ok)
        s["spearman_q_rmse"] = float(spearmanr(q, e)[0]) if len(ok) > 2 else float("nan")
        return s
    if kind == "step_learning":
        rel = [abs(r["slope"] - r["true_slope"]) / abs(r["true_slope"]) for r in ok
               if math.isfinite(r["slope"])]
        s["max_relative_slope_error"] = float(max(rel)) if rel else float("nan")
        s["min_r2"] = _mean([]) if not ok else float(np.nanmin([r["r2"] for r in ok]))
        s["all_personal"] = bool(ok) and all(r["personal"] for r in ok)
        return s
    per = {}
    for p in points:
        sel = [r for r in ok if r["point"] == p]
        variants = sorted({r["variant"] for r in sel})
        per[fmt(p)] = {v: {"rmse": _mean([r["rmse"] for r in sel if r["variant"] == v]),
                           "p90": _mean([r["p90"] for r in sel if r["variant"] == v]),
                           "id_swaps": int(sum(r.get("id_swaps", 0) for r in sel if r["variant"] == v))}
                       for v in variants}
    s["points"] = per
    if kind == "learning_rate":
        cqs = {p: _mean([r["cqs"] for r in ok if r["point"] == p]) for p in points}
        rmse = {p: _mean([r["rmse"] for r in ok if r["point"] == p]) for p in points}
        s["best_cqs_alpha"] = max(points, key=lambda p: (cqs[p], -p))
        s["best_rmse_alpha"] = min(points, key=lambda p: (rmse[p], p))
        grid = sorted(points)
        s["grid_steps_apart"] = abs(grid.index(s["best_cqs_alpha"]) - grid.index(s["best_rmse_alpha"]))
    if kind == "heading":
        means = [per[fmt(p)].get("multimodal", {}).get("rmse", float("nan")) for p in points]
        s["spearman_bias_rmse"] = float(spearmanr(points, means)[0]) if len(points) > 2 else float("nan")
    return s


def _write_json(path, obj):
    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, (np.floating, float)):
            return None if not math.isfinite(o) else round(float(o), 6)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o
    Path(path).write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")


def write_result(res, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    extra = []
    for r in res.rows:
        for k in r:
            if k not in RUN_COLUMNS and k not in extra:
                extra.append(k)
    cols = list(RUN_COLUMNS) + extra
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in res.rows:
            w.writerow([fmt(r[c]) if c in r else "" for c in cols])
    for label, errs in sorted(res.cdfs.items()):
        write_cdf(out / f"cdf_{label}.csv", errs)
    _write_json(out / "summary.json", res.summary)


def write_cdf(path, errors):
    e = np.sort(np.asarray(errors, dtype=float))
    n = len(e)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["error", "cdf"])
        for i, v in enumerate(e):
            w.writerow([f"{v:.6f}", f"{(i + 1) / n:.6f}"])
