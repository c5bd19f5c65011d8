"""End-to-end acceptance runs at the tolerances of the build contract.

Each test records one PASS/FAIL line, repeated in the terminal summary.
"""

import filecmp
import itertools
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from sitetracker.geometry import Correspondence, dlt_homography, reprojection_error
from sitetracker.harness import parse_config, run_experiment
from sitetracker.radio import AccessPoint, RadioModel, expected_rss, fit_path_loss
from sitetracker.tracker import (CLUTTER, AssociationEvent, Particle, ParticleSet,
                                 ScanMeasurements, TargetState, TrackerConfig, TrackerModels,
                                 association_prior, process_scan)
from sitetracker.ukf import GaussianState, ukf_update, unscented_transform

pytestmark = pytest.mark.slow


def experiment(data, out=None, threads=1):
    t0 = time.perf_counter()
    res = run_experiment(parse_config(data), out, threads)
    assert res.ok, res.errors
    return res, time.perf_counter() - t0


def ok_rows(res, **match):
    return [r for r in res.rows if r["status"] == "ok" and all(r[k] == v for k, v in match.items())]


# 1 ---------------------------------------------------------------------------

def _kalman_gap(rng, trials=1000):
    worst = 0.0
    for _ in range(trials):
        A = rng.normal(size=(2, 2))
        P = A @ A.T + 0.1 * np.eye(2)
        B = rng.normal(size=(2, 2))
        R = 0.2 * (B @ B.T + 0.1 * np.eye(2))
        H = rng.normal(size=(2, 2))
        m, y = rng.normal(size=2) * 5, rng.normal(size=2) * 5
        post, _, _ = ukf_update(GaussianState(m, P), y, lambda X: X @ H.T, R)
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        worst = max(worst, np.abs(post.mean - (m + K @ (y - H @ m))).max(),
                    np.abs(post.cov - (P - K @ S @ K.T)).max())
    return worst


def _path_loss_gap(rng):
    ap = AccessPoint(0, (1.0, 2.0), -38.0, 1.8)
    locs = rng.uniform(-20, 20, (50, 2))
    P, n, _ = fit_path_loss((locs, np.array([expected_rss(ap, x) for x in locs])), ap.position)
    return max(abs(P + 38.0), abs(n - 1.8))


def _dlt_gap(rng):
    H = np.array([[1.2, 0.1, 3.0], [-0.05, 0.9, -1.0], [0.001, 0.002, 1.0]])
    src = rng.uniform(0, 640, (8, 2))
    q = np.c_[src, np.ones(8)] @ H.T
    corr = [Correspondence(a, b) for a, b in zip(src, q[:, :2] / q[:, 2:])]
    est = dlt_homography(corr)
    return np.abs(est.h - H).max(), reprojection_error(est, corr)


def _association_tv():
    radio = RadioModel.from_positions([(0, 0), (10, 0), (0, 8), (10, 8)])
    cfg = TrackerConfig(particles=100_000, record_associations=True)
    pos = {0: np.array([3.0, 3.0]), 1: np.array([5.0, 3.5])}
    cov = np.eye(2) * 0.6
    tg = {d: TargetState(d, GaussianState(pos[d], cov), 0) for d in pos}
    ps = ParticleSet.from_particles([Particle(1.0, dict(tg)) for _ in range(cfg.particles)])
    scan = ScanMeasurements(1, [[3.6, 3.2], [4.3, 3.3]],
                            {0: radio.expected((3.4, 3.1)) + [2.0, -1.0, 0.0, 1.5],
                             1: radio.expected((4.6, 3.4)) + [-1.0, 1.0, -2.0, 0.0]})
    rep = process_scan(ps, scan, TrackerModels(radio), cfg, np.random.default_rng(11))
    jms = rep.measurements
    R = np.diag([0.04, 0.04] + [3.2 ** 2] * 4)

    def h(X):
        return np.concatenate([X, radio.expected(X)], axis=-1)

    mom = {d: unscented_transform(GaussianState(pos[d], cov + np.diag([0.09, 0.09])), h)[:2]
           for d in pos}
    lt, lc = [], []
    for jm in jms:
        ym, Pyy = mom[jm.device_id]
        V = Pyy + R
        lt.append(multivariate_normal(ym, V).pdf(jm.y))
        lc.append(cfg.clutter_density * multivariate_normal(ym[2:], V[2:, 2:]).pdf(jm.rss))
    owner = Particle(1.0, tg)
    mass = {}
    for seq in itertools.product([False, True], repeat=len(jms)):
        w, prev = 1.0, []
        for k, on in enumerate(seq):
            ev = AssociationEvent(jms[k].device_id) if on else CLUTTER
            w *= association_prior(owner, ev, prev, jms[k], cfg.clutter_prior, cfg.pd)
            w *= lt[k] if on else lc[k]
            prev.append((jms[k], ev))
        mass[seq] = w
    z = sum(mass.values())
    emp = dict.fromkeys(mass, 0.0)
    for row, w in zip(rep.events, rep.weights):
        emp[tuple(bool(e >= 0) for e in row)] += w
    return 0.5 * sum(abs(emp[s] - mass[s] / z) for s in mass)


def test_criterion_1_oracles(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    kf = _kalman_gap(rng)
    pl = _path_loss_gap(rng)
    h_err, reproj = _dlt_gap(rng)
    tv = _association_tv()
    dt = time.perf_counter() - t0
    ok = kf < 1e-8 and pl < 1e-9 and h_err < 1e-8 and reproj < 1e-12 and tv < 0.02 and dt < 60
    assert criterion(1, ok, f"UKF-KF {kf:.1e}, path loss {pl:.1e}, DLT {h_err:.1e}/{reproj:.1e}, "
                            f"association TV {tv:.4f}, {dt:.0f} s")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_identity_through_crossing(criterion):
    res, dt = experiment({"experiment": {"kind": "crossing", "preset": "crossing",
                                         "seeds": list(range(10))},
                          "tracker": {"particles": 100}})
    rows = ok_rows(res)
    swaps = sum(r["id_swaps"] for r in rows)
    sep = min(r["min_separation_db"] for r in rows)
    ok = len(rows) == 10 and swaps == 0 and sep >= 6.0 and dt < 60
    assert criterion(2, ok, f"{swaps} id swaps over {len(rows)} seeds, "
                            f"min RSS separation {sep:.1f} dB, {dt:.0f} s")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_radio_learning_ablation(criterion):
    res, dt = experiment({"experiment": {"kind": "ablation", "seeds": list(range(5)),
                                         "points": ["reference", "detector", "radio"],
                                         "n_scans": 1800}})
    p90 = {s: np.mean([r["p90"] for r in ok_rows(res, point=s)])
           for s in ("reference", "detector", "radio")}
    mis = p90["detector"] / p90["reference"]
    learned = p90["radio"] / p90["reference"]
    ok = mis >= 1.30 and learned <= 1.15 and dt < 300
    assert criterion(3, ok, f"p90 mis-specified/true {mis:.2f} (>= 1.30), learned/true "
                            f"{learned:.2f} (<= 1.15), {dt:.0f} s")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_occlusion_robustness(criterion):
    res, dt = experiment({"experiment": {"kind": "occlusion", "seeds": list(range(10)),
                                         "points": [0, 30], "n_scans": 400}})
    multi = {(r["point"], r["seed"]): r["rmse"] for r in ok_rows(res, variant="multimodal")}
    vision = {(r["point"], r["seed"]): r["rmse"] for r in ok_rows(res, variant="vision_only")}
    wins = sum(multi[(30, s)] < vision[(30, s)] for s in range(10))
    ratio = np.mean([multi[(30, s)] for s in range(10)]) / np.mean([multi[(0, s)] for s in range(10)])
    ok = wins >= 9 and ratio <= 2.0 and dt < 300
    assert criterion(4, ok, f"multimodal beats vision-only in {wins}/10 seeds, "
                            f"RMSE 30%/0% occlusion {ratio:.3f} (<= 2), {dt:.0f} s")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_heading_bias_sweep(criterion):
    from scipy.stats import spearmanr
    points = [0, 10, 20, 30, 50]
    res, dt = experiment({"experiment": {"kind": "heading", "seeds": list(range(5)),
                                         "points": points, "n_scans": 400}})
    rmse = {p: [r["rmse"] for r in ok_rows(res, point=p)] for p in points}
    worst = max(max(rmse[p]) for p in points if p <= 30)
    rho = spearmanr(points, [np.mean(rmse[p]) for p in points])[0]
    ok = worst < 1.0 and rho >= 0.8
    assert criterion(5, ok, f"worst RMSE at bias <= 30 deg {worst:.3f} m, Spearman {rho:.2f}, "
                            f"{dt:.0f} s")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_social_forces_in_corridor(criterion):
    res, dt = experiment({"experiment": {"kind": "sfm", "preset": "corridor",
                                         "seeds": list(range(10))}})
    off = np.mean([r["rmse"] for r in ok_rows(res, point="off")])
    on = np.mean([r["rmse"] for r in ok_rows(res, point="on")])
    ok = on <= 0.9 * off and dt < 300
    assert criterion(6, ok, f"RMSE off {off:.3f}, on {on:.3f}, ratio {on / off:.3f} (<= 0.9), "
                            f"{dt:.0f} s")


# 7 ---------------------------------------------------------------------------

def test_criterion_7_quality_score_validity(criterion):
    res, dt = experiment({"experiment": {"kind": "quality", "seeds": [0, 1], "n_scans": 300}})
    n, rho = res.summary["tracks"], res.summary["spearman_q_rmse"]
    ok = n >= 16 and rho <= -0.5
    assert criterion(7, ok, f"{n} tracks, Spearman(Q, RMSE) {rho:.3f} (<= -0.5), {dt:.0f} s")


# 8 ---------------------------------------------------------------------------

def test_criterion_8_learning_rate_search(criterion):
    res, dt = experiment({"experiment": {"kind": "learning_rate", "preset": "mog_sequence",
                                         "seeds": [0]}})
    s = res.summary
    ok = len(res.rows) == 7 and s["grid_steps_apart"] <= 1 and dt < 180
    assert criterion(8, ok, f"best CQS alpha {s['best_cqs_alpha']}, best RMSE alpha "
                            f"{s['best_rmse_alpha']}, {s['grid_steps_apart']} grid step(s) apart, "
                            f"{dt:.0f} s")


# 9 ---------------------------------------------------------------------------

def test_criterion_9_step_model_learning(criterion):
    res, dt = experiment({"experiment": {"kind": "step_learning", "seeds": [0, 1]},
                          "scenario": {"n_scans": 900, "camera": {"sigma": 0.0},
                                       "imu": {"frequency_noise": 0.01},
                                       "agents": {"step_noise": 0.002}}})
    s = res.summary
    ok = s["max_relative_slope_error"] <= 0.05 and s["min_r2"] >= 0.99 and s["all_personal"]
    assert criterion(9, ok, f"max slope error {100 * s['max_relative_slope_error']:.2f}%, "
                            f"min R^2 {s['min_r2']:.4f}, personal model active "
                            f"{s['all_personal']}, {dt:.0f} s")


# 10 --------------------------------------------------------------------------

def _csvs(root):
    return sorted(p.relative_to(root) for p in Path(root).rglob("*.csv"))


def test_criterion_10_suite_is_deterministic(criterion, tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    _, dt = experiment({"experiment": {"kind": "suite"}}, a, threads=1)
    monkeypatch.setenv("SITETRACKER_THREADS", "2")
    experiment({"experiment": {"kind": "suite"}}, b, threads=1)
    files = _csvs(a)
    same = files == _csvs(b) and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files)
    ok = same and len(files) > 0
    assert criterion(10, ok, f"{len(files)} CSV files byte-identical across reruns "
                             f"(1 and 2 workers): {same}, {dt:.0f} s per run")
