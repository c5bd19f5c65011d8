"""Camera-only baseline: particle filter over anonymous detections.

Targets have no identity link to radio, so they are seeded from known
starting positions and never born or killed. Each target follows a
constant-velocity model; its per-particle state is a 4-D Kalman filter.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .filter import effective_sample_size, systematic_indices


@dataclass
class VisionOnlyConfig:
    particles: int = 100
    pd: float = 0.9
    clutter_prior: float = 0.3
    clutter_density: float = 0.03
    dt: float = 0.5
    accel_sigma: float = 1.0       # white-acceleration strength [m/s^2]
    camera_sigma: float = 0.2
    init_variance: float = 0.25
    resample_threshold: float = 0.5
    area: tuple = None             # (xmin, xmax, ymin, ymax); coasting tracks stop at its edge
    seed: int = 0


def _cv_matrices(dt, q):
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    G = np.array([[0.5 * dt ** 2, 0], [0, 0.5 * dt ** 2], [dt, 0], [0, dt]])
    return F, q ** 2 * G @ G.T


H = np.hstack([np.eye(2), np.zeros((2, 2))])


def _confine(mean, area):
    """Clip positions to the area and zero the velocity component that left it."""
    xmin, xmax, ymin, ymax = area
    for i, (lo, hi) in enumerate(((xmin, xmax), (ymin, ymax))):
        out = (mean[..., i] < lo) | (mean[..., i] > hi)
        mean[..., i] = np.clip(mean[..., i], lo, hi)
        mean[..., 2 + i] = np.where(out, 0.0, mean[..., 2 + i])


class VisionOnlyTracker(BaseEstimator):
    """``fit(scans, initial_positions)`` with ``initial_positions`` a dict id -> (x, y)."""

    def __init__(self, config=None):
        self.config = config

    def fit(self, scans, initial_positions=None):
        cfg = self.config if self.config is not None else VisionOnlyConfig()
        ids = sorted(initial_positions or {})
        K, N = len(ids), cfg.particles
        rng = np.random.default_rng(cfg.seed)
        F, Q = _cv_matrices(cfg.dt, cfg.accel_sigma)
        R = cfg.camera_sigma ** 2 * np.eye(2)
        mean = np.zeros((N, K, 4))
        for k, d in enumerate(ids):
            mean[:, k, :2] = initial_positions[d]
        cov = np.broadcast_to(np.diag([cfg.init_variance] * 2 + [1.0, 1.0]), (N, K, 4, 4)).copy()
        log_w = np.full(N, -np.log(N))
        log_c = np.log(cfg.clutter_prior) + np.log(cfg.clutter_density)
        self.estimates_ = []
        for scan in scans:
            mean = mean @ F.T
            cov = F @ cov @ F.T + Q
            if cfg.area is not None:
                _confine(mean, cfg.area)
            used = np.zeros((N, K), dtype=bool)
            for c in scan.camera:
                u = rng.random(N)
                if K == 0:
                    log_w += log_c
                    continue
                S = cov[..., :2, :2] + R
                r = c - mean[..., :2]
                Sinv = np.linalg.inv(S)
                maha = np.einsum("nki,nkij,nkj->nk", r, Sinv, r)
                logdet = np.log(np.linalg.det(S))
                n_free = np.maximum((~used).sum(1), 1)
                log_prior = np.log((1 - cfg.clutter_prior) * cfg.pd / n_free)[:, None]
                lt = np.where(used, -np.inf, log_prior - 0.5 * (maha + logdet) - np.log(2 * np.pi))
                logits = np.concatenate([np.full((N, 1), log_c), lt], axis=1)
                top = logits.max(1, keepdims=True)
                p = np.exp(logits - top)
                z = p.sum(1)
                log_w += np.log(z) + top[:, 0]
                cdf = np.cumsum(p / z[:, None], axis=1)
                choice = (u[:, None] > cdf).sum(1)  # 0 = clutter
                sel = np.nonzero(choice > 0)[0]
                if len(sel):
                    k = choice[sel] - 1
                    P = cov[sel, k]
                    Kg = P @ H.T @ Sinv[sel, k]
                    mean[sel, k] = mean[sel, k] + (Kg @ r[sel, k][..., None])[..., 0]
                    cov[sel, k] = P - Kg @ H @ P
                    used[sel, k] = True
            log_w -= log_w.max()
            w = np.exp(log_w)
            w /= w.sum()
            i = int(np.argmax(w))
            self.estimates_.append((scan.t, {d: mean[i, k, :2].copy() for k, d in enumerate(ids)}))
            if effective_sample_size(w) < cfg.resample_threshold * N:
                idx = systematic_indices(w, rng)
                mean, cov = mean[idx], cov[idx]
                log_w = np.full(N, -np.log(N))
            else:
                log_w = np.log(w)
        return self

    def trajectories(self):
        out = {}
        for t, est in self.estimates_:
            for d, p in est.items():
                out.setdefault(d, {})[t] = (float(p[0]), float(p[1]))
        return out
