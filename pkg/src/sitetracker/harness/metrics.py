"""Trajectory error metrics."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import EmptySamples, NoOverlap


def _as_track(track):
    """Accept dict scan -> point or a (T, 2) array (NaN rows = missing)."""
    if isinstance(track, dict):
        return {int(t): np.asarray(p, dtype=float) for t, p in track.items()}
    arr = np.asarray(track, dtype=float).reshape(-1, 2)
    return {t: arr[t] for t in range(len(arr)) if np.all(np.isfinite(arr[t]))}


def matched_errors(truth, estimates):
    """Euclidean errors on scans present in both tracks, in scan order."""
    tr, es = _as_track(truth), _as_track(estimates)
    common = sorted(set(tr) & set(es))
    return np.array([np.hypot(*(es[t] - tr[t])) for t in common])


def compute_rmse(truth, estimates):
    e = matched_errors(truth, estimates)
    if len(e) == 0:
        raise NoOverlap("truth and estimates share no scans")
    return float(np.sqrt(np.mean(e ** 2)))


class ErrorCdf:
    """Sorted error samples with linearly interpolated percentiles."""

    def __init__(self, errors):
        e = np.sort(np.asarray(errors, dtype=float).ravel())
        if len(e) == 0:
            raise EmptySamples("no error samples")
        self.samples = e

    def percentile(self, p):
        """``p`` in [0, 1]."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        return float(np.quantile(self.samples, p, method="linear"))

    def __len__(self):
        return len(self.samples)


def error_cdf(errors):
    return ErrorCdf(errors)


def count_id_swaps(truth, estimates, radius=1.0):
    """Scans where a device's estimate sits near another agent but not near its own.

    ``truth`` maps agent id -> track (devices and non-device agents alike);
    ``estimates`` maps device id -> track.
    """
    tr = {a: _as_track(v) for a, v in truth.items()}
    swaps = 0
    for d, est in estimates.items():
        es = _as_track(est)
        own = tr.get(d, {})
        for t, p in es.items():
            if t not in own:
                continue
            if np.hypot(*(p - own[t])) <= radius:
                continue
            for a, other in tr.items():
                if a != d and t in other and np.hypot(*(p - other[t])) <= radius:
                    swaps += 1
                    break
    return swaps


@dataclass
class MetricsReport:
    rmse: dict = field(default_factory=dict)        # device -> meters
    coverage: dict = field(default_factory=dict)    # device -> fraction of truth scans estimated
    errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    id_swaps: int = 0

    @property
    def pooled_rmse(self):
        return float(np.sqrt(np.mean(self.errors ** 2))) if len(self.errors) else float("nan")

    def percentile(self, p):
        return ErrorCdf(self.errors).percentile(p) if len(self.errors) else float("nan")

    def summary(self):
        return {
            "rmse": self.pooled_rmse,
            "p50": self.percentile(0.5),
            "p90": self.percentile(0.9),
            "id_swaps": self.id_swaps,
            "coverage": float(np.mean(list(self.coverage.values()))) if self.coverage else 0.0,
            "per_device_rmse": {str(k): v for k, v in sorted(self.rmse.items())},
        }


def evaluate(truth_positions, device_ids, trajectories, radius=1.0, start=0):
    """Metrics of ``trajectories`` (device -> scan -> point) against simulator truth.

    Scans before ``start`` are ignored (burn-in).
    """
    T = truth_positions.shape[0]
    rep = MetricsReport()
    pooled = []
    for d in device_ids:
        truth = {t: truth_positions[t, d] for t in range(start, T)}
        est = {t: p for t, p in trajectories.get(d, {}).items() if t >= start}
        e = matched_errors(truth, est)
        rep.coverage[d] = len(e) / max(len(truth), 1)
        if len(e):
            rep.rmse[d] = float(np.sqrt(np.mean(e ** 2)))
            pooled.append(e)
    rep.errors = np.concatenate(pooled) if pooled else np.zeros(0)
    all_truth = {a: {t: truth_positions[t, a] for t in range(start, T)}
                 for a in range(truth_positions.shape[1])}
    est = {d: {t: p for t, p in trajectories.get(d, {}).items() if t >= start} for d in device_ids}
    rep.id_swaps = count_id_swaps(all_truth, est, radius)
    return rep
