"""Log-distance path-loss radio model.

Forward RSS prediction, per-access-point least-squares fitting and a grid
maximum-likelihood locator used as the radio-only baseline.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateGeometry, EmptyGrid, OutOfBand
from .validation import as_point, as_points

MIN_DISTANCE = 0.1
EXPONENT_BAND = (0.5, 8.0)
DEFAULT_REF_POWER = -40.0
DEFAULT_EXPONENT = 2.5


@dataclass(frozen=True)
class AccessPoint:
    id: int
    position: tuple
    ref_power: float = DEFAULT_REF_POWER
    path_loss_exponent: float = DEFAULT_EXPONENT

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(as_point(self.position, "AP position")))
        n = float(self.path_loss_exponent)
        if not EXPONENT_BAND[0] < n < EXPONENT_BAND[1]:
            raise OutOfBand(f"path-loss exponent {n} outside {EXPONENT_BAND}", exponent=n)
        object.__setattr__(self, "path_loss_exponent", n)
        object.__setattr__(self, "ref_power", float(self.ref_power))
        object.__setattr__(self, "id", int(self.id))


@dataclass(frozen=True)
class RssSample:
    location: tuple
    rss: float


@dataclass(frozen=True)
class RadioModel:
    """Ordered access points; index ``i`` is position ``i`` of every RSS vector.

    Instances are immutable: re-fitting produces a new model.
    """

    access_points: tuple = field(default_factory=tuple)

    def __post_init__(self):
        aps = tuple(self.access_points)
        ids = [ap.id for ap in aps]
        if len(set(ids)) != len(ids):
            raise ValueError("access point ids must be unique")
        object.__setattr__(self, "access_points", aps)

    def __len__(self):
        return len(self.access_points)

    @property
    def positions(self):
        return np.array([ap.position for ap in self.access_points], dtype=float).reshape(-1, 2)

    @property
    def ref_powers(self):
        return np.array([ap.ref_power for ap in self.access_points], dtype=float)

    @property
    def exponents(self):
        return np.array([ap.path_loss_exponent for ap in self.access_points], dtype=float)

    def expected(self, x):
        """Expected RSS of every AP at points ``x`` (..., 2) -> (..., m)."""
        return expected_rss_array(self.positions, self.ref_powers, self.exponents, x)

    def with_parameters(self, index, ref_power, exponent):
        aps = list(self.access_points)
        aps[index] = replace(aps[index], ref_power=ref_power, path_loss_exponent=exponent)
        return RadioModel(tuple(aps))

    def shifted(self, d_power=0.0, d_exponent=0.0):
        return RadioModel(tuple(
            replace(ap, ref_power=ap.ref_power + d_power,
                    path_loss_exponent=ap.path_loss_exponent + d_exponent)
            for ap in self.access_points))

    @classmethod
    def from_positions(cls, positions, ref_power=DEFAULT_REF_POWER, exponent=DEFAULT_EXPONENT):
        pos = as_points(positions, "AP positions")
        return cls(tuple(AccessPoint(i, p, ref_power, exponent) for i, p in enumerate(pos)))

    # serialization: one JSON record per line, ordering preserved
    def dumps(self):
        return "".join(
            json.dumps({"id": ap.id, "x": ap.position[0], "y": ap.position[1],
                        "P": ap.ref_power, "n": ap.path_loss_exponent}) + "\n"
            for ap in self.access_points)

    @classmethod
    def loads(cls, text):
        aps = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rec = json.loads(line)
            aps.append(AccessPoint(rec["id"], (rec["x"], rec["y"]), rec["P"], rec["n"]))
        return cls(tuple(aps))

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


def expected_rss_array(positions, ref_powers, exponents, x):
    x = np.asarray(x, dtype=float)
    d = np.sqrt(((x[..., None, :] - positions) ** 2).sum(-1))
    d = np.maximum(d, MIN_DISTANCE)
    return ref_powers - 10.0 * exponents * np.log10(d)


def expected_rss(ap, x):
    """Expected RSS (dBm) of a single access point at ``x``.

    Distances below 0.1 m are clamped, so the function is total.
    """
    d = max(float(np.linalg.norm(np.asarray(ap.position) - as_point(x))), MIN_DISTANCE)
    return ap.ref_power - 10.0 * ap.path_loss_exponent * np.log10(d)


def _fit_loglinear(distances, rss):
    d = np.maximum(np.asarray(distances, dtype=float), MIN_DISTANCE)
    rss = np.asarray(rss, dtype=float)
    if len(d) < 2:
        raise DegenerateGeometry("need at least 2 samples")
    z = -10.0 * np.log10(d)
    zc = z - z.mean()
    sxx = zc @ zc
    if sxx <= 1e-12 * max(1.0, len(z)):
        raise DegenerateGeometry("all samples are equidistant from the access point")
    n = (zc @ (rss - rss.mean())) / sxx
    p = rss.mean() - n * z.mean()
    resid = rss - (p + n * z)
    return float(p), float(n), float(np.sqrt(np.mean(resid ** 2)))


def fit_path_loss(samples, ap_position):
    """Least-squares fit of reference power and path-loss exponent.

    Parameters
    ----------
    samples : iterable of RssSample, or tuple (locations (n, 2), rss (n,))
    ap_position : 2-D point

    Returns
    -------
    (P, n, rms_residual)

    Raises
    ------
    DegenerateGeometry
        Fewer than two distinct distances.
    OutOfBand
        Fitted exponent outside (0.5, 8.0); the caller should keep its model.
    """
    if isinstance(samples, tuple) and len(samples) == 2:
        locs, rss = samples
        locs = as_points(locs, "locations")
    else:
        samples = list(samples)
        locs = as_points([s.location for s in samples], "locations", allow_empty=True)
        rss = [s.rss for s in samples]
    d = np.sqrt(((locs - as_point(ap_position)) ** 2).sum(1))
    p, n, rms = _fit_loglinear(d, rss)
    if not EXPONENT_BAND[0] < n < EXPONENT_BAND[1]:
        raise OutOfBand(f"fitted exponent {n:.3f} outside {EXPONENT_BAND}", p, n)
    return p, n, rms


@dataclass(frozen=True)
class Grid:
    """Axis-aligned search grid; cells are ``cell`` meters wide."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    cell: float

    def centers(self):
        if self.cell <= 0 or self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise EmptyGrid("grid has no cells")
        nx = int(np.floor((self.xmax - self.xmin) / self.cell + 1e-9))
        ny = int(np.floor((self.ymax - self.ymin) / self.cell + 1e-9))
        if nx < 1 or ny < 1:
            raise EmptyGrid("grid has no cells")
        xs = self.xmin + self.cell * (np.arange(nx) + 0.5)
        ys = self.ymin + self.cell * (np.arange(ny) + 0.5)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        return np.c_[gx.ravel(), gy.ravel()]


def rss_log_likelihood(model, rss_vector, points, sigma=3.2):
    """Gaussian log-likelihood (up to a constant) of an RSS vector at each point.

    Missing entries (NaN) are ignored.
    """
    r = np.asarray(rss_vector, dtype=float)
    if r.shape != (len(model),):
        raise ValueError(f"rss vector has length {r.shape}, model has {len(model)} APs")
    mask = np.isfinite(r)
    exp = model.expected(points)[..., mask]
    return -((r[mask] - exp) ** 2).sum(-1) / (2.0 * sigma ** 2)


def radio_only_locate(model, rss_vector, grid, sigma=3.2):
    """Grid maximum-likelihood position from one RSS vector (ties -> first cell)."""
    pts = grid.centers()
    ll = rss_log_likelihood(model, rss_vector, pts, sigma)
    return pts[int(np.argmax(ll))]


class PathLossRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper of :func:`fit_path_loss` for one access point.

    ``X`` holds sample locations (n, 2); ``y`` the RSS readings.
    """

    def __init__(self, ap_position=(0.0, 0.0)):
        self.ap_position = ap_position

    def fit(self, X, y):
        self.ref_power_, self.exponent_, self.rms_residual_ = fit_path_loss(
            (as_points(X), np.asarray(y, dtype=float)), self.ap_position)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        X = as_points(X)
        d = np.maximum(np.sqrt(((X - as_point(self.ap_position)) ** 2).sum(1)), MIN_DISTANCE)
        return self.ref_power_ - 10.0 * self.exponent_ * np.log10(d)


class RadioOnlyLocator(BaseEstimator):
    """Radio-only baseline: grid maximum likelihood per RSS vector."""

    def __init__(self, model=None, grid=None, sigma=3.2):
        self.model = model
        self.grid = grid
        self.sigma = sigma

    def fit(self, X=None, y=None):
        if self.model is None or self.grid is None:
            raise ValueError("RadioOnlyLocator needs a model and a grid")
        self.centers_ = self.grid.centers()
        return self

    def predict(self, X):
        check_is_fitted(self, "centers_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((len(X), 2))
        for i, r in enumerate(X):
            out[i] = self.centers_[int(np.argmax(
                rss_log_likelihood(self.model, r, self.centers_, self.sigma)))]
        return out
