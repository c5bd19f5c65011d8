"""Mixture-of-Gaussians foreground detection on grayscale frames.

Each pixel keeps K weighted 1-D Gaussians. Components are ranked by
weight / sigma and the first B* whose cumulative weight exceeds the
background prior form the background model.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DimensionMismatch

N_COMPONENTS = 5
BACKGROUND_RATIO = 0.82
LEARNING_RATE = 0.0032
INIT_VAR = 225.0
MIN_VAR = 4.0
MATCH_SIGMAS = 2.5
MIN_AREA = 9


class PixelClass(Enum):
    BACKGROUND = 0
    FOREGROUND = 1


@dataclass(frozen=True)
class PixelModel:
    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")
        if np.any(np.asarray(self.variances, dtype=float) < MIN_VAR - 1e-12):
            raise ValueError(f"variances must be at least {MIN_VAR}")
        for name in ("weights", "means", "variances"):
            object.__setattr__(self, name, tuple(map(float, getattr(self, name))))

    @classmethod
    def initial(cls, value, k=N_COMPONENTS, init_var=INIT_VAR):
        w = [1.0] + [0.0] * (k - 1)
        return cls(w, [float(value)] + [0.0] * (k - 1), [init_var] * k)


def background_count(sorted_weights, background_ratio=BACKGROUND_RATIO):
    """Smallest B with the sum of the first B weights strictly above the prior."""
    c = np.cumsum(sorted_weights)
    idx = np.nonzero(c > background_ratio)[0]
    return int(idx[0]) + 1 if len(idx) else len(sorted_weights)


def _update(w, mu, var, x, alpha, background_ratio, init_var, min_var, match_sigmas):
    """Vectorized update over the leading axes; components on the last axis.

    Returns (foreground mask, w, mu, var) with fresh arrays.
    """
    x = x[..., None]
    sd = np.sqrt(var)
    z = np.abs(x - mu) / sd
    live = w > 0
    within = (z <= match_sigmas) & live
    z_masked = np.where(within, z, np.inf)
    k_match = np.argmin(z_masked, axis=-1)
    matched = np.isfinite(np.take_along_axis(z_masked, k_match[..., None], -1)[..., 0])

    onehot = np.zeros(w.shape, dtype=bool)
    np.put_along_axis(onehot, k_match[..., None], True, -1)
    onehot &= matched[..., None]

    w = (1.0 - alpha) * w + alpha * onehot
    rho = np.where(onehot, alpha / np.where(w > 0, w, 1.0), 0.0)
    rho = np.minimum(rho, 1.0)
    mu = mu + rho * (x - mu)
    var = np.maximum((1.0 - rho) * var + rho * (x - mu) ** 2, min_var)

    # unmatched pixels: evict the weakest component
    k_low = np.argmin(w, axis=-1)
    evict = np.zeros(w.shape, dtype=bool)
    np.put_along_axis(evict, k_low[..., None], True, -1)
    evict &= ~matched[..., None]
    w = np.where(evict, alpha, w)
    mu = np.where(evict, x, mu)
    var = np.where(evict, init_var, var)
    w = w / w.sum(-1, keepdims=True)

    # background = top components by weight/sigma until cumulative weight > prior
    order = np.argsort(-(w / np.sqrt(var)), axis=-1, kind="stable")
    ws = np.take_along_axis(w, order, -1)
    csum = np.cumsum(ws, axis=-1)
    before = csum - ws
    is_bg_sorted = before <= background_ratio  # includes the component that crosses
    rank = np.argsort(order, axis=-1, kind="stable")
    is_bg = np.take_along_axis(is_bg_sorted, rank, -1)
    chosen = np.where(matched[..., None], onehot, evict)
    fg = ~np.any(chosen & is_bg, axis=-1)
    return fg, w, mu, var


def mog_update_pixel(model, value, alpha, background_ratio=BACKGROUND_RATIO,
                     init_var=INIT_VAR, min_var=MIN_VAR, match_sigmas=MATCH_SIGMAS):
    """Update one pixel's mixture with ``value``; returns (PixelClass, new PixelModel)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("learning rate must lie in (0, 1)")
    fg, w, mu, var = _update(np.array(model.weights), np.array(model.means),
                             np.array(model.variances), np.asarray(float(value)), alpha,
                             background_ratio, init_var, min_var, match_sigmas)
    cls = PixelClass.FOREGROUND if bool(fg) else PixelClass.BACKGROUND
    return cls, PixelModel(w, mu, var)


@dataclass
class MixtureState:
    """Per-pixel mixtures for a whole frame, components on the last axis."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def initial(cls, frame, k=N_COMPONENTS, init_var=INIT_VAR):
        frame = np.asarray(frame, dtype=float)
        w = np.zeros(frame.shape + (k,))
        w[..., 0] = 1.0
        mu = np.zeros_like(w)
        mu[..., 0] = frame
        return cls(w, mu, np.full_like(w, init_var))

    @property
    def shape(self):
        return self.weights.shape[:-1]

    def pixel(self, r, c):
        return PixelModel(self.weights[r, c], self.means[r, c], self.variances[r, c])


def classify_frame(models, frame, alpha, background_ratio=BACKGROUND_RATIO,
                   init_var=INIT_VAR, min_var=MIN_VAR, match_sigmas=MATCH_SIGMAS):
    """Apply :func:`mog_update_pixel` to every pixel; returns (mask, new MixtureState)."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != models.shape:
        raise DimensionMismatch(f"frame {frame.shape} does not match model grid {models.shape}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("learning rate must lie in (0, 1)")
    fg, w, mu, var = _update(models.weights, models.means, models.variances, frame, alpha,
                             background_ratio, init_var, min_var, match_sigmas)
    return fg, MixtureState(w, mu, var)


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def extract_detections(mask, min_area=MIN_AREA):
    """Centroids ``(x, y) = (column, row)`` of 4-connected blobs of at least ``min_area`` pixels."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    labels, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    idx = np.arange(1, n + 1)
    areas = ndimage.sum_labels(mask, labels, idx)
    keep = idx[areas >= min_area]
    if len(keep) == 0:
        return []
    cents = ndimage.center_of_mass(mask, labels, keep)
    return [(float(c), float(r)) for r, c in cents]


def write_pgm(mask, path):
    """Write a binary mask as an 8-bit binary PGM (foreground = 255)."""
    mask = np.asarray(mask)
    img = np.where(mask.astype(bool), 255, 0).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


class MixtureForegroundDetector(TransformerMixin, BaseEstimator):
    """Stateful background subtractor with an sklearn-style surface.

    ``fit(frames)`` initializes from the first frame and learns over the rest;
    ``apply(frame)`` (or ``transform`` over a sequence) classifies and keeps learning.
    """

    def __init__(self, n_components=N_COMPONENTS, learning_rate=LEARNING_RATE,
                 background_ratio=BACKGROUND_RATIO, init_var=INIT_VAR, min_var=MIN_VAR,
                 match_sigmas=MATCH_SIGMAS):
        self.n_components = n_components
        self.learning_rate = learning_rate
        self.background_ratio = background_ratio
        self.init_var = init_var
        self.min_var = min_var
        self.match_sigmas = match_sigmas

    def _init(self, frame):
        self.state_ = MixtureState.initial(frame, self.n_components, self.init_var)
        self.n_frames_ = 1

    def fit(self, frames, y=None):
        frames = list(frames)
        self._init(frames[0])
        for f in frames[1:]:
            self.apply(f)
        return self

    def apply(self, frame):
        if not hasattr(self, "state_"):
            self._init(frame)
            return np.zeros(np.shape(frame), dtype=bool)
        mask, self.state_ = classify_frame(self.state_, frame, self.learning_rate,
                                           self.background_ratio, self.init_var,
                                           self.min_var, self.match_sigmas)
        self.n_frames_ += 1
        return mask

    def transform(self, frames):
        return np.array([self.apply(f) for f in frames])
