"""Image-plane to ground-plane homography estimation.

The estimator runs a normalized Direct Linear Transformation and, when more
than four correspondences are given, refines the result with Gauss-Newton on
the transfer error measured in the ground plane.
"""

from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateConfiguration, PointAtInfinity, TooFewPoints
from .validation import as_point, as_points

COLLINEAR_TOL = 1e-9
W_EPS = 1e-12


@dataclass(frozen=True)
class Correspondence:
    image_point: tuple
    world_point: tuple

    def __post_init__(self):
        object.__setattr__(self, "image_point", tuple(as_point(self.image_point, "image_point")))
        object.__setattr__(self, "world_point", tuple(as_point(self.world_point, "world_point")))


@dataclass(frozen=True)
class Homography:
    """A 3x3 projective map, scaled so that ``h[2, 2] == 1`` when possible."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise DegenerateConfiguration("homography must be a finite 3x3 matrix")
        if abs(h[2, 2]) > W_EPS:
            h = h / h[2, 2]
        else:
            h = h / np.linalg.norm(h)
        if abs(np.linalg.det(h)) <= 1e-12:
            raise DegenerateConfiguration("homography is singular")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def inverse(self):
        return Homography(np.linalg.inv(self.h))

    @classmethod
    def identity(cls):
        return cls(np.eye(3))


def _split(correspondences):
    if isinstance(correspondences, tuple) and len(correspondences) == 2:
        src, dst = correspondences
        return as_points(src, "image points"), as_points(dst, "world points")
    corr = list(correspondences)
    if not corr:
        return np.zeros((0, 2)), np.zeros((0, 2))
    src = np.array([c.image_point for c in corr], dtype=float)
    dst = np.array([c.world_point for c in corr], dtype=float)
    return src, dst


def _normalizer(pts):
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _apply(h, pts):
    ph = np.c_[pts, np.ones(len(pts))] @ h.T
    return ph[:, :2] / ph[:, 2:3], ph[:, 2]


def _twice_area(a, b, c):
    return abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _has_general_quad(pts):
    """True if some 4 of the points have no 3 collinear."""
    n = len(pts)
    # greedy first; exhaustive fallback only for small inputs
    for quad in combinations(range(n), 4) if n <= 12 else [_greedy_quad(pts)]:
        if quad is None:
            continue
        if all(_twice_area(*pts[list(tri)]) > COLLINEAR_TOL for tri in combinations(quad, 3)):
            return True
    return False


def _greedy_quad(pts):
    i0 = 0
    i1 = int(np.argmax(((pts - pts[i0]) ** 2).sum(1)))
    areas = np.array([_twice_area(pts[i0], pts[i1], p) for p in pts])
    i2 = int(np.argmax(areas))
    best, quad = -1.0, None
    for k in range(len(pts)):
        if k in (i0, i1, i2):
            continue
        m = min(_twice_area(*pts[list(t)]) for t in combinations((i0, i1, i2, k), 3))
        if m > best:
            best, quad = m, (i0, i1, i2, k)
    return quad


def _check_configuration(pts, which):
    n = len(pts)
    uniq = np.unique(np.round(pts, 12), axis=0)
    if len(uniq) < n:
        raise DegenerateConfiguration(f"duplicate {which} points")
    if n == 4:
        for tri in combinations(range(4), 3):
            if _twice_area(*pts[list(tri)]) <= COLLINEAR_TOL:
                raise DegenerateConfiguration(f"three {which} points are collinear")
    elif not _has_general_quad(pts):
        raise DegenerateConfiguration(f"{which} points are (nearly) collinear")


def _gauss_newton(hn, src, dst, max_iter, tol):
    """Minimize the transfer error of ``hn`` (with h33 fixed to 1) on normalized data."""
    p = (hn / hn[2, 2]).reshape(-1)[:8].copy()
    x, y = src[:, 0], src[:, 1]

    def residual(p):
        h = np.append(p, 1.0).reshape(3, 3)
        proj, w = _apply(h, src)
        return (proj - dst).reshape(-1), proj, w

    r, proj, w = residual(p)
    cost = r @ r
    for _ in range(max_iter):
        u, v = proj[:, 0], proj[:, 1]
        n = len(src)
        J = np.zeros((2 * n, 8))
        J[0::2, 0], J[0::2, 1], J[0::2, 2] = x / w, y / w, 1.0 / w
        J[1::2, 3], J[1::2, 4], J[1::2, 5] = x / w, y / w, 1.0 / w
        J[0::2, 6], J[0::2, 7] = -u * x / w, -u * y / w
        J[1::2, 6], J[1::2, 7] = -v * x / w, -v * y / w
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        p_new = p + step
        r_new, proj_new, w_new = residual(p_new)
        if np.any(np.abs(w_new) <= W_EPS):
            break
        cost_new = r_new @ r_new
        if cost_new > cost:
            break
        p, r, proj, w, cost = p_new, r_new, proj_new, w_new, cost_new
        if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(p)):
            break
    return np.append(p, 1.0).reshape(3, 3)


def dlt_homography(correspondences, refine=True, max_iter=50, tol=1e-10):
    """Estimate the homography mapping image points onto world points.

    Parameters
    ----------
    correspondences : list of Correspondence or tuple (image_points, world_points)
    refine : bool
        Run Gauss-Newton on the geometric error when more than 4 points are given.

    Returns
    -------
    Homography
    """
    src, dst = _split(correspondences)
    if len(src) != len(dst):
        raise DegenerateConfiguration("image and world point counts differ")
    if len(src) < 4:
        raise TooFewPoints(f"need at least 4 correspondences, got {len(src)}")
    t_src, t_dst = _normalizer(src), _normalizer(dst)
    s = _apply(t_src, src)[0]
    d = _apply(t_dst, dst)[0]
    _check_configuration(s, "image")
    _check_configuration(d, "world")

    n = len(s)
    A = np.zeros((2 * n, 9))
    x, y, u, v = s[:, 0], s[:, 1], d[:, 0], d[:, 1]
    A[0::2, 0:3] = np.c_[-x, -y, -np.ones(n)]
    A[0::2, 6:9] = np.c_[u * x, u * y, u]
    A[1::2, 3:6] = np.c_[-x, -y, -np.ones(n)]
    A[1::2, 6:9] = np.c_[v * x, v * y, v]
    _, sv, vt = np.linalg.svd(A)
    hn = vt[-1].reshape(3, 3)

    if refine and n > 4 and abs(hn[2, 2]) > 1e-8 * np.abs(hn).max():
        hn = _gauss_newton(hn, s, d, max_iter, tol)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    return Homography(h)


def project_point(h, p):
    """Map a 2-D point through ``h``; raises PointAtInfinity when w vanishes."""
    hm = h.h if isinstance(h, Homography) else np.asarray(h, dtype=float)
    q = hm @ np.array([*as_point(p), 1.0])
    if abs(q[2]) <= W_EPS:
        raise PointAtInfinity(f"point {tuple(p)} maps to infinity")
    return q[:2] / q[2]


def project_points(h, pts):
    """Vectorized :func:`project_point` over an (n, 2) array."""
    hm = h.h if isinstance(h, Homography) else np.asarray(h, dtype=float)
    pts = as_points(pts, allow_empty=True)
    if len(pts) == 0:
        return pts.copy()
    proj, w = _apply(hm, pts)
    if np.any(np.abs(w) <= W_EPS):
        raise PointAtInfinity("a point maps to infinity")
    return proj


def reprojection_error(h, correspondences):
    """Sum of squared ground-plane distances between targets and projections."""
    src, dst = _split(correspondences)
    if len(src) < 1:
        raise TooFewPoints("need at least one correspondence")
    return float(((project_points(h, src) - dst) ** 2).sum())


def load_correspondences(path):
    """Read ``ix iy wx wy`` rows; blank lines and ``#`` comments are skipped."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        vals = line.split()
        if len(vals) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 numbers, got {len(vals)}")
        ix, iy, wx, wy = map(float, vals)
        out.append(Correspondence((ix, iy), (wx, wy)))
    return out


def save_correspondences(path, correspondences):
    lines = ["# ix iy wx wy"]
    for c in correspondences:
        lines.append("%.9f %.9f %.9f %.9f" % (*c.image_point, *c.world_point))
    Path(path).write_text("\n".join(lines) + "\n")


class HomographyEstimator(TransformerMixin, BaseEstimator):
    """Fit an image-to-ground homography and project detections with it.

    ``fit(X, y)`` takes image points ``X`` and matching world points ``y``;
    ``transform(X)`` maps image points to the ground plane.
    """

    def __init__(self, refine=True, max_iter=50, tol=1e-10):
        self.refine = refine
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X = as_points(X, "image points")
        y = as_points(y, "world points")
        self.homography_ = dlt_homography((X, y), self.refine, self.max_iter, self.tol)
        self.reprojection_error_ = reprojection_error(self.homography_, (X, y))
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "homography_")
        return project_points(self.homography_, X)

    def inverse_transform(self, X):
        check_is_fitted(self, "homography_")
        return project_points(self.homography_.inverse(), X)
