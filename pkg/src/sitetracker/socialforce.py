"""Social force model: repulsive social forces, contact forces and the
force-augmented step motion used as the tracker's prediction function."""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import CoincidentCenters
from .validation import as_point

COINCIDENT_EPS = 1e-9


@dataclass(frozen=True)
class SfmParams:
    social_magnitude: float = 50.0      # a_j [N]
    social_range: float = 0.5           # b_j [m]
    physical_magnitude: float = 250.0   # c_j [N/m]
    anisotropy: float = 0.5             # lambda in [0, 1]
    mass: float = 70.0                  # [kg]
    person_radius: float = 0.2          # [m]
    obstacle_radius: float = 0.3536     # [m], cell_size / sqrt(2) for 0.5 m cells
    people_contact: bool = False        # physical forces between people too
    cutoff_ranges: float = 20.0         # ignore other entities beyond r_sum + cutoff * b

    def __post_init__(self):
        for name in ("social_magnitude", "social_range", "physical_magnitude",
                     "person_radius", "obstacle_radius"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.anisotropy <= 1.0:
            raise ValueError("anisotropy must lie in [0, 1]")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.social_range <= 0:
            raise ValueError("social_range must be positive")


class EntityKind(Enum):
    PERSON = "person"
    OBSTACLE = "obstacle"


@dataclass(frozen=True)
class Entity:
    center: tuple
    radius: float
    kind: EntityKind = EntityKind.PERSON

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(as_point(self.center, "center")))
        if self.radius <= 0:
            raise ValueError("entity radius must be positive")


def anisotropy(lam, phi):
    """Field-of-view weighting ``lam + (1 - lam) * (1 + cos(phi)) / 2``."""
    return lam + (1.0 - lam) * (1.0 + np.cos(phi)) / 2.0


def _unit_away(self_center, other_center):
    diff = np.asarray(self_center, dtype=float) - np.asarray(other_center, dtype=float)
    d = float(np.hypot(*diff))
    if d <= COINCIDENT_EPS:
        raise CoincidentCenters("entities share a center")
    return diff / d, d


def social_force(self_entity, other, desired_dir, params):
    """Exponential repulsion of ``other`` on ``self_entity``, pointing away from ``other``."""
    n, d = _unit_away(self_entity.center, other.center)
    r = self_entity.radius + other.radius
    eps = np.asarray(desired_dir, dtype=float)
    cos_phi = -float(n @ eps)
    gamma = params.anisotropy + (1.0 - params.anisotropy) * (1.0 + cos_phi) / 2.0
    return params.social_magnitude * np.exp((r - d) / params.social_range) * gamma * n


def physical_force(self_entity, obstacle, params):
    """Contact force ``c * max(r_sum - d, 0)``; zero unless the circles overlap."""
    n, d = _unit_away(self_entity.center, obstacle.center)
    overlap = self_entity.radius + obstacle.radius - d
    return params.physical_magnitude * max(overlap, 0.0) * n


def total_force(self_entity, people, obstacles, desired_dir, params):
    """Social forces from people and obstacles plus contact forces from obstacles."""
    f = np.zeros(2)
    for p in people:
        f = f + social_force(self_entity, p, desired_dir, params)
        if params.people_contact:
            f = f + physical_force(self_entity, p, params)
    for o in obstacles:
        f = f + social_force(self_entity, o, desired_dir, params)
        f = f + physical_force(self_entity, o, params)
    return f


def step_vector(step):
    b, d, theta = step
    return float(bool(b)) * float(d) * np.array([np.cos(theta), np.sin(theta)])


def _heading_dir(step):
    return np.array([np.cos(step[2]), np.sin(step[2])])


def predict_with_forces(x_prev, step, people, obstacles, params, dt):
    """Mean of the force-augmented motion model.

    ``x_prev + B * d * (cos theta, sin theta) + 0.5 * F / m * dt**2``

    ``people`` and ``obstacles`` are lists of :class:`Entity`; the moving person
    is the circle of ``params.person_radius`` centred at ``x_prev``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x_prev = as_point(x_prev, "x_prev")
    me = Entity(x_prev, params.person_radius if params.person_radius > 0 else 1e-6)
    F = total_force(me, people, obstacles, _heading_dir(step), params)
    return x_prev + step_vector(step) + 0.5 * F / params.mass * dt ** 2


def force_jacobian(x_prev, step, people, obstacles, params, dt, h=1e-5):
    """Central finite-difference Jacobian of :func:`predict_with_forces` in ``x_prev``."""
    x_prev = as_point(x_prev, "x_prev")
    J = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        J[:, k] = (predict_with_forces(x_prev + e, step, people, obstacles, params, dt)
                   - predict_with_forces(x_prev - e, step, people, obstacles, params, dt)) / (2 * h)
    return J


# vectorized kernels used inside the tracker ---------------------------------

def _pair_forces(diff, r_sum, eps, params, contact, mask=None):
    """Forces on ``self`` from others given ``diff = self - other`` (..., K, 2).

    ``eps`` is the desired unit direction broadcastable to (..., 1, 2). Only
    pairs inside the cutoff are evaluated.
    """
    lead = diff.shape[:-2]
    K = diff.shape[-2]
    diff = diff.reshape(-1, K, 2)
    d2 = np.einsum("mki,mki->mk", diff, diff)
    reach = r_sum + params.cutoff_ranges * params.social_range
    active = (d2 > COINCIDENT_EPS ** 2) & (d2 < reach * reach)
    if mask is not None:
        active &= np.broadcast_to(mask, lead + (K,)).reshape(-1, K)
    row, col = np.nonzero(active)
    e = np.broadcast_to(eps, lead + (1, 2)).reshape(-1, 2)
    out = _sparse_forces(row, diff[row, col], np.sqrt(d2[row, col]), e, len(diff),
                         r_sum, params, contact)
    return out.reshape(lead + (2,))


def _sparse_forces(row, dv, d, eps, size, r_sum, params, contact):
    """Sum the pair forces ``dv`` (self - other, distance ``d``) into ``size`` rows."""
    out = np.zeros((size, 2))
    if not len(row):
        return out
    n = dv / d[:, None]
    cos_phi = -(n * eps[row]).sum(-1)
    gamma = params.anisotropy + (1.0 - params.anisotropy) * (1.0 + cos_phi) / 2.0
    mag = params.social_magnitude * np.exp((r_sum - d) / params.social_range) * gamma
    if contact:
        mag = mag + params.physical_magnitude * np.maximum(r_sum - d, 0.0)
    f = mag[:, None] * n
    for k in range(2):
        out[:, k] = np.bincount(row, weights=f[:, k], minlength=size)
    return out


def _obstacle_forces(points, eps, obstacles, params):
    """Obstacle forces at ``points`` using a neighbour query instead of all pairs."""
    r_sum = params.person_radius + params.obstacle_radius
    reach = r_sum + params.cutoff_ranges * params.social_range
    lead = points.shape[:-1]
    pts = points.reshape(-1, 2)
    pairs = cKDTree(pts).sparse_distance_matrix(cKDTree(obstacles), reach, output_type="ndarray")
    keep = (pairs["v"] > COINCIDENT_EPS) & (pairs["v"] < reach)
    row, col, d = pairs["i"][keep], pairs["j"][keep], pairs["v"][keep]
    order = np.lexsort((col, row))      # fixed summation order
    row, col, d = row[order], col[order], d[order]
    e = np.broadcast_to(eps, lead + (1, 2)).reshape(-1, 2)
    out = _sparse_forces(row, pts[row] - obstacles[col], d, e, len(pts), r_sum, params, True)
    return out.reshape(lead + (2,))


def force_field(points, desired, people=None, people_mask=None, obstacles=None, params=None):
    """Total force at ``points`` (..., 2).

    Parameters
    ----------
    points : (..., 2)
    desired : unit heading, broadcastable to ``points``
    people : (..., P, 2) positions of other people, broadcastable against points
    people_mask : (..., P) bool, False entries are ignored
    obstacles : (O, 2) obstacle centers (radius ``params.obstacle_radius``)
    """
    params = params or SfmParams()
    points = np.asarray(points, dtype=float)
    eps = np.asarray(desired, dtype=float)[..., None, :]
    F = np.zeros(points.shape)
    if people is not None and np.size(people):
        diff = points[..., None, :] - people
        F = F + _pair_forces(diff, 2.0 * params.person_radius, eps, params,
                             params.people_contact, people_mask)
    if obstacles is not None and len(obstacles):
        F = F + _obstacle_forces(points, eps, np.asarray(obstacles, dtype=float).reshape(-1, 2),
                                 params)
    return F
