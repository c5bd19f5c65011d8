"""Rao-Blackwellized particle filter over camera/radio data associations.

Every particle carries one 2-D Gaussian per device. The particle set is held
as dense arrays (particles x device slots) so a whole scan is processed with
batched unscented transforms instead of per-particle Python loops.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import AllWeightsZero, InvalidConfig, SingularInnovation
from ..inertial import StepModelState, active_step_length
from ..radio import RadioModel
from ..socialforce import SfmParams, force_field
from ..ukf import LIKELIHOOD_FLOOR, GaussianState, batch_measure, batch_predict, symmetrize
from .association import build_joint_measurements
from .types import Particle, TargetState

MAX_WEIGHT = "max_weight"
MIXTURE = "mixture"
CLUTTER_UNIFORM = "uniform"
CLUTTER_PREDICTED = "predicted"
_LOG_FLOOR = np.log(LIKELIHOOD_FLOOR)


@dataclass
class TrackerConfig:
    particles: int = 100
    pd: float = 0.9
    clutter_prior: float = 0.3
    clutter_density: float = 0.03        # camera-plane part [1/m^2]
    rss_clutter_density: float = 0.075   # per present AP [1/dB]
    quality_rss_density: float = 0.035   # reference density of the track-quality score [1/dB]
    # how the RSS half of a clutter hypothesis is scored: "uniform" uses
    # rss_clutter_density, "predicted" the particle's own predicted RSS of the device
    clutter_rss: str = CLUTTER_PREDICTED
    death_timeout: int = 60              # scans; 0 disables
    sfm_enabled: bool = False
    estimate_mode: str = MAX_WEIGHT
    dt: float = 0.5
    process_noise: tuple = (0.09, 0.09)
    camera_sigma: float = 0.2
    rss_sigma: float = 3.2
    birth_threshold: float = 5.0         # RMS RSS residual per AP [dB]
    birth_variance: float = 1.0
    resample_threshold: float = 0.5      # fraction of N below which ESS triggers resampling
    relax_shared_detection: bool = False
    sfm_cutoff: float = 4.0              # social ranges beyond which entities are ignored
    record_associations: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1:
            raise InvalidConfig("tracker.particles must be >= 1")
        if not 0.0 < self.pd < 1.0:
            raise InvalidConfig("tracker.pd must lie in (0, 1)")
        if not 0.0 < self.clutter_prior < 1.0:
            raise InvalidConfig("tracker.clutter_prior must lie in (0, 1)")
        if min(self.clutter_density, self.rss_clutter_density, self.quality_rss_density) <= 0:
            raise InvalidConfig("clutter densities must be positive")
        if self.estimate_mode not in (MAX_WEIGHT, MIXTURE):
            raise InvalidConfig(f"tracker.estimate_mode must be {MAX_WEIGHT!r} or {MIXTURE!r}")
        if self.clutter_rss not in (CLUTTER_UNIFORM, CLUTTER_PREDICTED):
            raise InvalidConfig(f"tracker.clutter_rss must be {CLUTTER_UNIFORM!r} or {CLUTTER_PREDICTED!r}")
        if self.death_timeout < 0:
            raise InvalidConfig("tracker.death_timeout must be >= 0")
        if self.dt <= 0:
            raise InvalidConfig("tracker.dt must be positive")


@dataclass
class TrackerModels:
    """Models the filter consumes; learning produces replacements for these."""

    radio: RadioModel
    steps: dict = field(default_factory=dict)       # device id -> StepModelState
    sfm: SfmParams = field(default_factory=SfmParams)
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def step_state(self, device):
        s = self.steps.get(device)
        return s if s is not None else _DEFAULT_STEPS


_DEFAULT_STEPS = StepModelState()


class ParticleSet:
    """Dense particle storage: ``mean`` (N, D, 2), ``cov`` (N, D, 2, 2), flags (N, D)."""

    def __init__(self, n):
        self.n = int(n)
        self.devices = []
        self.slot = {}
        self.mean = np.zeros((self.n, 0, 2))
        self.cov = np.zeros((self.n, 0, 2, 2))
        self.alive = np.zeros((self.n, 0), dtype=bool)
        self.last_cam = np.zeros((self.n, 0), dtype=np.int64)
        self.quality = np.zeros((self.n, 0))
        self.birth = np.zeros((self.n, 0), dtype=np.int64)
        self.log_w = np.full(self.n, -np.log(self.n))

    def __len__(self):
        return self.n

    def ensure(self, device):
        device = int(device)
        if device in self.slot:
            return self.slot[device]
        s = len(self.devices)
        self.devices.append(device)
        self.slot[device] = s
        n = self.n
        self.mean = np.concatenate([self.mean, np.zeros((n, 1, 2))], axis=1)
        self.cov = np.concatenate([self.cov, np.broadcast_to(np.eye(2), (n, 1, 2, 2))], axis=1)
        self.alive = np.concatenate([self.alive, np.zeros((n, 1), dtype=bool)], axis=1)
        self.last_cam = np.concatenate([self.last_cam, np.zeros((n, 1), dtype=np.int64)], axis=1)
        self.quality = np.concatenate([self.quality, np.zeros((n, 1))], axis=1)
        self.birth = np.concatenate([self.birth, np.zeros((n, 1), dtype=np.int64)], axis=1)
        return s

    @property
    def weights(self):
        w = np.exp(self.log_w - self.log_w.max())
        return w / w.sum()

    def copy(self):
        out = ParticleSet.__new__(ParticleSet)
        out.n = self.n
        out.devices = list(self.devices)
        out.slot = dict(self.slot)
        for name in ("mean", "cov", "alive", "last_cam", "quality", "birth", "log_w"):
            setattr(out, name, getattr(self, name).copy())
        return out

    def take(self, idx):
        out = self.copy()
        idx = np.asarray(idx)
        out.n = len(idx)
        for name in ("mean", "cov", "alive", "last_cam", "quality", "birth"):
            setattr(out, name, getattr(self, name)[idx].copy())
        out.log_w = np.full(out.n, -np.log(out.n))
        return out

    def to_particles(self):
        w = self.weights
        out = []
        for i in range(self.n):
            targets = {}
            for s, d in enumerate(self.devices):
                if self.alive[i, s]:
                    targets[d] = TargetState(d, GaussianState(self.mean[i, s], self.cov[i, s]),
                                             int(self.last_cam[i, s]), float(self.quality[i, s]),
                                             int(self.birth[i, s]))
            out.append(Particle(float(w[i]), targets))
        return out

    @classmethod
    def from_particles(cls, particles):
        ps = cls(len(particles))
        devices = sorted({d for p in particles for d in p.targets})
        for d in devices:
            ps.ensure(d)
        for i, p in enumerate(particles):
            for d, tgt in p.targets.items():
                s = ps.slot[d]
                ps.mean[i, s] = tgt.gaussian.mean
                ps.cov[i, s] = tgt.gaussian.cov
                ps.alive[i, s] = True
                ps.last_cam[i, s] = tgt.last_camera_scan
                ps.quality[i, s] = tgt.quality
                ps.birth[i, s] = tgt.birth_scan
        w = np.array([p.weight for p in particles], dtype=float)
        with np.errstate(divide="ignore"):
            ps.log_w = np.log(w / w.sum()) if w.sum() > 0 else np.full(ps.n, -np.log(ps.n))
        return ps


def _as_set(particles):
    if isinstance(particles, ParticleSet):
        return particles, False
    return ParticleSet.from_particles(list(particles)), True


@dataclass
class ScanReport:
    """What happened to the particle set during one scan."""

    t: int
    particles: ParticleSet
    weights: np.ndarray          # normalized, before resampling
    updated: np.ndarray          # (N, D) target corrected by a joint measurement
    born: np.ndarray             # (N, D)
    assigned: np.ndarray         # (N, D) camera index or -1
    measurements: list
    events: np.ndarray = None    # (N, J) device id or -1, when recorded
    ess: float = 0.0
    resampled: bool = False
    weights_reset: bool = False
    estimates: dict = field(default_factory=dict)
    snapshot: list = field(default_factory=list)


# prediction -------------------------------------------------------------

def _step_inputs(ps, scan, models):
    D = len(ps.devices)
    disp = np.zeros((D, 2))
    heading = np.zeros((D, 2))
    heading[:, 0] = 1.0
    for s, dev in enumerate(ps.devices):
        obs = scan.steps.get(dev)
        if obs is None:
            continue
        u = np.array([np.cos(obs.heading), np.sin(obs.heading)])
        heading[s] = u
        if obs.step:
            disp[s] = active_step_length(models.step_state(dev), obs.frequency) * u
    return disp, heading


def _nearby_obstacles(ps, obstacles, reach):
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 2)
    if not len(obstacles) or not ps.alive.any():
        return obstacles[:0]
    pts = ps.mean[ps.alive]
    d2 = ((pts[:, None, :] - obstacles[None, :, :]) ** 2).sum(-1).min(0)
    return obstacles[d2 <= reach ** 2]


def predict_targets(ps, scan, models, config):
    """Propagate every live target through the step motion model, once per scan."""
    D = len(ps.devices)
    if D == 0:
        return
    disp, heading = _step_inputs(ps, scan, models)
    Q = np.diag(np.asarray(config.process_noise, dtype=float))
    alive = ps.alive
    if not config.sfm_enabled:
        # translation only: the unscented transform is exact, skip it
        new_mean = ps.mean + disp[None]
        new_cov = ps.cov + Q
    else:
        p = models.sfm
        sfm = SfmParams(p.social_magnitude, p.social_range, p.physical_magnitude, p.anisotropy,
                        p.mass, p.person_radius, p.obstacle_radius, p.people_contact,
                        config.sfm_cutoff)
        reach = sfm.person_radius + sfm.obstacle_radius + sfm.cutoff_ranges * sfm.social_range + 2.0
        obstacles = _nearby_obstacles(ps, models.obstacles, reach)
        people = ps.mean[:, None, None, :, :]
        mask = alive[:, None, None, :] & ~np.eye(D, dtype=bool)[None, :, None, :]
        kick = 0.5 * config.dt ** 2 / sfm.mass

        def motion(X):
            F = force_field(X, heading[None, :, None, :], people, mask, obstacles, sfm)
            return X + disp[None, :, None, :] + kick * F

        new_mean, new_cov = batch_predict(ps.mean, ps.cov, motion, Q)
    ps.mean = np.where(alive[..., None], new_mean, ps.mean)
    ps.cov = np.where(alive[..., None, None], symmetrize(new_cov), ps.cov)


# correction ---------------------------------------------------------------

def _measurement_fn(radio, ap_mask):
    pos = radio.positions[ap_mask]
    P = radio.ref_powers[ap_mask]
    n = radio.exponents[ap_mask]

    def h(X):
        d = np.sqrt(((X[..., None, :] - pos) ** 2).sum(-1))
        rss = P - 10.0 * n * np.log10(np.maximum(d, 0.1))
        return np.concatenate([X, rss], axis=-1)

    return h


def stacked_clutter_log_density(config, n_aps, rss_density=None):
    rss_density = config.rss_clutter_density if rss_density is None else rss_density
    return np.log(config.clutter_density) + n_aps * np.log(rss_density)


def _device_moments(ps, s, jm, models, config, camera):
    """Predicted joint measurement of device slot ``s`` for every live particle.

    The prediction is the same for every detection paired with the device, and
    it stays valid until the target is corrected (after which restriction 1
    rules out further updates this scan), so it is computed once per device.
    """
    idx = np.nonzero(ps.alive[:, s])[0]
    if not len(idx):
        return None
    n_aps = int(jm.ap_mask.sum())
    cs2 = config.camera_sigma ** 2
    R = np.diag(np.concatenate([[cs2, cs2], np.full(n_aps, config.rss_sigma ** 2)]))
    h = _measurement_fn(models.radio, jm.ap_mask)
    # resampled particles share states; evaluate each distinct state once
    key = np.concatenate([ps.mean[idx, s], ps.cov[idx, s].reshape(-1, 4)], axis=1)
    uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    mu, P = ps.mean[idx[first], s], ps.cov[idx[first], s]
    ym, V, Pxy = batch_measure(mu, P, h, R)
    try:
        Lc = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is not positive definite") from exc
    Vinv = symmetrize(np.linalg.inv(V))
    # residuals for all detections: (U, M, d)
    Y = np.concatenate([camera, np.broadcast_to(jm.rss, (len(camera), n_aps))], axis=1)
    r = Y[None, :, :] - ym[:, None, :]
    maha = ((r @ Vinv) * r).sum(-1)
    logdet = 2.0 * np.log(np.diagonal(Lc, axis1=-2, axis2=-1)).sum(-1)
    logL = -0.5 * (maha + logdet[:, None] + len(jm.y) * np.log(2.0 * np.pi))
    K = Pxy @ Vinv
    P_post = symmetrize(P - K @ np.swapaxes(Pxy, -1, -2))
    full = np.full((ps.n, len(camera)), -np.inf)
    full[idx] = np.maximum(logL, _LOG_FLOOR)[inv]
    pos = np.full(ps.n, -1)
    pos[idx] = inv
    # marginal log-density of the RSS block alone, used by the clutter hypothesis
    rss_log = np.full(ps.n, n_aps * np.log(config.rss_clutter_density))
    if config.clutter_rss == CLUTTER_PREDICTED and n_aps:
        Vr = V[:, 2:, 2:]
        rr = jm.rss[None, :] - ym[:, 2:]
        Lr = np.linalg.cholesky(Vr)
        z = np.linalg.solve(Lr, rr[..., None])[..., 0]
        lr = -0.5 * ((z ** 2).sum(-1) + n_aps * np.log(2.0 * np.pi)) \
            - np.log(np.diagonal(Lr, axis1=-2, axis2=-1)).sum(-1)
        rss_log[idx] = np.maximum(lr, _LOG_FLOOR)[inv]
    return {"logL": full, "pos": pos, "mu": mu, "K": K, "P_post": P_post, "r": r,
            "rss_log": rss_log}


def _correct(ps, scan, models, config, rng, state):
    t = scan.t
    jms = build_joint_measurements(scan)
    N = ps.n
    log_pc = np.log(config.clutter_prior)
    log_pt = np.log((1.0 - config.clutter_prior) * config.pd)
    log_pd = np.log(config.pd)
    events = np.full((N, len(jms)), -1, dtype=np.int64) if config.record_associations else None
    updated, consumed, assigned = state["updated"], state["consumed"], state["assigned"]
    moments = {}
    for k, jm in enumerate(jms):
        u = rng.random(N)
        j, m = jm.device_id, jm.camera_index
        s = ps.slot[j]
        if j not in moments:
            moments[j] = _device_moments(ps, s, jm, models, config, scan.camera)
        mom = moments[j]
        n_aps = int(jm.ap_mask.sum())
        log_cq = stacked_clutter_log_density(config, n_aps, config.quality_rss_density)
        if mom is None:
            base = np.full(N, log_pc + stacked_clutter_log_density(config, n_aps))
        else:
            base = log_pc + np.log(config.clutter_density) + mom["rss_log"]
        log_z = base.copy()
        elig = ps.alive[:, s] & ~updated[:, s]
        if not config.relax_shared_detection:
            elig &= ~consumed[:, m]
        idx = np.nonzero(elig)[0]
        if len(idx):
            logL = mom["logL"][idx, m]
            lt = log_pt + logL
            lz = np.logaddexp(base[idx], lt)
            log_z[idx] = lz
            take = u[idx] < np.exp(lt - lz)
            if take.any():
                ch = idx[take]
                b = mom["pos"][ch]
                ps.mean[ch, s] = mom["mu"][b] + (mom["K"][b] @ mom["r"][b, m][..., None])[..., 0]
                ps.cov[ch, s] = mom["P_post"][b]
                updated[ch, s] = True
                consumed[ch, m] = True
                assigned[ch, s] = m
                ps.last_cam[ch, s] = t
                ps.quality[ch, s] += logL[take] + log_pd - log_cq
                if events is not None:
                    events[ch, k] = j
        ps.log_w += log_z
    return jms, events


# lifecycle ----------------------------------------------------------------

def _rss_residuals(radio, camera, rss):
    mask = np.isfinite(rss)
    if not mask.any() or not len(camera):
        return np.full(len(camera), np.inf)
    exp = radio.expected(camera)[:, mask]
    return np.sqrt(((exp - rss[mask]) ** 2).mean(-1))


def spawn_targets(particles, scan, radio_model, config, consumed=None, state=None):
    """Create tracks for heard devices without a live track in a particle.

    The newborn sits at the free detection whose expected RSS best matches the
    device's RSS vector, provided the per-AP RMS residual is below
    ``config.birth_threshold``. Otherwise birth waits for a later scan.
    """
    ps, materialized = _as_set(particles)
    if materialized:
        ps = ps.copy()
    M = len(scan.camera)
    N = ps.n
    if consumed is None:
        consumed = np.zeros((N, M), dtype=bool)
    for dev in sorted(scan.radio):
        rss = scan.radio[dev]
        if not np.any(np.isfinite(rss)):
            continue
        s = ps.ensure(dev)
        need = ~ps.alive[:, s]
        if M == 0 or not need.any():
            continue
        res = _rss_residuals(radio_model, scan.camera, rss)
        blocked = consumed if not config.relax_shared_detection else np.zeros_like(consumed)
        cand = np.where(blocked, np.inf, res[None, :])
        best = np.argmin(cand, axis=1)
        val = cand[np.arange(N), best]
        born = need & (val < config.birth_threshold)
        if not born.any():
            continue
        ids = np.nonzero(born)[0]
        ps.mean[ids, s] = scan.camera[best[ids]]
        ps.cov[ids, s] = config.birth_variance * np.eye(2)
        ps.alive[ids, s] = True
        ps.last_cam[ids, s] = scan.t
        ps.quality[ids, s] = 0.0
        ps.birth[ids, s] = scan.t
        consumed[ids, best[ids]] = True
        if state is not None:
            state["born"][ids, s] = True
            state["assigned"][ids, s] = best[ids]
    return ps.to_particles() if materialized else ps


def kill_stale_targets(particles, t_now, timeout_scans):
    """Remove targets whose last camera update is more than ``timeout_scans`` ago.

    A :class:`ParticleSet` is modified in place; a list of particles is copied.
    """
    ps, materialized = _as_set(particles)
    if materialized:
        ps = ps.copy()
    if timeout_scans and timeout_scans > 0:
        stale = ps.alive & (t_now - ps.last_cam > timeout_scans)
        ps.alive &= ~stale
    return ps.to_particles() if materialized else ps


def systematic_indices(weights, rng):
    w = np.asarray(weights, dtype=float)
    n = len(w)
    c = np.cumsum(w / w.sum())
    c[-1] = 1.0
    pos = (rng.random() + np.arange(n)) / n
    return np.searchsorted(c, pos, side="right")


def resample_systematic(particles, rng):
    """Systematic resampling to N equally weighted offspring."""
    ps, materialized = _as_set(particles)
    out = ps.take(systematic_indices(ps.weights, rng))
    return out.to_particles() if materialized else out


def effective_sample_size(weights):
    w = np.asarray(weights, dtype=float)
    return 1.0 / np.sum(w * w)


def estimate_positions(particles, mode=MAX_WEIGHT):
    """Device id -> position from the best particle or the weighted mixture."""
    ps, _ = _as_set(particles)
    w = ps.weights
    out = {}
    if mode == MAX_WEIGHT:
        i = int(np.argmax(w))  # first index on ties
        for s, d in enumerate(ps.devices):
            if ps.alive[i, s]:
                out[d] = ps.mean[i, s].copy()
    elif mode == MIXTURE:
        for s, d in enumerate(ps.devices):
            a = ps.alive[:, s]
            if a.any():
                ws = w[a] / w[a].sum()
                out[d] = ws @ ps.mean[a, s]
    else:
        raise ValueError(f"unknown estimate mode {mode!r}")
    return out


def normalize_weights(ps):
    """Normalize in place; returns True when all weights had vanished and were reset."""
    top = np.max(ps.log_w)
    if not np.isfinite(top):
        warnings.warn("all particle weights vanished; reset to uniform", AllWeightsZero,
                      stacklevel=2)
        ps.log_w = np.full(ps.n, -np.log(ps.n))
        return True
    ps.log_w = ps.log_w - (top + np.log(np.exp(ps.log_w - top).sum()))
    return False


def process_scan(particles, scan, models, config, rng):
    """Run one full filter cycle and return a :class:`ScanReport`.

    Order: predict once, associate and correct sequentially over joint
    measurements, births, missed-detection bookkeeping, deaths, normalization,
    estimation, and resampling when the effective sample size drops below
    ``resample_threshold * N``.
    """
    ps = particles.copy()
    for dev in sorted(set(scan.radio) | set(scan.steps)):
        ps.ensure(dev)
    N, D, M = ps.n, len(ps.devices), len(scan.camera)
    predict_targets(ps, scan, models, config)
    was_alive = ps.alive.copy()
    state = {
        "updated": np.zeros((N, D), dtype=bool),
        "born": np.zeros((N, D), dtype=bool),
        "consumed": np.zeros((N, M), dtype=bool),
        "assigned": np.full((N, D), -1, dtype=np.int64),
    }
    jms, events = _correct(ps, scan, models, config, rng, state)
    spawn_targets(ps, scan, models.radio, config, state["consumed"], state)

    heard = np.zeros(D, dtype=bool)
    for dev, rss in scan.radio.items():
        if np.any(np.isfinite(rss)):
            heard[ps.slot[dev]] = True
    missed = was_alive & ~state["updated"] & heard[None, :]
    ps.quality[missed] += np.log1p(-config.pd)

    kill_stale_targets(ps, scan.t, config.death_timeout)
    reset = normalize_weights(ps)
    w = ps.weights
    estimates = estimate_positions(ps, config.estimate_mode)
    rep = ScanReport(scan.t, ps, w, state["updated"], state["born"], state["assigned"], jms,
                     events, effective_sample_size(w), False, reset, estimates)
    rep.snapshot = _snapshot(ps, w, state)
    if rep.ess < config.resample_threshold * N:
        rep.particles = resample_systematic(ps, rng)
        rep.resampled = True
    return rep


def _snapshot(ps, w, state):
    """Per-device view of the highest-weight particle, before resampling."""
    i = int(np.argmax(w))
    rows = []
    for s, d in enumerate(ps.devices):
        if ps.alive[i, s]:
            rows.append((d, float(ps.mean[i, s, 0]), float(ps.mean[i, s, 1]),
                         bool(state["updated"][i, s]), bool(state["born"][i, s]),
                         int(state["assigned"][i, s]), float(ps.quality[i, s]),
                         int(ps.birth[i, s]), float(np.trace(ps.cov[i, s]))))
    return rows


# estimator ---------------------------------------------------------------

@dataclass
class HistoryRow:
    scan: int
    device_id: int
    x: float
    y: float
    type_a: bool          # corrected by a joint measurement this scan
    born: bool
    detection: int        # camera index used, -1 if none
    quality: float
    birth_scan: int
    variance: float       # trace of the position covariance


class MultiTargetTracker(BaseEstimator):
    """Device-identity tracker over a sequence of :class:`ScanMeasurements`.

    ``fit(scans)`` runs the filter from scratch; ``partial_fit(scan)`` advances
    it by one scan. After fitting, ``estimates_`` maps each scan to device
    positions and ``history_`` holds the labelled states of the best particle.
    """

    def __init__(self, radio_model=None, config=None, step_models=None, sfm_params=None,
                 obstacles=None):
        self.radio_model = radio_model
        self.config = config
        self.step_models = step_models
        self.sfm_params = sfm_params
        self.obstacles = obstacles

    def _reset(self):
        if self.radio_model is None:
            raise InvalidConfig("a radio model is required")
        self.config_ = self.config if self.config is not None else TrackerConfig()
        self.models_ = TrackerModels(
            self.radio_model, dict(self.step_models or {}), self.sfm_params or SfmParams(),
            np.zeros((0, 2)) if self.obstacles is None else np.asarray(self.obstacles, float).reshape(-1, 2))
        self.rng_ = np.random.default_rng(self.config_.seed)
        self.particles_ = ParticleSet(self.config_.particles)
        self.estimates_ = []
        self.history_ = []
        self.events_ = []
        self.flags_ = []

    def adopt_models(self, radio_model=None, step_models=None, obstacles=None):
        """Swap in learned models; they take effect from the next scan."""
        if radio_model is not None:
            self.models_.radio = radio_model
        if step_models is not None:
            self.models_.steps = dict(step_models)
        if obstacles is not None:
            self.models_.obstacles = np.asarray(obstacles, float).reshape(-1, 2)
        return self

    def partial_fit(self, scan):
        if not hasattr(self, "particles_"):
            self._reset()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AllWeightsZero)
            rep = process_scan(self.particles_, scan, self.models_, self.config_, self.rng_)
        self.particles_ = rep.particles
        self.estimates_.append((scan.t, rep.estimates))
        for row in rep.snapshot:
            self.history_.append(HistoryRow(scan.t, *row))
        if self.config_.record_associations:
            self.events_.append((scan.t, rep.measurements, rep.events))
        if rep.weights_reset:
            self.flags_.append(scan.t)
        self.last_report_ = rep
        return self

    def fit(self, scans, y=None):
        self._reset()
        for scan in scans:
            self.partial_fit(scan)
        return self

    def predict(self, scans=None):
        """Estimates as a list of ``(scan, device_id, x, y)`` rows."""
        if scans is not None:
            self.fit(scans)
        return [(t, d, float(p[0]), float(p[1])) for t, est in self.estimates_
                for d, p in sorted(est.items())]

    def fit_predict(self, scans, y=None):
        return self.fit(scans).predict()

    def trajectories(self):
        """Device id -> dict scan -> (x, y)."""
        out = {}
        for t, est in self.estimates_:
            for d, p in est.items():
                out.setdefault(d, {})[t] = (float(p[0]), float(p[1]))
        return out

    def write_estimates(self, path):
        mode = self.config_.estimate_mode
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scan", "device_id", "x", "y", "mode"])
            for t, d, x, y in self.predict():
                w.writerow([t, d, f"{x:.6f}", f"{y:.6f}", mode])

    def write_associations(self, path):
        with open(path, "w") as fh:
            fh.write("scan,particle,measurement,event\n")
            for t, jms, events in self.events_:
                if events is None:
                    continue
                for i in range(events.shape[0]):
                    for k, jm in enumerate(jms):
                        e = events[i, k]
                        ev = "clutter" if e < 0 else f"target:{e}"
                        fh.write(f"{t},{i},c{jm.camera_index}d{jm.device_id},{ev}\n")
