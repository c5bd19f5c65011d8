"""Deterministic scenario generation.

Every random quantity comes from a stream keyed by (seed, sensor, entity), and
each stream draws a fixed number of variates per scan, so switching one
sensor's noise off does not perturb the others.
"""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidConfig
from ..inertial import DEFAULT_HEIGHT_M, UNIVERSAL_PARAMS, StepObservation, universal_step_length, wrap_angle
from ..radio import AccessPoint, RadioModel
from ..tracker.types import ScanMeasurements
from .config import ScenarioConfig

MOTION, CAMERA, RADIO, IMU, CLUTTER, LAYOUT, OCCLUSION, SHUFFLE, PHANTOM, PERSON = range(10)

SOURCE_CLUTTER = -1
SOURCE_PHANTOM = -2


def stream(seed, sensor, entity=0):
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, sensor, entity])


@dataclass
class GroundTruth:
    positions: np.ndarray       # (T, A, 2)
    stepped: np.ndarray         # (T, A) bool, step taken between t-1 and t
    step_length: np.ndarray     # (T, A)
    heading: np.ndarray         # (T, A)
    frequency: np.ndarray       # (T, A)
    has_device: np.ndarray      # (A,)
    heights: np.ndarray         # (A,)
    personal: np.ndarray        # (A, 2) slope, intercept of the true step model

    @property
    def device_ids(self):
        return [int(a) for a in np.nonzero(self.has_device)[0]]

    def device_positions(self):
        """Map device id -> (T, 2) trajectory."""
        return {d: self.positions[:, d] for d in self.device_ids}


@dataclass
class Scenario:
    config: ScenarioConfig
    truth: GroundTruth
    scans: list
    radio_model: RadioModel            # true model at scan 0
    radio_schedule: list = field(default_factory=list)   # [(scan, RadioModel)] changes
    camera_sources: list = field(default_factory=list)   # per scan: source label per detection
    occlusion_rects: list = field(default_factory=list)  # [(rect, start, end)]

    def radio_model_at(self, t):
        model = self.radio_model
        for s, m in self.radio_schedule:
            if s <= t:
                model = m
        return model


# geometry helpers -------------------------------------------------------

def _in_rect(p, rect, pad=0.0):
    x0, y0, x1, y1 = rect
    return (x0 - pad <= p[0] <= x1 + pad) and (y0 - pad <= p[1] <= y1 + pad)


def _segment_hits_rect(a, b, rect, pad=0.0):
    """Liang-Barsky clip test of segment a-b against an inflated rectangle."""
    x0, y0, x1, y1 = rect[0] - pad, rect[1] - pad, rect[2] + pad, rect[3] + pad
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, a[0] - x0), (dx, x1 - a[0]), (-dy, a[1] - y0), (dy, y1 - a[1])):
        if abs(p) < 1e-15:
            if q < 0:
                return False
        else:
            r = q / p
            if p < 0:
                t0 = max(t0, r)
            else:
                t1 = min(t1, r)
            if t0 > t1:
                return False
    return True


def _inside_area(p, area, margin=0.0):
    return area[0] + margin <= p[0] <= area[1] - margin and area[2] + margin <= p[1] <= area[3] - margin


def _validate(cfg):
    a = cfg.area
    if not (a[1] > a[0] and a[3] > a[2]):
        raise InvalidConfig("area must have positive extent")
    if cfg.n_scans < 1 or cfg.dt <= 0:
        raise InvalidConfig("n_scans must be >= 1 and dt > 0")
    ag = cfg.agents
    if ag.n_devices > ag.n_agents:
        raise InvalidConfig("n_devices cannot exceed n_agents")
    if ag.paths and len(ag.paths) != ag.n_agents:
        raise InvalidConfig("one path per agent is required when paths are given")
    if ag.starts and len(ag.starts) != len(ag.paths):
        raise InvalidConfig("starts requires paths, one start per agent")
    for path in list(ag.paths) + [ag.starts]:
        for w in path:
            if not _inside_area(w, a):
                raise InvalidConfig(f"waypoint {tuple(w)} outside the area")
    if not 0.0 <= cfg.imu.step_error_rate <= 1.0:
        raise InvalidConfig("step_error_rate must lie in [0, 1]")
    if not 0.0 <= cfg.camera.p_d <= 1.0:
        raise InvalidConfig("camera.p_d must lie in [0, 1]")
    if not 0.0 <= cfg.occlusion_fraction < 1.0:
        raise InvalidConfig("occlusion_fraction must lie in [0, 1)")
    if cfg.radio.period < 1:
        raise InvalidConfig("radio.period must be >= 1")


# layout -------------------------------------------------------------------

def ap_layout(cfg):
    r = cfg.radio
    xmin, xmax, ymin, ymax = cfg.area
    if r.layout == "explicit":
        pos = np.asarray(r.positions, dtype=float).reshape(-1, 2)
    elif r.layout == "perimeter":
        w, h = xmax - xmin, ymax - ymin
        per = 2 * (w + h)
        s = (np.arange(r.n_aps) + 0.5) * per / r.n_aps
        pos = np.empty((r.n_aps, 2))
        for i, si in enumerate(s):
            if si < w:
                pos[i] = (xmin + si, ymin)
            elif si < w + h:
                pos[i] = (xmax, ymin + si - w)
            elif si < 2 * w + h:
                pos[i] = (xmax - (si - w - h), ymax)
            else:
                pos[i] = (xmin, ymax - (si - 2 * w - h))
    elif r.layout == "grid":
        nx = int(np.ceil(np.sqrt(r.n_aps * (xmax - xmin) / (ymax - ymin))))
        ny = int(np.ceil(r.n_aps / nx))
        gx = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
        gy = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
        pos = np.array([(x, y) for y in gy for x in gx])[: r.n_aps]
    else:
        raise InvalidConfig(f"unknown AP layout {r.layout!r}")
    rng = stream(cfg.seed, LAYOUT)
    lo, hi = r.ref_power
    p = rng.uniform(lo, hi, len(pos)) if hi > lo else np.full(len(pos), lo)
    lo, hi = r.exponent
    n = rng.uniform(lo, hi, len(pos)) if hi > lo else np.full(len(pos), lo)
    return RadioModel(tuple(AccessPoint(i, pos[i], p[i], n[i]) for i in range(len(pos))))


def radio_schedule(cfg, model):
    out = []
    current = model
    for ev in sorted(cfg.radio.events, key=lambda e: e["scan"]):
        unknown = set(ev) - {"scan", "aps", "d_power", "d_exponent"}
        if unknown:
            raise InvalidConfig(f"radio event: unknown key(s) {sorted(unknown)}")
        aps = ev.get("aps")
        idx = range(len(current)) if aps is None else aps
        for i in idx:
            ap = current.access_points[i]
            current = current.with_parameters(i, ap.ref_power + ev.get("d_power", 0.0),
                                              ap.path_loss_exponent + ev.get("d_exponent", 0.0))
        out.append((int(ev["scan"]), current))
    return out


def occlusion_rects(cfg):
    rects = []
    for occ in cfg.occlusions:
        end = occ.get("end")
        rects.append((tuple(occ["rect"]), int(occ.get("start", 0)),
                      cfg.n_scans if end is None else int(end)))
    if cfg.occlusion_fraction > 0:
        xmin, xmax, ymin, ymax = cfg.area
        s = np.sqrt(cfg.occlusion_fraction)
        w, h = (xmax - xmin) * s, (ymax - ymin) * s
        seed = cfg.seed if cfg.occlusion_seed is None else cfg.occlusion_seed
        rng = stream(seed, OCCLUSION)
        x0 = rng.uniform(xmin, xmax - w)
        y0 = rng.uniform(ymin, ymax - h)
        rects.append(((x0, y0, x0 + w, y0 + h), 0, cfg.n_scans))
    return rects


# truth --------------------------------------------------------------------

def _person_params(cfg, a):
    rng = stream(cfg.seed, PERSON, a)
    ag = cfg.agents
    h = rng.uniform(*ag.height_range)
    d1, d0 = rng.uniform(-ag.personal_jitter, ag.personal_jitter, 2)
    ua, ub, uc = UNIVERSAL_PARAMS
    return h, h * ua * (1.0 + d1), (h * ub + uc) * (1.0 + d0)


def _free_point(rng, cfg, walls):
    m = cfg.agents.margin
    xmin, xmax, ymin, ymax = cfg.area
    for _ in range(200):
        p = np.array([rng.uniform(xmin + m, xmax - m), rng.uniform(ymin + m, ymax - m)])
        if not any(_in_rect(p, w, 0.6) for w in walls):
            return p
    raise InvalidConfig("could not place an agent outside the walls")


def _walk(cfg, a, walls):
    T = cfg.n_scans
    ag = cfg.agents
    rng = stream(cfg.seed, MOTION, a)
    _, slope, intercept = _person_params(cfg, a)
    pos = np.zeros((T, 2))
    stepped = np.zeros(T, dtype=bool)
    length = np.zeros(T)
    heading = np.zeros(T)
    freq = np.zeros(T)

    path = [np.asarray(w, dtype=float) for w in ag.paths[a]] if ag.paths else None
    if path and ag.starts:
        p = np.asarray(ag.starts[a], dtype=float).copy()
        wp_idx = 0
        target = path[0]
    elif path:
        p = path[0].copy()
        wp_idx = 1 % len(path)
        target = path[wp_idx] if len(path) > 1 else None
    else:
        p = _free_point(rng, cfg, walls)
        target = None
    th = rng.uniform(-np.pi, np.pi)
    pause = 0
    pos[0] = p

    def next_random_target(p):
        for _ in range(100):
            q = _free_point(rng, cfg, walls)
            if np.hypot(*(q - p)) > 1.0 and not any(_segment_hits_rect(p, q, w, 0.5) for w in walls):
                return q
        return None

    for t in range(1, T):
        # fixed draws per scan keep the stream aligned
        u_pause, u_len = rng.random(2)
        f_draw = rng.uniform(*ag.frequency_range)
        n_len, n_head = rng.standard_normal(2)
        do_step = False
        if pause > 0:
            pause -= 1
        else:
            if target is None and not path:
                target = next_random_target(p)
            if target is not None and np.hypot(*(target - p)) < 0.35:
                if path:
                    wp_idx += 1
                    if wp_idx >= len(path):
                        wp_idx = 0 if ag.loop_paths else None
                    target = path[wp_idx] if wp_idx is not None else None
                else:
                    target = None
                if u_pause < ag.pause_prob:
                    pause = int(ag.pause_scans[0] + u_len * (ag.pause_scans[1] - ag.pause_scans[0]))
                    pause = max(pause - 1, 0)
                if target is None and not path:
                    target = next_random_target(p)
            elif target is not None:
                do_step = True
            if do_step and pause == 0:
                bearing = np.arctan2(*(target - p)[::-1])
                th_new = wrap_angle(bearing + np.deg2rad(ag.heading_noise_deg) * n_head)
                L = slope * f_draw + intercept + ag.step_noise * n_len
                q = p + L * np.array([np.cos(th_new), np.sin(th_new)])
                if _inside_area(q, cfg.area) and not any(_in_rect(q, w, 0.2) for w in walls):
                    stepped[t], length[t], heading[t], freq[t] = True, L, th_new, f_draw
                    p = q
                    th = th_new
                elif not path:
                    target = None
        if not stepped[t]:
            heading[t] = th
        pos[t] = p
    return pos, stepped, length, heading, freq, (slope, intercept)


def generate_truth(cfg):
    A = cfg.agents.n_agents
    walls = [tuple(w) for w in cfg.walls]
    cols = [_walk(cfg, a, walls) for a in range(A)]
    heights = np.array([_person_params(cfg, a)[0] for a in range(A)])
    has_device = np.zeros(A, dtype=bool)
    has_device[: cfg.agents.n_devices] = True
    return GroundTruth(
        positions=np.stack([c[0] for c in cols], axis=1),
        stepped=np.stack([c[1] for c in cols], axis=1),
        step_length=np.stack([c[2] for c in cols], axis=1),
        heading=np.stack([c[3] for c in cols], axis=1),
        frequency=np.stack([c[4] for c in cols], axis=1),
        has_device=has_device,
        heights=heights,
        personal=np.array([c[5] for c in cols]),
    )


# sensors ------------------------------------------------------------------

def _occluded(p, t, rects):
    return any(s <= t < e and _in_rect(p, r) for r, s, e in rects)


def simulate_camera(cfg, truth, rects=None):
    """Per scan: (detections (M, 2), source labels (M,)) after shuffling."""
    cam = cfg.camera
    T, A = truth.positions.shape[:2]
    rects = occlusion_rects(cfg) if rects is None else rects
    dets = [[] for _ in range(T)]
    srcs = [[] for _ in range(T)]

    def emit(rng, track, label):
        for t in range(T):
            u = rng.random()
            n = rng.standard_normal(2)
            p = track[t]
            if u < cam.p_d and _inside_area(p, cfg.area) and not _occluded(p, t, rects):
                dets[t].append(p + cam.sigma * n)
                srcs[t].append(label)

    for a in range(A):
        emit(stream(cfg.seed, CAMERA, a), truth.positions[:, a], a)
    for k in range(cam.visual_noise_objects):
        rng = stream(cfg.seed, PHANTOM, k)
        lag = int(rng.integers(max(T // 10, 1), max(T - T // 10, 2)))
        src = truth.positions[:, k % A]
        track = src[(np.arange(T) + lag) % T]
        emit(rng, track, SOURCE_PHANTOM)
    rng = stream(cfg.seed, CLUTTER)
    xmin, xmax, ymin, ymax = cfg.area
    for t in range(T):
        n = rng.poisson(cam.clutter_rate) if cam.clutter_rate > 0 else 0
        for _ in range(n):
            dets[t].append(np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)]))
            srcs[t].append(SOURCE_CLUTTER)
    rng = stream(cfg.seed, SHUFFLE)
    out = []
    for t in range(T):
        order = rng.permutation(len(dets[t]))
        d = np.array(dets[t], dtype=float).reshape(-1, 2)[order]
        out.append((d, np.array(srcs[t], dtype=int)[order]))
    return out


def simulate_radio(cfg, truth, model, schedule=()):
    """RSS per scan: dict device -> (m,) vector with NaN on silent scans."""
    r = cfg.radio
    T = truth.positions.shape[0]
    m = len(model)
    out = [dict() for _ in range(T)]
    models = [model] * T
    for s, mdl in schedule:
        for t in range(s, T):
            models[t] = mdl
    for d in truth.device_ids:
        rng = stream(cfg.seed, RADIO, d)
        for t in range(T):
            noise = rng.standard_normal(m)
            if t % r.period:
                continue
            out[t][d] = models[t].expected(truth.positions[t, d]) + r.sigma * noise
    return out


def simulate_imu(cfg, truth):
    """Step observations per scan: dict device -> StepObservation."""
    imu = cfg.imu
    T = truth.positions.shape[0]
    lo, hi = np.deg2rad(imu.heading_bias_deg[0]), np.deg2rad(imu.heading_bias_deg[1])
    jitter = np.deg2rad(imu.heading_jitter_deg)
    out = [dict() for _ in range(T)]
    flo, fhi = cfg.agents.frequency_range
    for d in truth.device_ids:
        rng = stream(cfg.seed, IMU, d)
        last_f = 0.5 * (flo + fhi)
        for t in range(T):
            u_flip = rng.random()
            u_bias = rng.random()
            n_head, n_f = rng.standard_normal(2)
            true_step = bool(truth.stepped[t, d])
            b = true_step != (u_flip < imu.step_error_rate)
            if true_step:
                last_f = truth.frequency[t, d]
            f = (last_f + imu.frequency_noise * n_f) if b else 0.0
            f = float(np.clip(f, 0.0, 5.0))
            bias = lo + u_bias * (hi - lo)
            th = truth.heading[t, d] + bias + jitter * n_head
            length = float(universal_step_length(DEFAULT_HEIGHT_M, f)) if b else 0.0
            out[t][d] = StepObservation(d, b, length, th, f, t * cfg.dt)
    return out


def generate_scenario(config):
    """Build ground truth and the per-scan measurement log.

    Returns
    -------
    Scenario
    """
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(config)
    _validate(cfg)
    truth = generate_truth(cfg)
    model = ap_layout(cfg)
    schedule = radio_schedule(cfg, model)
    rects = occlusion_rects(cfg)
    cams = simulate_camera(cfg, truth, rects)
    radio = simulate_radio(cfg, truth, model, schedule)
    imu = simulate_imu(cfg, truth)
    scans = [ScanMeasurements(t, cams[t][0], radio[t], imu[t]) for t in range(cfg.n_scans)]
    return Scenario(cfg, truth, scans, model, schedule, [c[1] for c in cams], rects)
