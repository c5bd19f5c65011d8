"""Cross-modality learning from high-quality tracks.

Tracks whose cumulative quality score clears a threshold are trusted enough
to serve as labelled data: their camera-confirmed states re-fit the radio
propagation model and the personal step-length model, camera detections
over a window reveal occluded cells, and replaying a window under different
detector learning rates picks the rate with the best cumulative quality.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateCalibration, DegenerateGeometry, OutOfBand
from .inertial import (MIN_CALIBRATION_POINTS, STEP_CLAMP, StepModelState,
                       fit_personal_step_model)
from .radio import AccessPoint, RadioModel, fit_path_loss

Q_THRESHOLD = 300.0
OCCLUSION_THRESHOLD = 0.05
DEFAULT_ALPHA_GRID = (0.0005, 0.001, 0.002, 0.0032, 0.005, 0.01, 0.02)
# step calibration: a camera step is only trusted when nobody else is this close [m],
# its direction agrees with the inertial heading [deg], and its fit residual is not an outlier
CALIBRATION_ISOLATION = 1.0
CALIBRATION_HEADING_TOL = 15.0
CALIBRATION_TRIM_SIGMAS = 4.0


def quality_increment(likelihood, clutter_density, p_d):
    """Log-ratio of target versus clutter for an assigned measurement, or the miss penalty."""
    if likelihood is None:
        return math.log(1.0 - p_d)
    return math.log(likelihood * p_d / clutter_density)


@dataclass
class QualityLedger:
    increments: list = field(default_factory=list)

    def add(self, increment):
        self.increments.append(float(increment))

    @property
    def Q(self):
        return math.fsum(self.increments)

    @property
    def T(self):
        return len(self.increments)


def qualify_track(ledger, q_threshold=Q_THRESHOLD):
    q = ledger.Q if isinstance(ledger, QualityLedger) else float(ledger)
    return q >= q_threshold


@dataclass
class TrackState:
    scan: int
    x: float
    y: float
    type_a: bool
    detection: int = -1


@dataclass
class Track:
    """One continuous track of a device in the tracker's best-particle history."""

    device_id: int
    birth_scan: int
    states: list
    ledger: QualityLedger

    @property
    def Q(self):
        return self.ledger.Q

    @property
    def T(self):
        return len(self.states)


@dataclass
class QualifiedTrack:
    device_id: int
    states: list             # TrackState, type(a) when camera + radio updated the state
    Q: float
    samples: list = field(default_factory=list)   # (scan, camera xy, rss vector) of type(a) states
    birth_scan: int = 0

    def __post_init__(self):
        if self.Q < 0 or not np.isfinite(self.Q):
            raise ValueError("qualified tracks carry a finite non-negative score")


def tracks_from_history(history):
    """Split best-particle history rows into tracks keyed by (device, birth scan)."""
    groups = {}
    for row in history:
        groups.setdefault((row.device_id, row.birth_scan), []).append(row)
    tracks = []
    for (d, b), rows in sorted(groups.items()):
        rows.sort(key=lambda r: r.scan)
        ledger = QualityLedger()
        prev = 0.0
        for r in rows:
            ledger.add(r.quality - prev)
            prev = r.quality
        states = [TrackState(r.scan, r.x, r.y, r.type_a, r.detection) for r in rows]
        tracks.append(Track(d, b, states, ledger))
    return tracks


def qualified_tracks(tracks, scans, q_threshold=Q_THRESHOLD):
    """Attach camera positions and RSS to the type(a) states of qualifying tracks."""
    by_t = {s.t: s for s in scans}
    out = []
    for tr in tracks:
        if not qualify_track(tr.ledger, q_threshold):
            continue
        samples = []
        for st in tr.states:
            scan = by_t.get(st.scan)
            if not st.type_a or st.detection < 0 or scan is None:
                continue
            rss = scan.radio.get(tr.device_id)
            if rss is None:
                continue
            samples.append((st.scan, scan.camera[st.detection].copy(), rss))
        out.append(QualifiedTrack(tr.device_id, tr.states, max(tr.Q, 0.0), samples, tr.birth_scan))
    return out


def learn_radio_model(qualified, prior_model, min_samples=2):
    """Per-AP least-squares re-fit on type(a) camera positions and RSS.

    APs whose samples are too few or geometrically degenerate keep their
    prior parameters.
    """
    locs, rss = [], []
    for q in qualified:
        for _, xy, r in q.samples:
            locs.append(xy)
            rss.append(r)
    if not locs:
        return prior_model
    locs = np.asarray(locs, dtype=float)
    rss = np.asarray(rss, dtype=float)
    aps = []
    for i, ap in enumerate(prior_model.access_points):
        ok = np.isfinite(rss[:, i])
        if ok.sum() < min_samples:
            aps.append(ap)
            continue
        try:
            p, n, _ = fit_path_loss((locs[ok], rss[ok, i]), ap.position)
            aps.append(AccessPoint(ap.id, ap.position, p, n))
        except (DegenerateGeometry, OutOfBand):
            aps.append(ap)
    return RadioModel(tuple(aps))


def _isolation(camera, i):
    if len(camera) < 2:
        return math.inf
    d = np.hypot(*(camera - camera[i]).T)
    d[i] = math.inf
    return float(d.min())


def extract_step_calibration(track, scans, step_clamp=STEP_CLAMP, isolation=CALIBRATION_ISOLATION,
                             heading_tolerance=CALIBRATION_HEADING_TOL):
    """(camera step length, step frequency) pairs for reported steps.

    A step reported at scan t is measured as the distance between the
    detections assigned at t - 1 and t; both states must be type(a).
    Lengths outside the plausible range (spurious step reports) are dropped,
    as are pairs where another detection lies within ``isolation`` meters of
    either endpoint. With a ``heading_tolerance`` (degrees), the camera
    displacement must point along the reported heading up to the track's
    median offset, which absorbs a constant compass bias.
    """
    by_t = {s.t: s for s in scans}
    states = {s.scan: s for s in track.states}
    cand = []
    for t in sorted(states):
        a, b = states.get(t - 1), states[t]
        if a is None or not (a.type_a and b.type_a) or a.detection < 0 or b.detection < 0:
            continue
        scan = by_t.get(t)
        if scan is None or (t - 1) not in by_t:
            continue
        obs = scan.steps.get(track.device_id)
        if obs is None or not obs.step:
            continue
        prev = by_t[t - 1]
        if isolation and min(_isolation(prev.camera, a.detection),
                             _isolation(scan.camera, b.detection)) < isolation:
            continue
        dv = scan.camera[b.detection] - prev.camera[a.detection]
        sv = float(np.hypot(*dv))
        if step_clamp[0] <= sv <= step_clamp[1]:
            off = math.remainder(math.atan2(dv[1], dv[0]) - obs.heading, 2 * math.pi)
            cand.append((sv, float(obs.frequency), off))
    if heading_tolerance and cand:
        offs = np.array([c[2] for c in cand])
        centre = math.atan2(np.median(np.sin(offs)), np.median(np.cos(offs)))
        tol = math.radians(heading_tolerance)
        cand = [c for c in cand if abs(math.remainder(c[2] - centre, 2 * math.pi)) <= tol]
    return [(sv, f) for sv, f, _ in cand]


def trim_calibration(calibration, sigmas=CALIBRATION_TRIM_SIGMAS, floor=0.01, rounds=3):
    """Drop pairs whose least-squares residual exceeds ``sigmas`` robust deviations.

    The deviation is 1.4826 times the median absolute residual, floored at
    ``floor`` meters so a near-exact fit does not reject rounding noise.
    """
    cal = list(calibration)
    if not sigmas:
        return cal
    for _ in range(rounds):
        if len(cal) < MIN_CALIBRATION_POINTS:
            break
        sv, f = np.array(cal, dtype=float).T
        if np.ptp(f) <= 0:
            break
        slope, icpt = np.polyfit(f, sv, 1)
        r = sv - (slope * f + icpt)
        scale = max(1.4826 * float(np.median(np.abs(r - np.median(r)))), floor)
        keep = np.abs(r) <= sigmas * scale
        if keep.all():
            break
        cal = [c for c, k in zip(cal, keep) if k]
    return cal


def learn_step_models(qualified, scans, prior=None, trim=CALIBRATION_TRIM_SIGMAS, **kwargs):
    """Device id -> StepModelState with a personal fit where calibration allows.

    ``kwargs`` go to :func:`extract_step_calibration`.
    """
    models = dict(prior or {})
    pairs = {}
    for q in qualified:
        pairs.setdefault(q.device_id, []).extend(extract_step_calibration(q, scans, **kwargs))
    for d, cal in sorted(pairs.items()):
        try:
            personal = fit_personal_step_model(trim_calibration(cal, trim))
        except DegenerateCalibration:
            continue
        base = models.get(d) or StepModelState()
        models[d] = StepModelState(base.universal, personal, base.r2_threshold)
    return models


def cumulative_quality_score(tracks, q_threshold=Q_THRESHOLD):
    return math.fsum(t.Q for t in tracks if t.Q >= q_threshold)


def write_quality_report(tracks, path, q_threshold=Q_THRESHOLD):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["track", "device_id", "T", "Q", "qualified"])
        for i, t in enumerate(tracks):
            w.writerow([i, t.device_id, t.T, f"{t.Q:.6f}", int(t.Q >= q_threshold)])


# occlusion map ----------------------------------------------------------

@dataclass
class OcclusionMap:
    origin: tuple
    cell_size: float
    shape: tuple                    # (rows along y, cols along x)
    counts: np.ndarray = None
    threshold: float = OCCLUSION_THRESHOLD

    def __post_init__(self):
        if self.cell_size <= 0 or min(self.shape) <= 0:
            raise ValueError("occlusion map needs a positive cell size and dimensions")
        if self.counts is None:
            self.counts = np.zeros(self.shape, dtype=np.int64)

    @classmethod
    def covering(cls, area, cell_size=0.5, threshold=OCCLUSION_THRESHOLD):
        xmin, xmax, ymin, ymax = area
        cols = int(math.ceil((xmax - xmin) / cell_size - 1e-9))
        rows = int(math.ceil((ymax - ymin) / cell_size - 1e-9))
        return cls((xmin, ymin), cell_size, (rows, cols), threshold=threshold)

    def cell_of(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        c = np.floor((pts[:, 0] - self.origin[0]) / self.cell_size).astype(int)
        r = np.floor((pts[:, 1] - self.origin[1]) / self.cell_size).astype(int)
        inside = (r >= 0) & (r < self.shape[0]) & (c >= 0) & (c < self.shape[1])
        return r, c, inside

    def add(self, points):
        r, c, inside = self.cell_of(points)
        np.add.at(self.counts, (r[inside], c[inside]), 1)

    @property
    def normalized(self):
        top = self.counts.max()
        return self.counts / top if top > 0 else np.zeros(self.shape)

    @property
    def occluded(self):
        return self.normalized < self.threshold

    def centers(self):
        rows, cols = self.shape
        xs = self.origin[0] + (np.arange(cols) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(rows) + 0.5) * self.cell_size
        return np.stack(np.meshgrid(xs, ys), axis=-1)   # (rows, cols, 2)

    def obstacles(self):
        """Occluded cell centers (n, 2); each cell becomes a circle of radius cell/sqrt(2)."""
        return self.centers()[self.occluded]

    @property
    def obstacle_radius(self):
        return self.cell_size / math.sqrt(2.0)

    def dumps(self):
        lines = [f"origin {self.origin[0]:.6f} {self.origin[1]:.6f}",
                 f"cell {self.cell_size:.6f}",
                 f"shape {self.shape[0]} {self.shape[1]}",
                 f"threshold {self.threshold:.6f}",
                 "# rows from the lowest y upward, 1 = occluded"]
        occ = self.occluded
        lines += [" ".join("1" if v else "0" for v in row) for row in occ]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    def save_obstacles(self, path):
        r = self.obstacle_radius
        with open(path, "w") as fh:
            fh.write("# x y radius\n")
            for x, y in self.obstacles():
                fh.write(f"{x:.6f} {y:.6f} {r:.6f}\n")


def learn_occlusion_map(detections, occlusion_map, window=None, threshold=None):
    """Accumulate detections into a fresh copy of ``occlusion_map``.

    ``detections`` is either an (n, 2) array or a per-scan sequence of arrays;
    with a sequence, only the last ``window`` scans are used.
    """
    m = OcclusionMap(occlusion_map.origin, occlusion_map.cell_size, occlusion_map.shape,
                     threshold=occlusion_map.threshold if threshold is None else threshold)
    if isinstance(detections, np.ndarray):
        m.add(detections)
        return m
    seq = list(detections)
    if window is not None and window > 0:
        seq = seq[-window:]
    for d in seq:
        if len(d):
            m.add(d)
    return m


# detector learning rate ------------------------------------------------

def optimize_detector_learning_rate(replay, alpha_grid=DEFAULT_ALPHA_GRID):
    """Return (best alpha, {alpha: CQS}) with ``replay(alpha) -> CQS``.

    The grid is scanned in increasing order and only a strictly larger score
    replaces the incumbent, so ties go to the smaller rate.
    """
    grid = sorted(set(float(a) for a in alpha_grid))
    if not grid:
        raise ValueError("empty learning-rate grid")
    scores = {}
    best, best_score = None, -math.inf
    for a in grid:
        s = float(replay(a))
        scores[a] = s
        if s > best_score:
            best, best_score = a, s
    return best, scores
