"""Value types exchanged between the simulator, the tracker and the learner."""

from dataclasses import dataclass, field

import numpy as np

from ..ukf import GaussianState


@dataclass
class ScanMeasurements:
    """One tracker cycle of measurements.

    ``camera`` holds ground-plane detections (M, 2). ``radio`` maps a device id to
    its RSS vector with NaN for access points not heard this scan. ``steps`` maps a
    device id to its :class:`~sitetracker.inertial.StepObservation`.
    """

    t: int
    camera: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    radio: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)

    def __post_init__(self):
        self.camera = np.asarray(self.camera, dtype=float).reshape(-1, 2)
        self.radio = {int(k): np.asarray(v, dtype=float) for k, v in self.radio.items()}


@dataclass(frozen=True)
class JointMeasurement:
    """A camera detection paired with one device's RSS vector."""

    camera_index: int
    device_id: int
    y: np.ndarray
    ap_mask: np.ndarray

    @property
    def camera_point(self):
        return self.y[:2]

    @property
    def rss(self):
        return self.y[2:]


@dataclass(frozen=True)
class AssociationEvent:
    """``device_id is None`` means clutter."""

    device_id: int = None

    @property
    def is_clutter(self):
        return self.device_id is None

    def __str__(self):
        return "clutter" if self.is_clutter else f"target:{self.device_id}"


CLUTTER = AssociationEvent(None)


@dataclass
class TargetState:
    device_id: int
    gaussian: GaussianState
    last_camera_scan: int
    quality: float = 0.0
    birth_scan: int = 0


@dataclass
class Particle:
    """Materialized view of one particle of a :class:`ParticleSet`."""

    weight: float
    targets: dict
    events: list = field(default_factory=list)
