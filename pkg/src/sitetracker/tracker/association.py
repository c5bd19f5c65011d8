"""Joint measurements and the association prior."""

import numpy as np

from ..exceptions import UnknownTarget
from .types import AssociationEvent, JointMeasurement

DEFAULT_CLUTTER_PRIOR = 0.3
DEFAULT_PD = 0.9


def build_joint_measurements(scan):
    """Pair every camera detection with every device heard this scan.

    Ordering is camera index major, device id minor. APs missing from a
    device's RSS vector (NaN) are dropped from the stacked vector.
    """
    devices = sorted(d for d, r in scan.radio.items() if np.any(np.isfinite(r)))
    out = []
    for m, c in enumerate(scan.camera):
        for j in devices:
            rss = scan.radio[j]
            mask = np.isfinite(rss)
            out.append(JointMeasurement(m, j, np.concatenate([c, rss[mask]]), mask))
    return out


def association_prior(particle, event, events_so_far, measurement, p_c=DEFAULT_CLUTTER_PRIOR,
                      p_d=DEFAULT_PD, relax_shared_detection=False):
    """Prior probability of ``event`` for ``measurement`` given earlier events in the scan.

    ``events_so_far`` is a list of ``(JointMeasurement, AssociationEvent)`` pairs
    already sampled for this particle in the current scan.
    """
    if event.is_clutter:
        return p_c
    j = event.device_id
    if j not in particle.targets:
        raise UnknownTarget(j)
    if j != measurement.device_id:
        return 0.0
    used_targets = {e.device_id for _, e in events_so_far if not e.is_clutter}
    if j in used_targets:
        return 0.0
    if not relax_shared_detection:
        used_cams = {jm.camera_index for jm, e in events_so_far if not e.is_clutter}
        if measurement.camera_index in used_cams:
            return 0.0
    # only the measurement's own device can be eligible, so the count is one
    return (1.0 - p_c) * p_d


def check_restrictions(record, measurements, relax_shared_detection=False):
    """Return a list of violations in one particle's association record.

    ``record`` holds one entry per joint measurement: a device id or -1 for clutter.
    """
    errors = []
    seen_targets = set()
    seen_cams = set()
    for k, (jm, ev) in enumerate(zip(measurements, record)):
        ev = int(ev)
        if ev < 0:
            continue
        if ev != jm.device_id:
            errors.append((k, "device mismatch"))
        if ev in seen_targets:
            errors.append((k, "target updated twice"))
        if jm.camera_index in seen_cams and not relax_shared_detection:
            errors.append((k, "camera detection reused"))
        seen_targets.add(ev)
        seen_cams.add(jm.camera_index)
    return errors


def event_from_code(code):
    return AssociationEvent(None if code < 0 else int(code))
