"""Multi-target tracking over camera, radio and inertial measurements."""

from .association import association_prior, build_joint_measurements, check_restrictions
from .filter import (MAX_WEIGHT, MIXTURE, MultiTargetTracker, ParticleSet, ScanReport,
                     TrackerConfig, TrackerModels, estimate_positions, kill_stale_targets,
                     process_scan, resample_systematic, spawn_targets)
from .types import CLUTTER, AssociationEvent, JointMeasurement, Particle, ScanMeasurements, TargetState
from .vision_only import VisionOnlyConfig, VisionOnlyTracker

__all__ = [
    "AssociationEvent", "CLUTTER", "JointMeasurement", "MAX_WEIGHT", "MIXTURE",
    "MultiTargetTracker", "Particle", "ParticleSet", "ScanMeasurements", "ScanReport",
    "TargetState", "TrackerConfig", "TrackerModels", "VisionOnlyConfig", "VisionOnlyTracker", "association_prior",
    "build_joint_measurements", "check_restrictions", "estimate_positions",
    "kill_stale_targets", "process_scan", "resample_systematic", "spawn_targets",
]
