"""Run configuration: one JSON document with five sections."""

import dataclasses
from dataclasses import dataclass, field

from ..config import from_dict, load_json, merge, to_dict
from ..exceptions import InvalidConfig
from ..learning import (CALIBRATION_HEADING_TOL, CALIBRATION_ISOLATION, CALIBRATION_TRIM_SIGMAS,
                        DEFAULT_ALPHA_GRID, OCCLUSION_THRESHOLD, Q_THRESHOLD)
from ..sim.config import ScenarioConfig
from ..sim.presets import PRESETS
from ..socialforce import SfmParams
from ..tracker import TrackerConfig

SECTIONS = ("scenario", "tracker", "sfm", "learning", "experiment")

EXPERIMENT_KINDS = ("single", "ablation", "occlusion", "heading", "sfm", "visual_noise",
                    "learning_rate", "quality", "step_learning", "crossing", "suite")


@dataclass
class LearningConfig:
    q_threshold: float = Q_THRESHOLD
    radio: bool = True
    steps: bool = True
    occlusion: bool = False
    min_samples: int = 2
    occlusion_cell: float = 0.5
    occlusion_threshold: float = OCCLUSION_THRESHOLD
    occlusion_window: int = 0          # scans; 0 uses the whole run
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    step_isolation: float = CALIBRATION_ISOLATION        # 0 disables the gate
    step_heading_tolerance: float = CALIBRATION_HEADING_TOL
    step_trim_sigmas: float = CALIBRATION_TRIM_SIGMAS

    def __post_init__(self):
        if self.q_threshold < 0:
            raise InvalidConfig("learning.q_threshold must be non-negative")
        if self.occlusion_cell <= 0:
            raise InvalidConfig("learning.occlusion_cell must be positive")
        if not self.alpha_grid or any(not 0 < a < 1 for a in self.alpha_grid):
            raise InvalidConfig("learning.alpha_grid needs rates in (0, 1)")
        if min(self.step_isolation, self.step_heading_tolerance, self.step_trim_sigmas) < 0:
            raise InvalidConfig("learning.step_* gates must be non-negative")


@dataclass
class ExperimentConfig:
    kind: str = "single"
    preset: str = "default"
    seeds: tuple = (0,)
    points: tuple = ()                 # sweep values; empty selects the kind's default sweep
    n_scans: int = 0                   # 0 keeps the scenario's length
    burn_in: int = 0                   # scans ignored by the metrics
    mis_power: float = 8.0             # radio mis-specification used by the ablation
    mis_exponent: float = 0.8
    untrained_pd: float = 0.5          # camera of an untrained detector in the ablation
    untrained_clutter: float = 1.5
    scale: str = "full"                # full | small (the suite uses small for quick reruns)

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise InvalidConfig(f"experiment.kind must be one of {', '.join(EXPERIMENT_KINDS)}")
        if self.preset not in PRESETS:
            raise InvalidConfig(f"experiment.preset must be one of {', '.join(sorted(PRESETS))}")
        if not self.seeds:
            raise InvalidConfig("experiment.seeds must not be empty")
        if self.n_scans < 0 or self.burn_in < 0:
            raise InvalidConfig("experiment.n_scans and burn_in must be non-negative")
        if self.scale not in ("full", "small"):
            raise InvalidConfig("experiment.scale must be 'full' or 'small'")


@dataclass
class RunConfig:
    scenario: dict = field(default_factory=dict)   # overrides merged onto the preset
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    sfm: SfmParams = field(default_factory=SfmParams)
    learning: LearningConfig = field(default_factory=LearningConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def scenario_dict(self, seed=None, **overrides):
        """Preset merged with the scenario section and ``overrides``."""
        preset = PRESETS[self.experiment.preset]
        base = preset(seed if seed is not None else self.scenario.get("seed", 0))
        out = merge(base, self.scenario)
        if seed is not None:
            out["seed"] = seed
        if self.experiment.n_scans:
            out["n_scans"] = self.experiment.n_scans
        return merge(out, overrides)

    def scenario_config(self, seed=None, **overrides):
        return ScenarioConfig.from_dict(self.scenario_dict(seed, **overrides))

    def tracker_config(self, **changes):
        return dataclasses.replace(self.tracker, **changes)

    def to_dict(self):
        return to_dict(self)


def parse_config(data):
    """Validate a config mapping; unknown sections or keys raise InvalidConfig."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise InvalidConfig("config must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise InvalidConfig(f"unknown section(s) {', '.join(unknown)}")
    scenario = data.get("scenario") or {}
    if not isinstance(scenario, dict):
        raise InvalidConfig("scenario: expected an object")
    cfg = RunConfig(
        scenario=scenario,
        tracker=from_dict(TrackerConfig, data.get("tracker"), "tracker"),
        sfm=from_dict(SfmParams, data.get("sfm"), "sfm"),
        learning=from_dict(LearningConfig, data.get("learning"), "learning"),
        experiment=from_dict(ExperimentConfig, data.get("experiment"), "experiment"),
    )
    # the scenario can only be checked once merged onto its preset
    cfg.scenario_config()
    return cfg


def load_config(path):
    return parse_config(load_json(path))
