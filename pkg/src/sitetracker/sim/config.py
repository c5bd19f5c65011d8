"""Scenario configuration."""

from dataclasses import dataclass, field

from ..config import from_dict


@dataclass
class CameraModel:
    p_d: float = 0.9
    clutter_rate: float = 0.5      # Poisson mean of clutter detections per scan
    sigma: float = 0.2             # per-axis position noise [m]
    visual_noise_objects: int = 0  # phantom people replayed from future truth


@dataclass
class RadioSim:
    n_aps: int = 12
    layout: str = "perimeter"      # perimeter | grid | explicit
    positions: tuple = ()          # used when layout == "explicit"
    ref_power: tuple = (-45.0, -35.0)
    exponent: tuple = (2.0, 3.0)
    sigma: float = 3.2
    period: int = 1                # emit every `period` scans
    events: tuple = ()             # ({"scan": s, "aps": [..] | null, "d_power": x, "d_exponent": y}, ...)


@dataclass
class ImuModel:
    step_error_rate: float = 0.084
    heading_bias_deg: tuple = (0.0, 0.0)
    heading_jitter_deg: float = 3.0
    frequency_noise: float = 0.02


@dataclass
class AgentModel:
    n_agents: int = 8
    n_devices: int = 5
    height_range: tuple = (1.6, 1.95)
    frequency_range: tuple = (1.3, 2.3)
    personal_jitter: float = 0.1      # relative deviation of personal model from universal
    step_noise: float = 0.005         # truth step-length jitter [m]
    heading_noise_deg: float = 4.0    # truth heading wobble around the waypoint bearing
    pause_prob: float = 0.3
    pause_scans: tuple = (4, 20)
    paths: tuple = ()                 # optional explicit waypoint lists, one per agent
    starts: tuple = ()                # optional start points; default is the first waypoint
    loop_paths: bool = True
    margin: float = 0.5


@dataclass
class ScenarioConfig:
    seed: int = 0
    area: tuple = (0.0, 11.0, 0.0, 9.0)   # xmin, xmax, ymin, ymax
    n_scans: int = 1800
    dt: float = 0.5
    camera: CameraModel = field(default_factory=CameraModel)
    radio: RadioSim = field(default_factory=RadioSim)
    imu: ImuModel = field(default_factory=ImuModel)
    agents: AgentModel = field(default_factory=AgentModel)
    walls: tuple = ()                # ([xmin, ymin, xmax, ymax], ...)
    occlusions: tuple = ()           # ({"rect": [...], "start": s, "end": e}, ...)
    occlusion_fraction: float = 0.0  # adds one seeded rectangle covering this area fraction
    occlusion_seed: int = None       # placement stream; defaults to `seed`

    @classmethod
    def from_dict(cls, data):
        return from_dict(cls, data, "scenario")
