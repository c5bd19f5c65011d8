"""Deterministic scenario simulator."""

from .config import AgentModel, CameraModel, ImuModel, RadioSim, ScenarioConfig
from .generate import GroundTruth, Scenario, generate_scenario

__all__ = ["AgentModel", "CameraModel", "GroundTruth", "ImuModel", "RadioSim", "Scenario",
           "ScenarioConfig", "generate_scenario"]
