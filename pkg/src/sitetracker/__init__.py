"""Multi-sensor people tracking with cross-modality self-calibration."""

__version__ = "0.1.0"
