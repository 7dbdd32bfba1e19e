"""Space-time target detection with a STAR-RIS aided radar."""

from .array import Direction, HalfSpace, steering_vector, ura_positions
from .detector import Decision, Hypothesis, build_bank, gic_decide, sequential_decide
from .errors import (
    DegenerateCellError,
    EnergyConservationError,
    InsufficientTrialsError,
    InvalidConfigurationError,
    StarRadarError,
)
from .experiment import ExperimentConfig, calibrate_threshold, run_sweep
from .ris import Policy, make_codes, stack_profile, synthesize_profiles
from .scene import DisturbanceModel, RadarSystem, Scene, build_covariance

__all__ = [
    "Decision", "DegenerateCellError", "Direction", "DisturbanceModel", "EnergyConservationError",
    "ExperimentConfig", "HalfSpace", "Hypothesis", "InsufficientTrialsError",
    "InvalidConfigurationError", "Policy", "RadarSystem", "Scene", "StarRadarError",
    "build_bank", "build_covariance", "calibrate_threshold", "gic_decide", "make_codes",
    "run_sweep", "sequential_decide", "stack_profile", "steering_vector", "synthesize_profiles",
    "ura_positions",
]
__version__ = "0.1.0"
