"""Second-order averaging toolkit for highly oscillatory systems and extremum-seeking loops."""

from .averaging import AveragingContext, Psi_inverse, Phi, average_field, pushforward_split
from .bump import Deltas, chi1, chi2, phi
from .core import OscillatorySystem, SimConfig, make_system
from .presets import ExperimentConfig, build, load_config, preset, save_config
from .sim import Trajectory, averaging_order_sweep, estimate_ultimate_bound, integrate, integrate_averaged

__all__ = [
    "AveragingContext", "Deltas", "ExperimentConfig", "OscillatorySystem", "Phi", "Psi_inverse", "SimConfig",
    "Trajectory", "average_field", "averaging_order_sweep", "build", "chi1", "chi2", "estimate_ultimate_bound",
    "integrate", "integrate_averaged", "load_config", "make_system", "phi", "preset", "pushforward_split",
    "save_config",
]
