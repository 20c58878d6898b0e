"""Age of Incorrect Information: threshold analysis, constrained optimisation and simulation."""

from aoii.model import PenaltyState, SystemParams, TransitionDistribution, aoii_kernel, step_aoi, step_aoii

__version__ = "0.1.0"

__all__ = [
    "PenaltyState",
    "SystemParams",
    "TransitionDistribution",
    "aoii_kernel",
    "step_aoi",
    "step_aoii",
    "__version__",
]
