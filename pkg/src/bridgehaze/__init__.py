"""Semi-supervised image dehazing with bidirectional Brownian bridge diffusion."""
from .bridge import SamplerMode, ddim_grid, forward_marginal, forward_transition, reverse_step, sample
from .estimator import BridgeDehazer, check_images
from .schedule import BridgeSchedule, build_schedule
from .training import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "BridgeDehazer",
    "BridgeSchedule",
    "SamplerMode",
    "TrainConfig",
    "build_schedule",
    "check_images",
    "ddim_grid",
    "forward_marginal",
    "forward_transition",
    "reverse_step",
    "sample",
]
