from .optim import Adam, AdamState, NonFiniteGradientError, adam_step
from .rng import RngStream, gaussian
from .tensorio import load_archive, load_tensor, save_archive, save_tensor

__all__ = [
    "Adam",
    "AdamState",
    "NonFiniteGradientError",
    "RngStream",
    "adam_step",
    "gaussian",
    "load_archive",
    "load_tensor",
    "save_archive",
    "save_tensor",
]
