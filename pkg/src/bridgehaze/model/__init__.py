from .checkpoint import CheckpointError, freeze, load_checkpoint, save_checkpoint
from .encoder import IdentityEncoder, PixelEncoder, get_encoder
from .rdc import ABLATION_CONFIGS, BRANCHES, RdcBlock, difference_kernels, rdc_forward, rdc_merge
from .unet import NetConfig, PredictorNet

__all__ = [
    "ABLATION_CONFIGS",
    "BRANCHES",
    "CheckpointError",
    "IdentityEncoder",
    "NetConfig",
    "PixelEncoder",
    "PredictorNet",
    "RdcBlock",
    "difference_kernels",
    "freeze",
    "get_encoder",
    "load_checkpoint",
    "rdc_forward",
    "rdc_merge",
    "save_checkpoint",
]
