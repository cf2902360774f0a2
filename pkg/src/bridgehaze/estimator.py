"""scikit-learn style wrapper around the two-stage pipeline."""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .bridge import SamplerMode
from .metrics import psnr
from .model.encoder import get_encoder
from .numeric.rng import RngStream
from .training import STREAM_SAMPLE, TrainConfig, dehaze_latents, train_stage1, train_stage2


def check_images(X, name: str = "X", multiple_of: int = 1) -> np.ndarray:
    """Validate an ``(N, H, W, 3)`` stack of images in ``[0, 1]``."""
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_2d=False, input_name=name)
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (N, H, W, 3), got {X.shape}")
    if X.min() < 0 or X.max() > 1:
        raise ValueError(f"{name} must lie in [0, 1]")
    if X.shape[1] % multiple_of or X.shape[2] % multiple_of:
        raise ValueError(f"{name} spatial size {X.shape[1:3]} not divisible by {multiple_of}")
    return X


class BridgeDehazer(TransformerMixin, BaseEstimator):
    """Semi-supervised bridge-diffusion dehazer.

    ``fit(X, y, X_unpaired=...)`` takes hazy images ``X``, their clean
    counterparts ``y`` and optional unpaired clean images. Stage 1 learns
    on the pairs; stage 2 learns on the unpaired clean set (``y`` when none
    is given). ``transform``/``predict`` return dehazed images.
    """

    def __init__(self, T=50, s=1.0, lr=5e-5, batch_size=8, stage1_iters=1000,
                 stage2_iters=1000, base_channels=32, levels=2, blocks_per_level=2,
                 sampler="posterior", steps=10, encoder="pixel", seed=0):
        self.T = T
        self.s = s
        self.lr = lr
        self.batch_size = batch_size
        self.stage1_iters = stage1_iters
        self.stage2_iters = stage2_iters
        self.base_channels = base_channels
        self.levels = levels
        self.blocks_per_level = blocks_per_level
        self.sampler = sampler
        self.steps = steps
        self.encoder = encoder
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(T=self.T, s=self.s, lr=self.lr, batch_size=self.batch_size,
                           stage1_iters=self.stage1_iters, stage2_iters=self.stage2_iters,
                           base_channels=self.base_channels, levels=self.levels,
                           blocks_per_level=self.blocks_per_level, sampler=self.sampler,
                           steps=self.steps, encoder=self.encoder, seed=self.seed,
                           log_every=10**9)

    def _latents(self, images: np.ndarray) -> torch.Tensor:
        t = torch.as_tensor(np.ascontiguousarray(images.transpose(0, 3, 1, 2)),
                            dtype=torch.float32)
        return get_encoder(self.encoder).encode(t)

    def fit(self, X, y, X_unpaired=None):
        config = self._train_config()
        f = 2 ** (self.levels - 1)
        X = check_images(X, "X", f)
        y = check_images(y, "y", f)
        if X.shape != y.shape:
            raise ValueError("X and y must have the same shape")
        unpaired = y if X_unpaired is None else check_images(X_unpaired, "X_unpaired", f)
        stage1 = train_stage1(config, self._latents(y), self._latents(X))
        self.stage1_net_ = stage1.net
        self.stage1_losses_ = list(stage1.losses)
        if config.stage2_iters > 0:
            stage2 = train_stage2(config, self._latents(unpaired), stage1.net)
            self.net_ = stage2.net
            self.stage2_losses_ = list(stage2.losses)
        else:
            self.net_ = None
            self.stage2_losses_ = []
        self.config_ = config
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        if self.net_ is None:
            raise ValueError("fitted without stage 2; no dehazing network")
        X = check_images(X, "X", 2 ** (self.levels - 1))
        mode = SamplerMode(self.sampler, self.steps)
        z = dehaze_latents(self.net_, self._latents(X), self.config_.schedule(), mode,
                           RngStream(self.seed, STREAM_SAMPLE))
        return get_encoder(self.encoder).decode(z).numpy().transpose(0, 2, 3, 1).astype(np.float64)

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        """Mean PSNR (dB) of dehazed ``X`` against clean ``y``."""
        y = check_images(y, "y")
        return float(np.mean([psnr(a, b) for a, b in zip(self.transform(X), y)]))
