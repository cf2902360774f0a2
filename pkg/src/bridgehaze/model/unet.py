"""U-Net endpoint predictor built from RDC residual blocks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..numeric import ops
from .rdc import BRANCHES, RdcBlock


@dataclass
class NetConfig:
    latent_channels: int = 3
    base_channels: int = 32
    levels: int = 2
    blocks_per_level: int = 2
    T: int = 50
    dual: bool = False
    branches: tuple[str, ...] = field(default=BRANCHES)
    rdc_mode: str = "reparam"

    def __post_init__(self):
        self.branches = tuple(self.branches)
        if self.levels < 1 or self.blocks_per_level < 1:
            raise ValueError("levels and blocks_per_level must be >= 1")
        if self.base_channels % 4:
            raise ValueError("base_channels must be a multiple of 4")

    @property
    def downsample_factor(self) -> int:
        return 2 ** (self.levels - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branches"] = list(self.branches)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


def _groups(ch: int) -> int:
    for g in (8, 4, 2, 1):
        if ch % g == 0:
            return g
    return 1


def sinusoidal_embedding(t: torch.Tensor, dim: int, dtype=torch.float32) -> torch.Tensor:
    """Transformer-style sin/cos features of (float) timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype) / half)
    args = t.to(dtype)[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class TimeEmbedding(nn.Module):
    def __init__(self, base: int, dim: int):
        super().__init__()
        self.base = base
        self.fc1 = nn.Linear(base, dim)
        self.fc2 = nn.Linear(dim, dim)

    def forward(self, t_scaled: torch.Tensor) -> torch.Tensor:
        h = sinusoidal_embedding(t_scaled, self.base, self.fc1.weight.dtype)
        return self.fc2(ops.silu(self.fc1(h)))


class GroupNorm(nn.GroupNorm):
    def forward(self, x):
        return ops.group_norm(x, self.num_groups, self.weight, self.bias, self.eps)


class Conv3x3(nn.Conv2d):
    def __init__(self, cin: int, cout: int):
        super().__init__(cin, cout, 3, padding=1)

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, padding=1)


class ResBlock(nn.Module):
    """Pre-activation residual block whose second convolution is an RDC block."""

    def __init__(self, cin: int, cout: int, temb_dim: int, branches, rdc_mode: str = "reparam"):
        super().__init__()
        self.norm1 = GroupNorm(_groups(cin), cin)
        self.conv_in = Conv3x3(cin, cout)
        self.temb = nn.Linear(temb_dim, cout)
        self.norm2 = GroupNorm(_groups(cout), cout)
        self.rdc = RdcBlock(cout, branches, mode=rdc_mode)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, temb):
        h = self.conv_in(ops.silu(self.norm1(x)))
        h = h + self.temb(ops.silu(temb))[:, :, None, None]
        h = self.rdc(ops.silu(self.norm2(h)))
        return h + self.skip(x)


class PredictorNet(nn.Module):
    """Clean-endpoint predictor.

    Single mode: ``forward(z_t, z_T, t)`` predicts ``z_0``.
    Dual mode: ``predict_pair(z_tx, z_ty, t_x, t_y)`` predicts both endpoints
    ``(x, y)``; the two states are stacked on channels and each timestep has
    its own embedding MLP, the two embeddings are summed.
    """

    def __init__(self, config: NetConfig | None = None):
        super().__init__()
        self.config = cfg = config or NetConfig()
        c = cfg.latent_channels
        chans = [cfg.base_channels * 2 ** i for i in range(cfg.levels)]
        temb_dim = 4 * cfg.base_channels
        self.time_embed = nn.ModuleList(
            [TimeEmbedding(cfg.base_channels, temb_dim) for _ in range(2 if cfg.dual else 1)]
        )
        self.head = Conv3x3(2 * c, chans[0])

        self.down_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        prev = chans[0]
        for i, ch in enumerate(chans):
            blocks = nn.ModuleList()
            for _ in range(cfg.blocks_per_level):
                blocks.append(ResBlock(prev, ch, temb_dim, cfg.branches, cfg.rdc_mode))
                prev = ch
            self.down_blocks.append(blocks)
            if i < cfg.levels - 1:
                self.downs.append(Conv3x3(ch, ch))

        self.up_blocks = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i in reversed(range(cfg.levels)):
            ch = chans[i]
            blocks = nn.ModuleList()
            if i == cfg.levels - 1:
                cin = ch
            else:
                self.ups.append(Conv3x3(chans[i + 1], ch))
                cin = 2 * ch
            for _ in range(cfg.blocks_per_level):
                blocks.append(ResBlock(cin, ch, temb_dim, cfg.branches, cfg.rdc_mode))
                cin = ch
            self.up_blocks.append(blocks)

        self.out_norm = GroupNorm(_groups(chans[0]), chans[0])
        self.out = Conv3x3(chans[0], c * (2 if cfg.dual else 1))

    # -- helpers -------------------------------------------------------------
    def _timesteps(self, t, batch: int) -> torch.Tensor:
        t = torch.as_tensor(np.array(t, dtype=np.float32)).reshape(-1)
        if t.numel() == 1:
            t = t.expand(batch)
        if t.numel() != batch:
            raise ValueError("timestep count does not match batch size")
        if (t < 0).any() or (t > self.config.T).any():
            raise ValueError(f"timestep outside [0, {self.config.T}]")
        # embed on a T-independent 0..1000 scale
        return t * (1000.0 / self.config.T)

    def _check_latent(self, z: torch.Tensor) -> None:
        cfg = self.config
        if z.ndim != 4 or z.shape[1] != cfg.latent_channels:
            raise ValueError(
                f"expected (B, {cfg.latent_channels}, H, W) latents, got {tuple(z.shape)}"
            )
        f = cfg.downsample_factor
        if z.shape[2] % f or z.shape[3] % f:
            raise ValueError(f"spatial size {tuple(z.shape[2:])} not divisible by {f}")

    def _unet(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.head(x)
        skips = []
        for i, blocks in enumerate(self.down_blocks):
            for blk in blocks:
                h = blk(h, temb)
            skips.append(h)
            if i < len(self.downs):
                h = ops.downsample(self.downs[i](h))
        ups = iter(self.ups)
        for j, blocks in enumerate(self.up_blocks):
            level = self.config.levels - 1 - j
            if j > 0:
                h = next(ups)(ops.upsample(h))
                h = ops.concat([h, skips[level]])
            for blk in blocks:
                h = blk(h, temb)
        return self.out(ops.silu(self.out_norm(h)))

    # -- public API ----------------------------------------------------------
    def forward(self, z_t: torch.Tensor, z_T: torch.Tensor, t) -> torch.Tensor:
        if self.config.dual:
            raise RuntimeError("dual-mode network: use predict_pair")
        self._check_latent(z_t)
        if z_t.shape != z_T.shape:
            raise ValueError("z_t and z_T must share a shape")
        temb = self.time_embed[0](self._timesteps(t, z_t.shape[0]))
        return self._unet(ops.concat([z_t, z_T]), temb)

    predict_z0 = forward

    def predict_pair(self, z_tx: torch.Tensor, z_ty: torch.Tensor, t_x, t_y):
        if not self.config.dual:
            raise RuntimeError("single-bridge network: use predict_z0")
        self._check_latent(z_tx)
        if z_tx.shape != z_ty.shape:
            raise ValueError("z_tx and z_ty must share a shape")
        b = z_tx.shape[0]
        temb = (self.time_embed[0](self._timesteps(t_x, b))
                + self.time_embed[1](self._timesteps(t_y, b)))
        out = self._unet(ops.concat([z_tx, z_ty]), temb)
        c = self.config.latent_channels
        return out[:, :c], out[:, c:]

    def rdc_blocks(self):
        return [m for m in self.modules() if isinstance(m, RdcBlock)]

    def fuse(self) -> "PredictorNet":
        """Switch to eval mode with merged RDC kernels (sampling speed)."""
        self.eval()
        for blk in self.rdc_blocks():
            blk.fuse()
        return self
