"""Image <-> latent maps.

The bridge runs in whatever space the encoder defines. A learned
autoencoder can be dropped in by implementing ``encode``/``decode``.
"""
from __future__ import annotations

import torch


class IdentityEncoder:
    name = "identity"

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        return images

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return latents


class PixelEncoder:
    """Affine map of [0, 1] pixels onto [-1, 1] latents."""

    name = "pixel"

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        return images * 2.0 - 1.0

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        return ((latents + 1.0) * 0.5).clamp(0.0, 1.0)


ENCODERS = {"identity": IdentityEncoder, "pixel": PixelEncoder}


def get_encoder(name: str):
    try:
        return ENCODERS[name]()
    except KeyError:
        raise ValueError(f"unknown encoder {name!r}; choose from {sorted(ENCODERS)}") from None
