"""Seeded random streams.

Every random draw in the package goes through an :class:`RngStream`. A stream
is identified by ``(seed, stream_id)``; distinct ids give independent
sequences via :class:`numpy.random.SeedSequence` spawn keys.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch


class RngStream:
    """Reproducible random source bound to a ``(seed, stream_id)`` pair.

    Not thread safe; give each thread or chain its own stream.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, stream_id: int) -> "RngStream":
        """Derive an independent stream from the same root seed."""
        return RngStream(self.seed, stream_id)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, shape: Sequence[int]) -> np.ndarray:
        return self._gen.standard_normal(tuple(shape))

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        """Uniform integers in the closed range ``[low, high]``."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)


def _check_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(n) for n in shape)
    if len(shape) == 0 or any(n <= 0 for n in shape):
        raise ValueError(f"shape extents must be positive, got {shape}")
    return shape


def gaussian(shape, rng: RngStream, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """I.i.d. standard normal tensor drawn from ``rng``."""
    shape = _check_shape(shape)
    return torch.from_numpy(rng.normal(shape)).to(dtype)
