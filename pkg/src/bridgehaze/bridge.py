"""Forward and reverse Brownian bridge processes and the sampling loop."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from .numeric.rng import RngStream, gaussian
from .schedule import BridgeSchedule, bridge_posterior

SAMPLER_VARIANTS = ("posterior", "remarginalize", "paper_literal")


@dataclass(frozen=True)
class SamplerMode:
    variant: str = "posterior"
    steps: int | None = None  # None means every timestep

    def __post_init__(self):
        variant = self.variant.replace("-", "_")
        if variant not in SAMPLER_VARIANTS:
            raise ValueError(f"unknown sampler variant {self.variant!r}")
        object.__setattr__(self, "variant", variant)
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class DiffusedState:
    z: torch.Tensor
    t: int
    z_T: torch.Tensor

    def __post_init__(self):
        if self.z.shape != self.z_T.shape:
            raise ValueError("z and z_T must share a shape")


def _noise_like(z: torch.Tensor, rng: RngStream) -> torch.Tensor:
    return gaussian(z.shape, rng, dtype=z.dtype)


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def _per_sample(values, z: torch.Tensor) -> torch.Tensor:
    """Broadcast per-batch-item scalars over the remaining axes of ``z``."""
    v = torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=z.dtype)
    return v.reshape((-1,) + (1,) * (z.ndim - 1))


def forward_marginal(z0: torch.Tensor, zT: torch.Tensor, t, sched: BridgeSchedule,
                     rng: RngStream, noise: torch.Tensor | None = None) -> torch.Tensor:
    """Draw ``z_t ~ N((1-m_t) z0 + m_t zT, delta_t)``.

    ``t`` is an int, or a 1-D array with one timestep per batch item (axis 0).
    At ``t = 0`` and ``t = T`` the endpoint is returned bit-exactly.
    """
    _check_pair(z0, zT)
    if np.ndim(t) == 0:
        t = sched.check_t(t)
        if t == 0:
            return z0.clone()
        if t == sched.T:
            return zT.clone()
        m, d = sched.m[t], sched.delta[t]
        eps = _noise_like(z0, rng) if noise is None else noise
        return (1.0 - m) * z0 + m * zT + math.sqrt(d) * eps
    t = np.asarray(t, dtype=np.int64)
    if t.shape != (z0.shape[0],):
        raise ValueError("per-sample timesteps must match the batch axis")
    if t.min() < 0 or t.max() > sched.T:
        raise ValueError(f"timesteps outside [0, {sched.T}]")
    m = _per_sample(sched.m[t], z0)
    sd = _per_sample(np.sqrt(sched.delta[t]), z0)
    eps = _noise_like(z0, rng) if noise is None else noise
    out = (1.0 - m) * z0 + m * zT + sd * eps
    # pinned items must be exact, not merely close
    if (t == 0).any():
        out[torch.from_numpy(t == 0)] = z0[torch.from_numpy(t == 0)]
    if (t == sched.T).any():
        out[torch.from_numpy(t == sched.T)] = zT[torch.from_numpy(t == sched.T)]
    return out


def forward_transition(z_prev: torch.Tensor, zT: torch.Tensor, t: int,
                       sched: BridgeSchedule, rng: RngStream) -> torch.Tensor:
    """One Markov step ``z_{t-1} -> z_t`` of the forward bridge."""
    _check_pair(z_prev, zT)
    t = sched.check_t(t, low=1)
    if t == sched.T:
        return zT.clone()
    m, mp = sched.m[t], sched.m[t - 1]
    r = (1.0 - m) / (1.0 - mp)
    mean = r * z_prev + (m - r * mp) * zT
    var = sched.delta_cond[t]
    if var == 0.0:
        return mean
    return mean + math.sqrt(var) * _noise_like(z_prev, rng)


def reverse_step(state: DiffusedState, z0_hat: torch.Tensor, sched: BridgeSchedule,
                 mode: SamplerMode, rng: RngStream, t_next: int | None = None) -> DiffusedState:
    """Move ``state`` from ``t`` to ``t_next`` (default ``t - 1``).

    ``posterior`` draws from the exact bridge posterior given ``z0_hat``;
    ``remarginalize`` re-diffuses ``z0_hat`` to ``t_next``; ``paper_literal``
    evaluates ``(1 - m_t) z0_hat + m_t z_T + sqrt(delta_t) eps`` with
    the noise dropped at ``t = 1``.
    """
    t = sched.check_t(state.t, low=1)
    t_next = t - 1 if t_next is None else int(t_next)
    if not 0 <= t_next < t:
        raise ValueError(f"reverse step must go backwards: {t} -> {t_next}")
    _check_pair(z0_hat, state.z)
    z, zT = state.z, state.z_T

    if mode.variant == "posterior":
        a, b, c, var = bridge_posterior(sched.m, sched.delta, t, t_next)
        out = a * z + b * zT + c * z0_hat
        if var > 0.0:
            out = out + math.sqrt(var) * _noise_like(z, rng)
    elif mode.variant == "remarginalize":
        out = forward_marginal(z0_hat, zT, t_next, sched, rng)
    else:
        m, d = sched.m[t], sched.delta[t]
        out = (1.0 - m) * z0_hat + m * zT
        if t > 1 and d > 0.0:
            out = out + math.sqrt(d) * _noise_like(z, rng)
    return DiffusedState(z=out, t=t_next, z_T=zT)


def ddim_grid(T: int, n: int) -> list[int]:
    """``n`` evenly spaced timesteps from ``T`` down to ``1``.

    ``n = 1`` gives the single point ``[T]`` (one jump straight to ``t = 0``).
    """
    if not 1 <= n <= T:
        raise ValueError(f"need 1 <= n <= T, got n={n}, T={T}")
    if n == 1:
        return [int(T)]
    grid = np.round(np.linspace(T, 1, n)).astype(int)
    return [int(v) for v in grid]


Predictor = Callable[[torch.Tensor, torch.Tensor, int], torch.Tensor]


@torch.no_grad()
def sample(predictor: Predictor, zT: torch.Tensor, sched: BridgeSchedule,
           mode: SamplerMode, rng: RngStream) -> torch.Tensor:
    """Run the reverse bridge from ``z_T`` to a ``z_0`` estimate.

    ``predictor(z_t, z_T, t)`` returns the clean-endpoint prediction.
    """
    steps = sched.T if mode.steps is None else min(mode.steps, sched.T)
    grid = ddim_grid(sched.T, steps)
    state = DiffusedState(z=zT.clone(), t=sched.T, z_T=zT)
    for i, t in enumerate(grid):
        t_next = grid[i + 1] if i + 1 < len(grid) else 0
        z0_hat = predictor(state.z, zT, t)
        state = reverse_step(state, z0_hat, sched, mode, rng, t_next=t_next)
    return state.z
