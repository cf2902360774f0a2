"""Adam with bias correction, written against plain tensors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import torch


class NonFiniteGradientError(FloatingPointError):
    """Raised when a gradient contains NaN or Inf; the update is not applied."""


@dataclass
class AdamState:
    step: int = 0
    exp_avg: list[torch.Tensor] = field(default_factory=list)
    exp_avg_sq: list[torch.Tensor] = field(default_factory=list)


@torch.no_grad()
def adam_step(params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor | None],
              state: AdamState, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """Apply one Adam update in place to ``params`` and return the new state.

    ``None`` gradients are treated as zero. Any non-finite gradient aborts the
    whole step before a single parameter is touched.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"param {i}: shape {tuple(p.shape)} vs grad {tuple(g.shape)}")
        if not torch.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient in parameter {i}")
    if not state.exp_avg:
        state.exp_avg = [torch.zeros_like(p) for p in params]
        state.exp_avg_sq = [torch.zeros_like(p) for p in params]
    elif len(state.exp_avg) != len(params):
        raise ValueError("optimizer state does not match the parameter list")

    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    step_size = lr / bc1
    for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        denom = (v / bc2).sqrt_().add_(eps)
        p.addcdiv_(m, denom, value=-step_size)
    return state


class Adam:
    """Minimal optimizer object around :func:`adam_step`."""

    def __init__(self, params: Iterable[torch.Tensor], lr: float = 5e-5,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        if not lr > 0 or not math.isfinite(lr):
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state,
                  self.lr, self.betas, self.eps)

    def state_tensors(self) -> dict[str, torch.Tensor]:
        out = {"step": torch.tensor([self.state.step], dtype=torch.int64)}
        for i, (m, v) in enumerate(zip(self.state.exp_avg, self.state.exp_avg_sq)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_tensors(self, tensors: dict[str, torch.Tensor]) -> None:
        self.state.step = int(tensors["step"].item())
        n = len(self.params)
        if "m.0" in tensors:
            self.state.exp_avg = [tensors[f"m.{i}"].clone() for i in range(n)]
            self.state.exp_avg_sq = [tensors[f"v.{i}"].clone() for i in range(n)]
