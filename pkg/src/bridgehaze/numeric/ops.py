"""The differentiable operation set used by the predictor network.

Tensors are ``torch.Tensor``; gradients come from torch's reverse-mode tape.
These wrappers pin down the argument checks and conventions (NCHW layout,
stride-1 convolutions, factor-2 nearest resampling) that the rest of the
package relies on.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

Tensor = torch.Tensor


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return a + b


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return a - b


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return a * b


def scale(a: Tensor, c: float) -> Tensor:
    return a * float(c)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul: incompatible shapes {tuple(a.shape)} @ {tuple(b.shape)}")
    return a @ b


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding: int = 1) -> Tensor:
    """Stride-1 2-D cross-correlation, NCHW input, zero padding."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv2d: input has {x.shape[1]} channels, weight expects {weight.shape[1]}"
        )
    return F.conv2d(x, weight, bias, stride=1, padding=padding)


def group_norm(x: Tensor, groups: int, weight: Tensor | None = None,
               bias: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    if groups <= 0 or x.shape[1] % groups:
        raise ValueError(f"group_norm: {x.shape[1]} channels not divisible into {groups} groups")
    return F.group_norm(x, groups, weight, bias, eps)


def silu(x: Tensor) -> Tensor:
    return F.silu(x)


def upsample(x: Tensor) -> Tensor:
    """Nearest-neighbour x2 upsampling of the two spatial axes."""
    return x.repeat_interleave(2, dim=-2).repeat_interleave(2, dim=-1)


def downsample(x: Tensor) -> Tensor:
    """Nearest-neighbour x2 downsampling (keeps the top-left pixel of each 2x2 cell)."""
    if x.shape[-1] % 2 or x.shape[-2] % 2:
        raise ValueError(f"downsample: spatial extent {tuple(x.shape[-2:])} is not even")
    return x[..., ::2, ::2]


def concat(tensors: list[Tensor]) -> Tensor:
    """Concatenate along the channel axis (dim 1)."""
    if not tensors:
        raise ValueError("concat of an empty list")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError("concat: tensors differ outside the channel axis")
    return torch.cat(tensors, dim=1)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over all elements."""
    _same_shape(pred, target, "l1_loss")
    return (pred - target).abs().mean()
