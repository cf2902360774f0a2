"""Residual difference convolution (RDC) block.

Five parallel 3x3 branches read the same input: a vanilla convolution and
four pixel-difference convolutions. Each difference branch owns a plain
learnable 3x3 kernel ``W`` and convolves with a fixed linear transform of it:

* ``cd``  central:    ``sum_p W[p] (x[p] - x[centre])``
* ``ad``  angular:    ``sum_p W[p] (x[p] - x[cw(p)])`` where ``cw`` is the
  next tap clockwise on the 8-ring (a 45 degree rotation)
* ``hd``  horizontal: ``sum_p W[p] (x[p] - x[right(p)])`` (cyclic in the row)
* ``vd``  vertical:   ``sum_p W[p] (x[p] - x[below(p)])`` (cyclic in the column)

Every transformed kernel sums to zero, so the difference branches null
constant inputs. Because convolution is linear in the kernel, the five
branches collapse into one 3x3 kernel (:meth:`RdcBlock.merge`).
"""
from __future__ import annotations

import math

import torch
from torch import nn

from ..numeric import ops

BRANCHES = ("vanilla", "cd", "ad", "hd", "vd")

# Ablation ladder: base conv, then difference branches added one at a time.
ABLATION_CONFIGS = (
    ("vanilla",),
    ("vanilla", "cd"),
    ("vanilla", "cd", "ad"),
    ("vanilla", "cd", "ad", "hd"),
    ("vanilla", "cd", "ad", "hd", "vd"),
)

# Flattened 3x3 index of the tap each position is differenced against.
# Ring order clockwise from top-left: 0 1 2 5 8 7 6 3.
_ANGULAR_PARTNER = (1, 2, 5, 0, 4, 8, 3, 6, 7)
_HORIZONTAL_PARTNER = (1, 2, 0, 4, 5, 3, 7, 8, 6)
_VERTICAL_PARTNER = (3, 4, 5, 6, 7, 8, 0, 1, 2)


def _check_kernel(w: torch.Tensor) -> None:
    if w.ndim != 4 or tuple(w.shape[-2:]) != (3, 3):
        raise ValueError(f"difference kernels need shape (out, in, 3, 3), got {tuple(w.shape)}")


def _pairwise(w: torch.Tensor, partner) -> torch.Tensor:
    # sum_p W[p] (x[p] - x[q(p)]) == conv with K = W - scatter(W, q)
    flat = w.flatten(-2)
    moved = torch.zeros_like(flat)
    moved = moved.index_add(-1, torch.tensor(partner, device=w.device), flat)
    return (flat - moved).reshape(w.shape)


def central_difference(w: torch.Tensor) -> torch.Tensor:
    _check_kernel(w)
    k = w.clone()
    k[..., 1, 1] = k[..., 1, 1] - w.sum(dim=(-2, -1))
    return k


def angular_difference(w: torch.Tensor) -> torch.Tensor:
    _check_kernel(w)
    return _pairwise(w, _ANGULAR_PARTNER)


def horizontal_difference(w: torch.Tensor) -> torch.Tensor:
    _check_kernel(w)
    return _pairwise(w, _HORIZONTAL_PARTNER)


def vertical_difference(w: torch.Tensor) -> torch.Tensor:
    _check_kernel(w)
    return _pairwise(w, _VERTICAL_PARTNER)


def difference_kernels():
    """Map branch name to the kernel transform it applies (vanilla is identity)."""
    return {
        "vanilla": lambda w: w,
        "cd": central_difference,
        "ad": angular_difference,
        "hd": horizontal_difference,
        "vd": vertical_difference,
    }


class RdcBlock(nn.Module):
    """``x + sum_b conv(x, transform_b(W_b)) + bias_b`` over the enabled branches.

    Channel count is preserved so the residual add is always defined.
    """

    def __init__(self, channels: int, branches=BRANCHES, mode: str = "reparam",
                 init_scale: float = 1.0):
        super().__init__()
        if mode not in ("branch", "reparam"):
            raise ValueError(f"mode must be 'branch' or 'reparam', got {mode!r}")
        # branch: one convolution per branch; reparam: one convolution with the
        # merged kernel built inside autograd. Same outputs and gradients.
        self.mode = mode
        unknown = set(branches) - set(BRANCHES)
        if unknown or not branches:
            raise ValueError(f"bad branch list {branches}")
        self.channels = channels
        self.branches = tuple(b for b in BRANCHES if b in branches)
        bound = init_scale / math.sqrt(9 * channels * len(self.branches))
        self.weight = nn.ParameterDict({
            b: nn.Parameter(torch.empty(channels, channels, 3, 3).uniform_(-bound, bound))
            for b in self.branches
        })
        self.bias = nn.ParameterDict({
            b: nn.Parameter(torch.zeros(channels)) for b in self.branches
        })
        self._merged: tuple[torch.Tensor, torch.Tensor] | None = None

    def branch_output(self, x: torch.Tensor, name: str) -> torch.Tensor:
        k = difference_kernels()[name](self.weight[name])
        return ops.conv2d(x, k, self.bias[name], padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ValueError(f"RdcBlock expects {self.channels} channels, got {x.shape[1]}")
        if self._merged is not None and not self.training:
            k, b = self._merged
            return x + ops.conv2d(x, k, b, padding=1)
        if self.mode == "reparam":
            k, b = self._merged_params()
            return x + ops.conv2d(x, k, b, padding=1)
        out = x
        for name in self.branches:
            out = out + self.branch_output(x, name)
        return out

    def _merged_params(self):
        transforms = difference_kernels()
        k = sum(transforms[b](self.weight[b]) for b in self.branches)
        b = sum(self.bias[b] for b in self.branches)
        return k, b

    @torch.no_grad()
    def merge(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Single kernel and bias equivalent to the branch sum."""
        k, b = self._merged_params()
        return k.clone(), b.clone()

    def fuse(self) -> None:
        """Cache the merged kernel; used only while the module is in eval mode."""
        self._merged = self.merge()

    def unfuse(self) -> None:
        self._merged = None

    def train(self, mode: bool = True):
        if mode:
            self._merged = None
        return super().train(mode)


def rdc_merge(block: RdcBlock) -> tuple[torch.Tensor, torch.Tensor]:
    return block.merge()


def rdc_forward(x: torch.Tensor, block: RdcBlock) -> torch.Tensor:
    return block(x)
