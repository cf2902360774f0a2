"""Kernel-merge and gradient checks for the network building blocks."""
from __future__ import annotations

import torch

from ..model.rdc import RdcBlock, difference_kernels
from ..model.unet import NetConfig, PredictorNet
from ..numeric import ops
from .result import CriterionResult, timed

DIFF_BRANCHES = ("cd", "ad", "hd", "vd")


@timed
def rdc_merge_equivalence(n_blocks: int = 100, n_inputs: int = 100, channels: int = 4,
                          size: int = 8, tol: float = 1e-5, seed: int = 0):
    """Branch sum vs merged kernel, and constant nulling of the difference branches."""
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for i in range(n_blocks):
            torch.manual_seed(seed * 100_003 + i)
            blk = RdcBlock(channels, mode="branch")  # default initialisation
            for name in blk.branches:
                blk.bias[name].copy_(torch.randn(channels, generator=gen) * 0.1)
            x = torch.randn(n_inputs, channels, size, size, generator=gen)
            k, b = blk.merge()
            merged = x + ops.conv2d(x, k, b, padding=1)
            worst = max(worst, (blk(x) - merged).abs().max().item())
    null_worst = constant_nulling(seed=seed)
    ok = worst < tol and null_worst == 0.0
    return CriterionResult(
        "RDC merge equivalence", ok,
        f"max |branch - merged| {worst:.2e} over {n_blocks}x{n_inputs} (tol {tol:g}); "
        f"constant nulling max interior response {null_worst:g}",
    )


def constant_nulling(n_trials: int = 50, seed: int = 0) -> float:
    """Largest interior response of a difference branch to a constant input.

    Weights and the constant are small dyadic rationals, so every product and
    sum is exact in float64 and the response must be exactly zero.
    """
    gen = torch.Generator().manual_seed(seed + 1)
    transforms = difference_kernels()
    worst = 0.0
    for _ in range(n_trials):
        w = torch.randint(-64, 65, (3, 2, 3, 3), generator=gen).double() / 64
        c = float(torch.randint(-32, 33, (1,), generator=gen)) / 8
        x = torch.full((1, 2, 6, 6), c, dtype=torch.float64)
        for name in DIFF_BRANCHES:
            k = transforms[name](w)
            out = ops.conv2d(x, k, padding=1)[..., 1:-1, 1:-1]
            worst = max(worst, out.abs().max().item())
    return worst


# -- gradients --------------------------------------------------------------------

def op_cases(gen: torch.Generator):
    """(name, input, function) triples covering every differentiable core op."""
    def r(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    other = r(4, 4)
    w = r(2, 3, 3, 3)
    b = r(2)
    gw, gb = r(4), r(4)
    cat_other = r(1, 2, 4, 4)
    proj = r(1, 2, 8, 8)
    conv_in = r(1, 3, 4, 4)
    yield "add", r(4, 4), lambda x: ops.add(x, other)
    yield "sub", r(4, 4), lambda x: ops.sub(x, other)
    yield "mul", r(4, 4), lambda x: ops.mul(x, other)
    yield "scale", r(4, 4), lambda x: ops.scale(x, -1.7)
    yield "matmul", r(4, 4), lambda x: ops.matmul(x, other)
    yield "conv2d", r(1, 3, 4, 4), lambda x: ops.conv2d(x, w, b, padding=1)
    yield "conv2d_weight", r(2, 3, 3, 3), lambda k: ops.conv2d(conv_in, k)
    yield "group_norm", r(2, 4, 4, 4), lambda x: ops.group_norm(x, 2, gw, gb)
    yield "silu", r(4, 4), ops.silu
    yield "upsample", r(1, 2, 4, 4), lambda x: ops.upsample(x) * proj
    yield "downsample", r(1, 2, 4, 4), ops.downsample
    yield "concat", r(1, 2, 4, 4), lambda x: ops.concat([x, cat_other])
    yield "l1_loss", r(3, 5), lambda x: ops.l1_loss(x, other[:3, :4].repeat(1, 2)[:, :5] + 0.01)
    for name in DIFF_BRANCHES:
        yield f"rdc_{name}", r(2, 2, 3, 3), (
            lambda k, f=difference_kernels()[name]: ops.conv2d(conv_in[:, :2], f(k), padding=1))


OP_NAMES = [name for name, _, _ in op_cases(torch.Generator().manual_seed(0))]


def central_difference_grad(f, x: torch.Tensor, h: float = 1e-4) -> torch.Tensor:
    """Gradient of scalar ``f`` at ``x`` by central differences, one entry at a time."""
    x = x.detach().clone()
    g = torch.zeros_like(x)
    flat, gflat = x.view(-1), g.view(-1)
    for i in range(flat.numel()):
        old = flat[i].item()
        flat[i] = old + h
        fp = float(f(x))
        flat[i] = old - h
        fm = float(f(x))
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    return float((a - b).norm() / max(b.norm(), a.norm(), 1e-12))


def op_gradient_error(name: str, trials: int = 20) -> float:
    worst = 0.0
    for trial in range(trials):
        gen = torch.Generator().manual_seed(1000 * trial + 17)
        cases = {n: (x, f) for n, x, f in op_cases(gen)}
        x, f = cases[name]
        # random linear functional makes every output entry matter
        probe = torch.randn(f(x).shape, generator=gen, dtype=torch.float64)

        def scalar(v):
            return (f(v) * probe).sum()

        xg = x.clone().requires_grad_(True)
        scalar(xg).backward()
        fd = central_difference_grad(lambda v: scalar(v).item(), x, h=1e-4)
        worst = max(worst, relative_error(xg.grad, fd))
    return worst


# two channels per norm group, so the per-channel time bias survives group norm
# and the time-embedding path is part of the check
TINY_NET = dict(latent_channels=2, base_channels=16, levels=2, blocks_per_level=1, T=10)


def network_gradient_error(trials: int = 20, n_params: int = 12, dual: bool = False,
                           rdc_mode: str = "reparam") -> float:
    """FD check of a tiny float64 network w.r.t. its input and random parameter entries."""
    worst = 0.0
    for trial in range(trials):
        gen = torch.Generator().manual_seed(trial)
        torch.manual_seed(trial)
        net = PredictorNet(NetConfig(**TINY_NET, dual=dual, rdc_mode=rdc_mode)).double()
        z = torch.randn(2, 2, 4, 4, generator=gen, dtype=torch.float64)
        y = torch.randn(2, 2, 4, 4, generator=gen, dtype=torch.float64)
        t = [int(v) for v in torch.randint(0, 11, (2,), generator=gen)]
        probe = torch.randn(2, 2, 4, 4, generator=gen, dtype=torch.float64)

        def loss(inp):
            if dual:
                a, b = net.predict_pair(inp, y, t, t[::-1])
                return ((a + 0.5 * b) * probe).sum()
            return (net(inp, y, t) * probe).sum()

        zg = z.clone().requires_grad_(True)
        net.zero_grad()
        loss(zg).backward()
        with torch.no_grad():
            fd = central_difference_grad(lambda v: loss(v).item(), z)
        worst = max(worst, relative_error(zg.grad, fd))

        params = [p for p in net.parameters()]
        sizes = torch.tensor([p.numel() for p in params], dtype=torch.float64)
        for _ in range(n_params):
            i = int(torch.multinomial(sizes, 1, generator=gen))
            j = int(torch.randint(0, params[i].numel(), (1,), generator=gen))
            p = params[i]
            analytic = p.grad.view(-1)[j].item()
            with torch.no_grad():
                old = p.view(-1)[j].item()
                p.view(-1)[j] = old + 1e-5
                fp = loss(z).item()
                p.view(-1)[j] = old - 1e-5
                fm = loss(z).item()
                p.view(-1)[j] = old
            numeric = (fp - fm) / 2e-5
            denom = max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


@timed
def gradient_checks(trials: int = 20, tol: float = 1e-3):
    errs = {name: op_gradient_error(name, trials) for name in OP_NAMES}
    errs["network"] = network_gradient_error(trials)
    errs["network_dual"] = network_gradient_error(trials, dual=True)
    errs["network_branch"] = network_gradient_error(trials, rdc_mode="branch")
    bad = {k: v for k, v in errs.items() if not v < tol}
    worst_name = max(errs, key=errs.get)
    return CriterionResult(
        "gradient checks", not bad,
        f"{len(errs)} cases x {trials} trials; worst {worst_name} "
        f"{errs[worst_name]:.2e} (tol {tol:g}); failing: {sorted(bad)}",
    )
