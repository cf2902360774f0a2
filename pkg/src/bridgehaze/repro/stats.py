"""Closed-form and Monte Carlo checks of the bridge process."""
from __future__ import annotations

import math

import numpy as np
import torch

from ..bridge import DiffusedState, SamplerMode, forward_marginal, forward_transition, reverse_step, sample
from ..numeric.rng import RngStream
from ..schedule import BridgeSchedule, build_schedule, posterior_coefficients
from .result import CriterionResult, timed

Z_SCORE = 3.0


def _mean_var_z(samples: np.ndarray, mean: float, var: float) -> tuple[float, float]:
    """z-scores of the sample mean and variance against Gaussian targets."""
    n = len(samples)
    se_mean = math.sqrt(var / n)
    se_var = var * math.sqrt(2.0 / (n - 1))
    z_mean = (samples.mean() - mean) / se_mean if se_mean > 0 else (
        0.0 if samples.mean() == mean else math.inf)
    z_var = (samples.var(ddof=1) - var) / se_var if se_var > 0 else (
        0.0 if samples.var() == 0 else math.inf)
    return float(z_mean), float(z_var)


@timed
def schedule_identities(Ts=(2, 4, 50, 1000), ss=(0.5, 1.0, 2.0, 4.0), rtol: float = 1e-12):
    """Endpoint pinning, symmetry, peak variance, marginal/transition identity, T=4 table."""
    worst = 0.0
    failures = []
    for T in Ts:
        for s in ss:
            sch = build_schedule(T, s)
            m, d = sch.m, sch.delta
            ok = m[0] == 0 and m[T] == 1 and d[0] == 0 and d[T] == 0
            ok &= bool(np.all(d[1:T] > 0))
            sym = np.max(np.abs(d - d[::-1])) / (s / 2)
            peak = abs(d.max() - s / 2) / (s / 2) if T % 2 == 0 else 0.0
            ok &= d.max() <= s / 2 * (1 + rtol)
            r = (1 - m[1:]) / (1 - m[:-1])
            recon = sch.delta_cond[1:] + d[:-1] * r * r
            ident = np.max(np.abs(recon - d[1:]) / np.maximum(np.abs(d[1:]), s / 2))
            worst = max(worst, sym, peak, ident)
            if not ok or max(sym, peak, ident) > rtol:
                failures.append((T, s))
    hand = build_schedule(4, 1.0)
    table_ok = (
        hand.m.tolist() == [0, 0.25, 0.5, 0.75, 1]
        and hand.delta.tolist() == [0, 0.375, 0.5, 0.375, 0]
        and np.allclose(hand.delta_cond[1:], [0.375, 1 / 3, 0.25, 0], rtol=1e-15, atol=1e-16)
        and np.allclose(hand.delta_tilde[1:4], [0, 0.25, 1 / 3], rtol=1e-15, atol=1e-16)
    )
    return CriterionResult(
        "schedule identities", not failures and table_ok,
        f"worst relative deviation {worst:.1e} (tol {rtol:g}); hand T=4 table "
        f"{'reproduced' if table_ok else 'MISMATCH'}; failing (T, s): {failures}",
    )


@timed
def chain_vs_marginal(n_chains: int = 10**5, T: int = 4, s: float = 1.0, seed: int = 2024):
    """Run forward transitions from z_0 and compare each step with the marginal."""
    sch = build_schedule(T, s)
    rng = RngStream(seed, 0)
    z0 = torch.zeros(n_chains, dtype=torch.float64)
    zT = torch.ones(n_chains, dtype=torch.float64)
    z = z0
    worst = 0.0
    rows = []
    for t in range(1, T + 1):
        z = forward_transition(z, zT, t, sch, rng)
        mean = (1 - sch.m[t]) * 0.0 + sch.m[t] * 1.0
        zm, zv = _mean_var_z(z.numpy(), mean, sch.delta[t])
        rows.append(f"t={t}: z_mean={zm:+.2f} z_var={zv:+.2f}")
        worst = max(worst, abs(zm), abs(zv))
    return CriterionResult("chain vs marginal", worst <= Z_SCORE,
                           f"max |z| {worst:.2f} (limit {Z_SCORE}); " + "; ".join(rows))


@timed
def posterior_oracle(n: int = 10**6, T: int = 4, s: float = 1.0, n_bins: int = 4,
                     seed: int = 77):
    """Bin forward (z_{t-1}, z_t) draws on z_t and test the conditional law of z_{t-1}.

    Within each bin the residual ``z_{t-1} - (a z_t + b z_T + c z_0)`` must
    have mean 0 and variance ``delta_tilde_t``.
    """
    sch = build_schedule(T, s)
    rng = RngStream(seed, 0)
    z0v, zTv = 0.0, 1.0
    zT = torch.full((n,), zTv, dtype=torch.float64)
    worst = 0.0
    rows = []
    for t in range(2, T):
        z0 = torch.full((n,), z0v, dtype=torch.float64)
        prev = forward_marginal(z0, zT, t - 1, sch, rng).numpy()
        cur = forward_transition(torch.from_numpy(prev), zT, t, sch, rng).numpy()
        a, b, c, var = posterior_coefficients(sch, t)
        resid = prev - (a * cur + b * zTv + c * z0v)
        edges = np.quantile(cur, np.linspace(0, 1, n_bins + 1))
        which = np.clip(np.searchsorted(edges, cur, side="right") - 1, 0, n_bins - 1)
        for k in range(n_bins):
            zm, zv = _mean_var_z(resid[which == k], 0.0, var)
            worst = max(worst, abs(zm), abs(zv))
        rows.append(f"t={t}: a={a:.4f} b={b:.4f} c={c:.4f} var={var:.4f}")
    return CriterionResult("posterior oracle", worst <= Z_SCORE,
                           f"max |z| over {n_bins} bins x {T - 2} steps: {worst:.2f} "
                           f"(limit {Z_SCORE}); " + "; ".join(rows))


class TwoPointOracle:
    """Exact posterior sampler for a scalar two-point clean distribution.

    ``q(z_0) = p * delta(u0) + (1 - p) * delta(u1)`` with a fixed endpoint.
    Returning a posterior *draw* of ``z_0`` makes the posterior sampler an
    exact ancestral sampler of the reverse chain.
    """

    def __init__(self, sched: BridgeSchedule, u=(-1.0, 1.0), p: float = 0.3,
                 rng: RngStream | None = None):
        self.sched = sched
        self.u = u
        self.p = p
        self.rng = rng or RngStream(0, 5)

    def weights(self, z: np.ndarray, zT: np.ndarray, t: int) -> np.ndarray:
        """Posterior probability of ``u0`` given ``z_t``."""
        m, d = self.sched.m[t], self.sched.delta[t]
        if d == 0.0:
            return np.full(z.shape, self.p)
        log0 = math.log(self.p) - (z - (1 - m) * self.u[0] - m * zT) ** 2 / (2 * d)
        log1 = math.log(1 - self.p) - (z - (1 - m) * self.u[1] - m * zT) ** 2 / (2 * d)
        return 1.0 / (1.0 + np.exp(log1 - log0))

    def __call__(self, z: torch.Tensor, zT: torch.Tensor, t: int) -> torch.Tensor:
        w = self.weights(z.numpy(), zT.numpy(), t)
        pick0 = self.rng.uniform(size=w.shape) < w
        return torch.from_numpy(np.where(pick0, self.u[0], self.u[1])).to(z.dtype)

    def mean_var(self) -> tuple[float, float]:
        mean = self.p * self.u[0] + (1 - self.p) * self.u[1]
        second = self.p * self.u[0] ** 2 + (1 - self.p) * self.u[1] ** 2
        return mean, second - mean * mean


@timed
def time_reversal(n_chains: int = 10**5, T: int = 4, s: float = 1.0, seed: int = 99):
    """Posterior sampler with an exact oracle reproduces q(z_0)."""
    sch = build_schedule(T, s)
    oracle = TwoPointOracle(sch, rng=RngStream(seed, 1))
    zT = torch.full((n_chains,), 0.5, dtype=torch.float64)
    out = sample(oracle, zT, sch, SamplerMode("posterior"), RngStream(seed, 2)).numpy()
    mean, var = oracle.mean_var()
    zm, zv = _mean_var_z(out, mean, var)
    # the two-point law has finite kurtosis; use its exact variance-of-variance
    n = len(out)
    mu4 = oracle.p * (oracle.u[0] - mean) ** 4 + (1 - oracle.p) * (oracle.u[1] - mean) ** 4
    se_var = math.sqrt((mu4 - var * var) / n)
    zv = (out.var(ddof=1) - var) / se_var
    ok = abs(zm) <= Z_SCORE and abs(zv) <= Z_SCORE
    return CriterionResult(
        "time reversal", ok,
        f"sample mean {out.mean():.4f} vs {mean:.4f} (z={zm:+.2f}); "
        f"variance {out.var(ddof=1):.4f} vs {var:.4f} (z={zv:+.2f})",
    )


def reverse_step_joint(T: int = 4, t: int = 2, n: int = 10**5, seed: int = 3):
    """Compare (z_{t-1}, z_t) from forward draws with reverse_step under the true z_0.

    Returns the z-scores of mean, variance and covariance of z_{t-1}.
    """
    sch = build_schedule(T, 1.0)
    rng = RngStream(seed, 0)
    z0 = torch.zeros(n, dtype=torch.float64)
    zT = torch.ones(n, dtype=torch.float64)
    z_t = forward_marginal(z0, zT, t, sch, rng)
    state = reverse_step(DiffusedState(z_t, t, zT), z0, sch, SamplerMode("posterior"), rng)
    prev, cur = state.z.numpy(), z_t.numpy()
    mean = sch.m[t - 1]
    var = sch.delta[t - 1]
    zm, zv = _mean_var_z(prev, mean, var)
    r = (1 - sch.m[t]) / (1 - sch.m[t - 1])
    cov_true = r * var
    prod = (prev - prev.mean()) * (cur - cur.mean())
    zc = (prod.mean() - cov_true) / (prod.std(ddof=1) / math.sqrt(n))
    return zm, zv, float(zc)
