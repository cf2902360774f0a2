"""Closed-form Brownian bridge schedule.

All constants are float64. Index ``t`` runs over ``0..T``; entries that are
undefined at ``t = 0`` (transition and posterior quantities) hold NaN there.

Forward marginal::

    z_t ~ N((1 - m_t) z_0 + m_t z_T, delta_t),   m_t = t / T,
    delta_t = 2 s (m_t - m_t**2)

Reverse posterior (z_0-parameterised)::

    z_{t-1} | z_t, z_0, z_T ~ N(a_t z_t + b_t z_T + c_t z_0, delta_tilde_t)

with ``a_t + b_t + c_t = 1``. See ``docs/derivations.md`` for the algebra.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BridgeSchedule:
    T: int
    s: float
    m: np.ndarray
    delta: np.ndarray
    delta_cond: np.ndarray
    post_coeff: np.ndarray  # (T + 1, 3): a_t, b_t, c_t
    delta_tilde: np.ndarray
    literal_coeff: np.ndarray  # (T + 1, 3): literal c_t, c_T, c_eps, NaN where undefined

    def __post_init__(self):
        for arr in (self.m, self.delta, self.delta_cond, self.post_coeff,
                    self.delta_tilde, self.literal_coeff):
            arr.setflags(write=False)

    def check_t(self, t: int, low: int = 0) -> int:
        t = int(t)
        if not low <= t <= self.T:
            raise ValueError(f"timestep {t} outside [{low}, {self.T}]")
        return t

    def table(self) -> list[dict]:
        """One row per timestep, for inspection and the ``schedule`` command."""
        rows = []
        for t in range(self.T + 1):
            a, b, c = self.post_coeff[t]
            rows.append({
                "t": t, "m": self.m[t], "delta": self.delta[t],
                "delta_cond": self.delta_cond[t], "a": a, "b": b, "c": c,
                "delta_tilde": self.delta_tilde[t],
            })
        return rows


def _transition_ratio(m: np.ndarray, t: int, t_prev: int) -> float:
    # (1 - m_t) / (1 - m_{t'}); t' < T always, so the denominator is positive.
    return (1.0 - m[t]) / (1.0 - m[t_prev])


def _build(T: int, s: float) -> BridgeSchedule:
    m = np.arange(T + 1, dtype=np.float64) / T
    delta = 2.0 * s * (m - m * m)
    # pin the endpoints exactly; float rounding of m - m*m is already exact
    # at 0 and 1, this keeps it explicit
    delta[0] = delta[T] = 0.0

    delta_cond = np.full(T + 1, np.nan)
    post = np.full((T + 1, 3), np.nan)
    dtilde = np.full(T + 1, np.nan)
    literal = np.full((T + 1, 3), np.nan)
    for t in range(1, T + 1):
        a, b, c, v = bridge_posterior(m, delta, t, t - 1)
        r = _transition_ratio(m, t, t - 1)
        delta_cond[t] = delta[t] - delta[t - 1] * r * r
        post[t] = (a, b, c)
        dtilde[t] = v
        if 0.0 < delta[t]:
            literal[t] = (
                delta[t - 1] / delta[t] * r + (1 - m[t - 1]) * delta_cond[t] / delta[t],
                m[t - 1] - m[t] * r * delta[t - 1] / delta[t],
                (1 - m[t - 1]) * delta_cond[t] / delta[t],
            )
    return BridgeSchedule(T=T, s=float(s), m=m, delta=delta, delta_cond=delta_cond,
                          post_coeff=post, delta_tilde=dtilde, literal_coeff=literal)


def build_schedule(T: int, s: float = 1.0) -> BridgeSchedule:
    """Precompute every bridge constant for ``T`` steps and variance scale ``s``."""
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if not s > 0:
        raise ValueError(f"variance scale s must be positive, got {s}")
    return _build(int(T), float(s))


def build_schedule_unchecked(T: int, s: float) -> BridgeSchedule:
    """Like :func:`build_schedule` but admits ``s = 0`` (noise-free bridge).

    Test harness only.
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    return _build(int(T), float(s))


def bridge_posterior(m: np.ndarray, delta: np.ndarray, t: int, t_prev: int):
    """Coefficients of ``q(z_{t'} | z_t, z_0, z_T)`` for ``t' < t``.

    Returns ``(a, b, c, var)`` such that the conditional is
    ``N(a z_t + b z_T + c z_0, var)``. Exact Gaussian conditioning of the
    marginal at ``t'`` on the multi-step transition ``t' -> t``; the
    ``t = T`` case (``delta_T = 0``) reduces to the marginal at ``t'``.
    """
    if not 0 <= t_prev < t:
        raise ValueError(f"need 0 <= t' < t, got t'={t_prev}, t={t}")
    mp, dp = m[t_prev], delta[t_prev]
    if delta[t] == 0.0:
        # z_t carries nothing beyond the endpoints (t = T, or the s = 0 bridge)
        return 0.0, mp, 1.0 - mp, dp
    r = _transition_ratio(m, t, t_prev)
    cond = delta[t] - dp * r * r
    a = dp * r / delta[t]
    b = mp - a * m[t]
    c = (1.0 - mp) * cond / delta[t]
    var = cond * dp / delta[t]
    return a, b, c, max(var, 0.0)


def posterior_coefficients(sched: BridgeSchedule, t: int):
    """``(a_t, b_t, c_t, delta_tilde_t)`` for an interior step ``2 <= t <= T-1``.

    The boundary steps ``t = 1`` and ``t = T`` are handled by
    :func:`bridge_posterior` (and are stored in the schedule arrays).
    """
    t = int(t)
    if not 2 <= t <= sched.T - 1:
        raise ValueError(f"posterior_coefficients needs 2 <= t <= {sched.T - 1}, got {t}")
    a, b, c = sched.post_coeff[t]
    return float(a), float(b), float(c), float(sched.delta_tilde[t])
