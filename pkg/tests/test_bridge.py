import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgehaze.bridge import (DiffusedState, SamplerMode, ddim_grid, forward_marginal,
                               forward_transition, reverse_step, sample)
from bridgehaze.numeric import RngStream
from bridgehaze.repro.stats import (TwoPointOracle, chain_vs_marginal, posterior_oracle,
                                    reverse_step_joint)
from bridgehaze.schedule import build_schedule, build_schedule_unchecked

SCHED = build_schedule(4, 1.0)


def _pair(n=8, dtype=torch.float64):
    g = torch.Generator().manual_seed(1)
    return torch.randn(n, 3, dtype=dtype, generator=g), torch.randn(n, 3, dtype=dtype, generator=g)


def test_endpoints_are_pinned_exactly():
    z0, zT = _pair()
    rng = RngStream(0)
    assert torch.equal(forward_marginal(z0, zT, 0, SCHED, rng), z0)
    assert torch.equal(forward_marginal(z0, zT, 4, SCHED, rng), zT)
    assert torch.equal(forward_transition(z0, zT, 4, SCHED, rng), zT)


def test_per_sample_timesteps_pin_each_item():
    z0, zT = _pair(5)
    t = np.array([0, 4, 2, 0, 4])
    out = forward_marginal(z0, zT, t, SCHED, RngStream(0))
    assert torch.equal(out[0], z0[0]) and torch.equal(out[3], z0[3])
    assert torch.equal(out[1], zT[1]) and torch.equal(out[4], zT[4])
    assert not torch.equal(out[2], z0[2])


def test_per_sample_timesteps_match_scalar_path():
    z0, zT = _pair(4)
    noise = torch.randn_like(z0)
    out = forward_marginal(z0, zT, np.full(4, 2), SCHED, RngStream(0), noise=noise)
    ref = forward_marginal(z0, zT, 2, SCHED, RngStream(0), noise=noise)
    assert torch.allclose(out, ref, atol=1e-15)


def test_marginal_moments():
    n = 10**5
    z0 = torch.full((n,), -1.0, dtype=torch.float64)
    zT = torch.full((n,), 3.0, dtype=torch.float64)
    z = forward_marginal(z0, zT, 2, SCHED, RngStream(4)).numpy()
    # mean 0.5*(-1) + 0.5*3 = 1, variance 0.5
    assert abs(z.mean() - 1.0) < 3 * math.sqrt(0.5 / n)
    assert abs(z.var() - 0.5) < 3 * 0.5 * math.sqrt(2 / n)


def test_timestep_out_of_range():
    z0, zT = _pair()
    with pytest.raises(ValueError):
        forward_marginal(z0, zT, 5, SCHED, RngStream(0))
    with pytest.raises(ValueError):
        forward_marginal(z0, zT, np.array([0, 1, 2, 3, 4, 5, 1, 1]), SCHED, RngStream(0))
    with pytest.raises(ValueError):
        forward_marginal(z0, zT[:2], 2, SCHED, RngStream(0))


def test_zero_noise_chain_is_linear_interpolation():
    sch = build_schedule_unchecked(4, 0.0)
    z0, zT = _pair()
    z = z0
    for t in range(1, 5):
        z = forward_transition(z, zT, t, sch, RngStream(t))
        assert torch.allclose(z, (1 - t / 4) * z0 + t / 4 * zT, atol=1e-14)


def test_chain_matches_marginal_small():
    res = chain_vs_marginal(n_chains=20_000, seed=5)
    assert res.passed, res.detail


def test_posterior_oracle_small():
    res = posterior_oracle(n=200_000, seed=6)
    assert res.passed, res.detail


def test_reverse_step_with_true_endpoint_matches_forward_joint():
    for z in reverse_step_joint(n=50_000):
        assert abs(z) < 3.5


def test_posterior_step_to_zero_returns_prediction():
    z0, zT = _pair()
    z1 = forward_marginal(z0, zT, 1, SCHED, RngStream(0))
    out = reverse_step(DiffusedState(z1, 1, zT), z0, SCHED, SamplerMode(), RngStream(1))
    assert out.t == 0 and torch.allclose(out.z, z0, atol=1e-15)


def test_remarginalize_matches_forward_marginal():
    z0, zT = _pair()
    state = DiffusedState(forward_marginal(z0, zT, 3, SCHED, RngStream(0)), 3, zT)
    out = reverse_step(state, z0, SCHED, SamplerMode("remarginalize"), RngStream(9))
    assert torch.equal(out.z, forward_marginal(z0, zT, 2, SCHED, RngStream(9)))


def test_paper_literal_step():
    z0, zT = _pair()
    # t = 1 is noiseless: (1 - 1/4) z0 + (1/4) zT
    out = reverse_step(DiffusedState(zT.clone(), 1, zT), z0, SCHED,
                       SamplerMode("paper-literal"), RngStream(0))
    assert torch.allclose(out.z, 0.75 * z0 + 0.25 * zT, atol=1e-15)
    out2 = reverse_step(DiffusedState(zT.clone(), 2, zT), z0, SCHED,
                        SamplerMode("paper_literal"), RngStream(0))
    assert not torch.allclose(out2.z, 0.5 * z0 + 0.5 * zT)


def test_reverse_step_must_go_backwards():
    z0, zT = _pair()
    with pytest.raises(ValueError):
        reverse_step(DiffusedState(zT, 2, zT), z0, SCHED, SamplerMode(), RngStream(0), t_next=2)
    with pytest.raises(ValueError):
        reverse_step(DiffusedState(zT, 0, zT), z0, SCHED, SamplerMode(), RngStream(0))


def test_sampler_mode_validation():
    assert SamplerMode("paper-literal").variant == "paper_literal"
    with pytest.raises(ValueError):
        SamplerMode("ddpm")
    with pytest.raises(ValueError):
        SamplerMode("posterior", steps=0)


@pytest.mark.parametrize("T,n,expected", [
    (4, 4, [4, 3, 2, 1]),
    (4, 1, [4]),
    (4, 2, [4, 1]),
    (50, 5, [50, 38, 26, 13, 1]),
])
def test_ddim_grid(T, n, expected):
    assert ddim_grid(T, n) == expected


@settings(max_examples=50, deadline=None)
@given(T=st.integers(1, 300), data=st.data())
def test_ddim_grid_properties(T, data):
    n = data.draw(st.integers(1, T))
    g = ddim_grid(T, n)
    assert len(g) == n and g[0] == T
    assert all(a > b for a, b in zip(g, g[1:]))
    assert n == 1 or g[-1] == 1


def test_sample_with_exact_endpoint_predictor_is_exact():
    z0, zT = _pair()
    for variant in ("posterior", "remarginalize"):
        for steps in (None, 1, 2):
            out = sample(lambda z, y, t: z0, zT, SCHED, SamplerMode(variant, steps), RngStream(0))
            assert torch.allclose(out, z0, atol=1e-14), (variant, steps)


def test_sample_calls_predictor_on_grid():
    seen = []
    zT = torch.zeros(2, 3)

    def pred(z, y, t):
        seen.append(t)
        return torch.zeros_like(z)

    sample(pred, zT, build_schedule(50, 1.0), SamplerMode("posterior", 5), RngStream(0))
    assert seen == [50, 38, 26, 13, 1]


def test_sample_is_deterministic_given_stream():
    sch = build_schedule(4, 1.0)
    oracle = lambda z, y, t: 0.5 * z  # noqa: E731
    zT = torch.ones(16, dtype=torch.float64)
    a = sample(oracle, zT, sch, SamplerMode(), RngStream(3))
    b = sample(oracle, zT, sch, SamplerMode(), RngStream(3))
    assert torch.equal(a, b)


def test_two_point_oracle_weights_are_posterior():
    oracle = TwoPointOracle(SCHED, u=(-1.0, 1.0), p=0.5)
    # equidistant from both component means -> even odds
    w = oracle.weights(np.array([0.5]), np.array([1.0]), 2)
    assert w[0] == pytest.approx(0.5)
    assert oracle.weights(np.array([0.0]), np.array([0.0]), 4)[0] == 0.5
