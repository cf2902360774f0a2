import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
import torch

from bridgehaze.model import (ABLATION_CONFIGS, CheckpointError, NetConfig, PixelEncoder,
                              PredictorNet, RdcBlock, difference_kernels, get_encoder,
                              load_checkpoint, save_checkpoint)
from bridgehaze.model.checkpoint import freeze, parameters_digest
from bridgehaze.model.rdc import (angular_difference, central_difference, horizontal_difference,
                                  vertical_difference)
from bridgehaze.numeric import ops
from bridgehaze.repro.model_checks import (constant_nulling, network_gradient_error,
                                           rdc_merge_equivalence)


def _apply(kernel_fn, w, x):
    return ops.conv2d(x, kernel_fn(w), padding=1)[..., 1:-1, 1:-1]


def _ramp(axis: int, n: int = 6):
    r = torch.arange(n, dtype=torch.float64)
    img = r[None, :].expand(n, n) if axis == 1 else r[:, None].expand(n, n)
    return img.reshape(1, 1, n, n).contiguous()


def _kernel(values):
    return torch.tensor(values, dtype=torch.float64).reshape(1, 1, 3, 3)


# -- difference kernels ------------------------------------------------------------

def test_transformed_kernels_sum_to_zero():
    w = torch.randn(4, 3, 3, 3, dtype=torch.float64)
    for name, fn in difference_kernels().items():
        if name != "vanilla":
            assert fn(w).sum(dim=(-2, -1)).abs().max() < 1e-12


def test_central_difference_of_delta_kernel_vanishes():
    w = _kernel([0, 0, 0, 0, 1, 0, 0, 0, 0])
    assert torch.equal(central_difference(w), torch.zeros_like(w))


def test_central_difference_on_ramp():
    # sum_p W[p] (x[p] - x[centre]) with x = column index -> sum(W[:, 2]) - sum(W[:, 0])
    w = _kernel([1, 2, 3, 4, 5, 6, 7, 8, 9])
    out = _apply(central_difference, w, _ramp(1))
    assert torch.all(out == (3 + 6 + 9) - (1 + 4 + 7))


def test_horizontal_difference_on_ramps():
    w = _kernel([1, 2, 3, 4, 5, 6, 7, 8, 9])
    # columns 0,1 differ from their right partner by -1; column 2 wraps to column 0: +2
    expected = -(1 + 4 + 7) - (2 + 5 + 8) + 2 * (3 + 6 + 9)
    assert torch.all(_apply(horizontal_difference, w, _ramp(1)) == expected)
    assert torch.all(_apply(horizontal_difference, w, _ramp(0)) == 0)


def test_vertical_difference_on_ramps():
    w = _kernel([1, 2, 3, 4, 5, 6, 7, 8, 9])
    expected = -(1 + 2 + 3) - (4 + 5 + 6) + 2 * (7 + 8 + 9)
    assert torch.all(_apply(vertical_difference, w, _ramp(0)) == expected)
    assert torch.all(_apply(vertical_difference, w, _ramp(1)) == 0)


def test_angular_difference_pairs_clockwise_neighbour():
    # a single tap at the top-left is differenced against top-middle
    w = _kernel([1, 0, 0, 0, 0, 0, 0, 0, 0])
    assert torch.equal(angular_difference(w), _kernel([1, -1, 0, 0, 0, 0, 0, 0, 0]))
    # right-middle goes to bottom-right, bottom-left goes to middle-left
    assert torch.equal(angular_difference(_kernel([0, 0, 0, 0, 0, 1, 0, 0, 0])),
                       _kernel([0, 0, 0, 0, 0, 1, 0, 0, -1]))
    assert torch.equal(angular_difference(_kernel([0, 0, 0, 0, 0, 0, 1, 0, 0])),
                       _kernel([0, 0, 0, -1, 0, 0, 1, 0, 0]))
    # the centre tap has no ring partner
    assert torch.equal(angular_difference(_kernel([0, 0, 0, 0, 1, 0, 0, 0, 0])),
                       torch.zeros(1, 1, 3, 3, dtype=torch.float64))


def test_kernel_shape_is_validated():
    with pytest.raises(ValueError):
        central_difference(torch.zeros(2, 2, 5, 5))


def test_constant_inputs_are_nulled_exactly():
    assert constant_nulling(n_trials=10) == 0.0


def test_merge_equivalence_small():
    res = rdc_merge_equivalence(n_blocks=10, n_inputs=10)
    assert res.passed, res.detail


# -- RDC block ---------------------------------------------------------------------

def _twin_blocks(branches=("vanilla", "cd", "ad", "hd", "vd")):
    a = RdcBlock(3, branches, mode="branch")
    b = RdcBlock(3, branches, mode="reparam")
    b.load_state_dict(a.state_dict())
    return a, b


def test_branch_and_reparam_gradients_agree():
    a, b = _twin_blocks()
    a.double()
    b.double()
    x = torch.randn(2, 3, 5, 5, dtype=torch.float64)
    xa, xb = x.clone().requires_grad_(True), x.clone().requires_grad_(True)
    (a(xa) ** 2).sum().backward()
    (b(xb) ** 2).sum().backward()
    assert torch.allclose(xa.grad, xb.grad, atol=1e-12)
    for name in a.branches:
        assert torch.allclose(a.weight[name].grad, b.weight[name].grad, atol=1e-12)
        assert torch.allclose(a.bias[name].grad, b.bias[name].grad, atol=1e-12)


def test_fuse_caches_merged_kernel_in_eval_only():
    blk = RdcBlock(3)
    x = torch.randn(1, 3, 6, 6)
    ref = blk(x)
    blk.eval()
    blk.fuse()
    assert torch.allclose(blk(x), ref, atol=1e-6)
    blk.train()
    assert blk._merged is None


@pytest.mark.parametrize("branches", ABLATION_CONFIGS)
def test_ablation_configs_preserve_shape(branches):
    blk = RdcBlock(4, branches)
    assert blk.branches == branches
    assert blk(torch.zeros(1, 4, 4, 4)).shape == (1, 4, 4, 4)


def test_block_argument_validation():
    with pytest.raises(ValueError):
        RdcBlock(3, ("vanilla", "xd"))
    with pytest.raises(ValueError):
        RdcBlock(3, ())
    with pytest.raises(ValueError):
        RdcBlock(3, mode="fast")
    with pytest.raises(ValueError):
        RdcBlock(3)(torch.zeros(1, 4, 4, 4))


# -- predictor network ---------------------------------------------------------------

TINY = NetConfig(latent_channels=3, base_channels=8, levels=2, blocks_per_level=1, T=10)


def test_single_net_shape_round_trip():
    net = PredictorNet(TINY)
    z = torch.randn(2, 3, 8, 8)
    assert net(z, z, [3, 7]).shape == z.shape
    assert net(z, z, 5).shape == z.shape


def test_dual_net_returns_two_endpoints():
    net = PredictorNet(NetConfig(**{**TINY.to_dict(), "dual": True}))
    z = torch.randn(2, 3, 8, 8)
    x_hat, y_hat = net.predict_pair(z, z, [0, 10], [10, 0])
    assert x_hat.shape == y_hat.shape == z.shape
    with pytest.raises(RuntimeError):
        net(z, z, 1)
    with pytest.raises(RuntimeError):
        PredictorNet(TINY).predict_pair(z, z, 1, 1)


def test_network_input_validation():
    net = PredictorNet(TINY)
    z = torch.randn(2, 3, 8, 8)
    with pytest.raises(ValueError):
        net(torch.randn(2, 3, 7, 8), torch.randn(2, 3, 7, 8), 1)
    with pytest.raises(ValueError):
        net(torch.randn(2, 4, 8, 8), torch.randn(2, 4, 8, 8), 1)
    with pytest.raises(ValueError):
        net(z, z, 11)
    with pytest.raises(ValueError):
        net(z, z, [1, 2, 3])
    with pytest.raises(ValueError):
        net(z, z[:1], 1)


def test_net_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        NetConfig(base_channels=6)
    with pytest.raises(ValueError):
        NetConfig(levels=0)
    assert NetConfig.from_dict(TINY.to_dict()) == TINY


def test_fused_network_matches_training_form():
    net = PredictorNet(TINY)
    z = torch.randn(2, 3, 8, 8)
    ref = net(z, z, 4)
    net.fuse()
    assert torch.allclose(net(z, z, 4), ref, atol=1e-5)


def test_tiny_check_network_depends_on_time():
    from bridgehaze.repro.model_checks import TINY_NET
    torch.manual_seed(0)
    net = PredictorNet(NetConfig(**TINY_NET)).double()
    z = torch.randn(1, 2, 4, 4, dtype=torch.float64)
    with torch.no_grad():
        assert (net(z, z, 1) - net(z, z, 9)).abs().max() > 1e-6


def test_network_gradients_small():
    assert network_gradient_error(trials=2) < 1e-3
    assert network_gradient_error(trials=1, dual=True) < 1e-3


# -- encoders and checkpoints -------------------------------------------------------------

def test_pixel_encoder_round_trip():
    enc = PixelEncoder()
    img = torch.rand(2, 3, 4, 4)
    assert torch.allclose(enc.decode(enc.encode(img)), img, atol=1e-7)
    assert enc.encode(torch.zeros(1)).item() == -1.0
    assert get_encoder("identity").encode(img) is img
    with pytest.raises(ValueError):
        get_encoder("vqgan")


def test_checkpoint_round_trip(tmp_path):
    net = PredictorNet(TINY)
    save_checkpoint(tmp_path / "ck", net, stage=1, s=1.0, extra={"note": "x"})
    back, manifest = load_checkpoint(tmp_path / "ck", T=10, stage=1)
    assert manifest["note"] == "x" and manifest["s"] == 1.0
    assert parameters_digest(back) == parameters_digest(net)


def test_checkpoint_incompatibilities(tmp_path):
    net = PredictorNet(TINY)
    save_checkpoint(tmp_path / "ck", net, stage=1, s=1.0)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck", T=50)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck", stage=2)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")


def test_freeze_stops_gradients():
    net = freeze(PredictorNet(TINY))
    assert not net.training
    assert not any(p.requires_grad for p in net.parameters())


# -- properties --------------------------------------------------------------------

DIFFERENCE_BRANCHES = ("cd", "ad", "hd", "vd")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), name=st.sampled_from(DIFFERENCE_BRANCHES),
       alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
def test_difference_kernels_are_linear_and_zero_sum(seed, name, alpha, beta):
    g = torch.Generator().manual_seed(seed)
    u = torch.randn(2, 2, 3, 3, generator=g, dtype=torch.float64)
    v = torch.randn(2, 2, 3, 3, generator=g, dtype=torch.float64)
    fn = difference_kernels()[name]
    assert torch.allclose(fn(alpha * u + beta * v), alpha * fn(u) + beta * fn(v), atol=1e-12)
    assert fn(u).sum(dim=(-2, -1)).abs().max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(-4, 4))
def test_difference_branches_null_constants_property(seed, c):
    torch.manual_seed(seed)
    x = torch.full((1, 3, 6, 6), c, dtype=torch.float64)
    w = torch.randn(3, 3, 3, 3, dtype=torch.float64)
    for name in DIFFERENCE_BRANCHES:
        out = ops.conv2d(x, difference_kernels()[name](w), padding=1)[..., 1:-1, 1:-1]
        assert out.abs().max() <= 1e-12 * max(1.0, abs(c))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1),
       branches=st.sampled_from(ABLATION_CONFIGS))
def test_merged_kernel_matches_branch_sum_property(seed, branches):
    torch.manual_seed(seed)
    block = RdcBlock(3, branches, mode="branch")
    x = torch.randn(2, 3, 8, 8)
    k, b = block.merge()
    with torch.no_grad():
        assert (block(x) - (x + ops.conv2d(x, k, b, padding=1))).abs().max() < 1e-5
