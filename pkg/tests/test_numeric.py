import io

import numpy as np
import pytest
import torch

from bridgehaze.numeric import (Adam, AdamState, NonFiniteGradientError, RngStream, adam_step,
                                gaussian, load_archive, load_tensor, save_archive, save_tensor)
from bridgehaze.numeric import ops
from bridgehaze.numeric.tensorio import ContainerFormatError, read_tensor, write_tensor

from bridgehaze.repro.model_checks import OP_NAMES, op_gradient_error


# -- rng ---------------------------------------------------------------------------

def test_gaussian_moments():
    z = gaussian((10**6,), RngStream(7), dtype=torch.float64)
    assert abs(z.mean().item()) < 0.01
    assert abs(z.var().item() - 1.0) < 0.01


def test_gaussian_is_deterministic():
    a = gaussian((3, 4), RngStream(11, 2))
    b = gaussian((3, 4), RngStream(11, 2))
    assert torch.equal(a, b)


def test_streams_are_uncorrelated():
    a = gaussian((10**6,), RngStream(5, 0), dtype=torch.float64)
    b = gaussian((10**6,), RngStream(5, 1), dtype=torch.float64)
    corr = np.corrcoef(a.numpy(), b.numpy())[0, 1]
    assert abs(corr) < 0.01


@pytest.mark.parametrize("shape", [(0,), (3, 0), ()])
def test_gaussian_rejects_empty_shapes(shape):
    with pytest.raises(ValueError):
        gaussian(shape, RngStream(0))


def test_integers_are_inclusive():
    vals = RngStream(0).integers(1, 4, size=10_000)
    assert set(np.unique(vals)) == {1, 2, 3, 4}


# -- ops forward -------------------------------------------------------------------

def test_conv2d_all_ones_centre():
    x = torch.ones(1, 1, 3, 3)
    w = torch.ones(1, 1, 3, 3)
    out = ops.conv2d(x, w, padding=1)
    assert out[0, 0, 1, 1].item() == 9.0


def test_grad_of_sum_of_squares():
    x = torch.tensor([1.0, 2.0], requires_grad=True)
    ops.mul(x, x).sum().backward()
    assert x.grad.tolist() == [2.0, 4.0]


def test_shape_errors():
    with pytest.raises(ValueError):
        ops.add(torch.zeros(2), torch.zeros(3))
    with pytest.raises(ValueError):
        ops.matmul(torch.zeros(2, 3), torch.zeros(2, 3))
    with pytest.raises(ValueError):
        ops.conv2d(torch.zeros(1, 2, 4, 4), torch.zeros(1, 3, 3, 3))
    with pytest.raises(ValueError):
        ops.group_norm(torch.zeros(1, 6, 4, 4), 4)
    with pytest.raises(ValueError):
        ops.concat([torch.zeros(1, 2, 4, 4), torch.zeros(1, 2, 2, 2)])
    with pytest.raises(ValueError):
        ops.downsample(torch.zeros(1, 1, 3, 3))


def test_resampling_round_trip():
    x = torch.arange(16.0).reshape(1, 1, 4, 4)
    assert torch.equal(ops.downsample(ops.upsample(x)), x)
    assert ops.upsample(x).shape == (1, 1, 8, 8)


def test_ops_are_pure():
    x = torch.randn(2, 4, 4, 4)
    w = torch.randn(4, 4, 3, 3)
    assert torch.equal(ops.conv2d(x, w), ops.conv2d(x, w))
    assert torch.equal(ops.group_norm(x, 2), ops.group_norm(x, 2))


# -- ops gradients vs finite differences -----------------------------------------------

@pytest.mark.parametrize("op_name", OP_NAMES)
def test_op_gradient_matches_finite_differences(op_name):
    err = op_gradient_error(op_name, trials=20)
    assert err < 1e-3, f"{op_name}: relative error {err:.2e}"


# -- adam --------------------------------------------------------------------------------

def test_adam_first_step_moves_by_lr():
    p = torch.zeros(1)
    state = adam_step([p], [torch.ones(1)], AdamState(), lr=0.1)
    assert state.step == 1
    assert p.item() == pytest.approx(-0.1, abs=1e-6)


def test_adam_zero_gradient_is_identity():
    p = torch.tensor([1.5, -2.0])
    adam_step([p], [torch.zeros(2)], AdamState(), lr=0.1)
    assert p.tolist() == [1.5, -2.0]


def test_adam_converges_on_quadratic():
    w = torch.zeros(1, requires_grad=True)
    opt = Adam([w], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        ((w - 3.0) ** 2).sum().backward()
        opt.step()
    assert abs(w.item() - 3.0) < 0.05


def test_adam_matches_torch_reference():
    torch.manual_seed(3)
    a = torch.randn(5, requires_grad=True)
    b = a.detach().clone().requires_grad_(True)
    mine = Adam([a], lr=0.01)
    ref = torch.optim.Adam([b], lr=0.01)
    for _ in range(25):
        for p, o in ((a, mine), (b, ref)):
            o.zero_grad()
            (p.sin() * p).sum().backward()
            o.step()
    assert torch.allclose(a, b, atol=1e-6)


def test_adam_rejects_non_finite_gradient():
    p = torch.ones(2)
    with pytest.raises(NonFiniteGradientError):
        adam_step([p], [torch.tensor([1.0, float("nan")])], AdamState(), lr=0.1)
    assert p.tolist() == [1.0, 1.0]


# -- tensor container --------------------------------------------------------------------

@pytest.mark.parametrize("dtype", [torch.float32, torch.float64, torch.int64, torch.uint8])
def test_tensor_round_trip(tmp_path, dtype):
    t = (torch.arange(24) % 7).to(dtype).reshape(2, 3, 4)
    save_tensor(tmp_path / "t.bbt", t)
    back = load_tensor(tmp_path / "t.bbt")
    assert back.dtype == dtype and torch.equal(back, t)


def test_container_layout_is_documented_little_endian():
    buf = io.BytesIO()
    write_tensor(buf, torch.tensor([[1.0, 2.0]], dtype=torch.float32))
    raw = buf.getvalue()
    assert raw[:8] == b"BBTENSR1"
    assert raw[8] == 1 and raw[9] == 2
    assert int.from_bytes(raw[10:18], "little") == 1
    assert int.from_bytes(raw[18:26], "little") == 2
    assert np.frombuffer(raw[26:], dtype="<f4").tolist() == [1.0, 2.0]


def test_container_rejects_garbage():
    with pytest.raises(ContainerFormatError):
        read_tensor(io.BytesIO(b"NOTATENSOR"))
    buf = io.BytesIO()
    write_tensor(buf, torch.zeros(4))
    with pytest.raises(ContainerFormatError):
        read_tensor(io.BytesIO(buf.getvalue()[:-3]))


def test_archive_round_trip(tmp_path):
    tensors = {"a.weight": torch.randn(3, 3), "b": torch.arange(5)}
    save_archive(tmp_path / "w.bbt", tensors)
    back = load_archive(tmp_path / "w.bbt")
    assert list(back) == list(tensors)
    for k in tensors:
        assert torch.equal(back[k], tensors[k])
