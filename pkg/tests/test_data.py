import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgehaze.data import (DatasetManifest, HazeField, crop_patches, estimate_beta, gen_corpus,
                             haze_apply, load_corpus, n_crop_positions, split, toy2d_domains,
                             write_corpus)
from bridgehaze.metrics import energy_distance, psnr
from bridgehaze.numeric import RngStream, load_tensor, save_tensor


def test_hand_arithmetic():
    # beta d = ln 2 -> t = 1/2: 0.5 * 0.5 + 1 * 0.5
    f = HazeField(beta=math.log(2), A=1.0, depth=np.ones((2, 2)))
    out = haze_apply(np.full((2, 2), 0.5), f)
    assert np.allclose(out, 0.75, rtol=0, atol=1e-15)


def test_vanishing_beta_leaves_image_unchanged():
    J = np.random.default_rng(0).uniform(size=(4, 4, 3))
    f = HazeField(beta=1e-12, A=0.9, depth=np.full((4, 4), 3.0))
    assert np.allclose(haze_apply(J, f), J, atol=1e-11)


def test_beta_inversion_round_trip():
    J = np.random.default_rng(1).uniform(0.0, 0.5, size=(8, 8, 3))
    for beta in (0.3, 1.0, 1.7):
        I = haze_apply(J, HazeField(beta=beta, A=0.9, depth=np.full((8, 8), 1.5)))
        assert estimate_beta(I, J, A=0.9, depth=1.5) == pytest.approx(beta, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(b1=st.floats(0.01, 3.0), b2=st.floats(0.01, 3.0), A=st.floats(0.6, 1.0))
def test_haze_is_monotone_in_beta(b1, b2, A):
    lo, hi = sorted((b1, b2))
    J = np.linspace(0.0, 0.5, 16).reshape(4, 4)
    depth = np.linspace(0.1, 3.0, 16).reshape(4, 4)
    I_lo = haze_apply(J, HazeField(lo, A, depth))
    I_hi = haze_apply(J, HazeField(hi, A, depth))
    assert np.all(I_hi >= I_lo)
    assert np.all((I_lo >= 0) & (I_hi <= 1))


def test_field_validation():
    with pytest.raises(ValueError):
        HazeField(beta=0.0, A=0.5, depth=np.ones((2, 2)))
    with pytest.raises(ValueError):
        HazeField(beta=1.0, A=1.5, depth=np.ones((2, 2)))
    with pytest.raises(ValueError):
        HazeField(beta=1.0, A=0.5, depth=-np.ones((2, 2)))
    with pytest.raises(ValueError):
        haze_apply(np.zeros((3, 3)), HazeField(1.0, 0.5, np.ones((2, 2))))


def test_transmission_in_unit_interval():
    f = HazeField(beta=1.8, A=0.8, depth=np.linspace(0, 3, 9).reshape(3, 3))
    t = f.transmission()
    assert np.all((t > 0) & (t <= 1)) and t[0, 0] == 1.0


@pytest.fixture(scope="module")
def corpus():
    return gen_corpus(8, 32, RngStream(0))


def test_corpus_smoke(corpus):
    assert corpus.clean.shape == corpus.hazy.shape == (8, 32, 32, 3)
    assert corpus.clean.min() >= 0 and corpus.hazy.max() <= 1
    corpus.manifest.validate()
    assert len(corpus.manifest.items) == 8


def test_corpus_haze_is_substantial_not_destructive():
    c = gen_corpus(32, 32, RngStream(3))
    mean = np.mean([psnr(h, j) for h, j in zip(c.hazy, c.clean)])
    assert 8 <= mean <= 25


def test_corpus_is_pure_function_of_seed(corpus):
    again = gen_corpus(8, 32, RngStream(0))
    assert np.array_equal(again.clean, corpus.clean) and np.array_equal(again.hazy, corpus.hazy)
    # item i does not depend on n
    longer = gen_corpus(10, 32, RngStream(0))
    assert np.array_equal(longer.hazy[:8], corpus.hazy)


def test_corpus_warns_on_indivisible_size():
    with pytest.warns(UserWarning):
        gen_corpus(4, 31, RngStream(0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        gen_corpus(4, 32, RngStream(0))


@pytest.mark.parametrize("ratio,n_test", [((1, 1), 0), ((1, 1), 2), ((3, 1), 0), ((1, 3), 1)])
def test_split_is_disjoint(corpus, ratio, n_test):
    m = split(DatasetManifest.from_json(corpus.manifest.to_json()), RngStream(1), ratio, n_test)
    sets = [set(m.paired), set(m.unpaired), set(m.test)]
    assert sum(map(len, sets)) == 8 and len(set().union(*sets)) == 8
    if ratio == (1, 1) and n_test == 0:
        assert len(m.paired) == len(m.unpaired) == 4


def test_manifest_rejects_overlap(corpus):
    m = DatasetManifest.from_json(corpus.manifest.to_json())
    m.paired, m.unpaired = [0, 1], [1, 2]
    with pytest.raises(ValueError):
        m.validate()


def test_corpus_disk_round_trip(tmp_path, corpus):
    write_corpus(corpus, tmp_path)
    back = load_corpus(tmp_path)
    assert np.array_equal(back.clean, corpus.clean)
    assert np.array_equal(back.hazy, corpus.hazy)
    assert back.manifest.items == corpus.manifest.items


def test_crop_positions_count():
    assert n_crop_positions(480, 640, 256) == 86_625


def test_full_size_crop_is_identity():
    img = np.arange(3 * 8 * 8).reshape(3, 8, 8)
    assert np.array_equal(crop_patches(img, 8, RngStream(0)), img)
    with pytest.raises(ValueError):
        crop_patches(img, 9, RngStream(0))


def test_crop_is_uniform():
    rng = RngStream(2)
    img = np.arange(64).reshape(8, 8)
    n = 10**5
    counts = np.zeros(25)
    for _ in range(n):
        corner = crop_patches(img, 4, rng)[0, 0]
        counts[(corner // 8) * 5 + corner % 8] += 1
    p = 1 / 25
    se = math.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) < 3.5 * se)


def test_paired_crops_align():
    stack = np.stack([np.arange(100).reshape(10, 10)] * 2)
    a, b = crop_patches(stack, 4, RngStream(5))
    assert np.array_equal(a, b)


def test_toy_domain():
    toy = toy2d_domains(1000, RngStream(4))
    assert np.allclose(toy.inverse(toy.Y), toy.X, atol=1e-6)
    assert energy_distance(toy.X, toy.Y) > 0.1
    again = toy2d_domains(1000, RngStream(4))
    assert np.array_equal(again.X, toy.X)


def test_point_sets_round_trip_through_tensor_container(tmp_path):
    import torch

    toy = toy2d_domains(200, RngStream(0))
    save_tensor(tmp_path / "x.bbt", torch.from_numpy(toy.X))
    assert np.array_equal(load_tensor(tmp_path / "x.bbt").numpy(), toy.X)
