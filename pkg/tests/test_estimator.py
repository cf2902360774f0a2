import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bridgehaze import BridgeDehazer, check_images
from bridgehaze.data import gen_corpus
from bridgehaze.numeric import RngStream

TINY = dict(T=10, stage1_iters=3, stage2_iters=3, base_channels=8, blocks_per_level=1,
            batch_size=2)


@pytest.fixture(scope="module")
def corpus():
    return gen_corpus(6, 16, RngStream(0))


def test_params_round_trip():
    est = BridgeDehazer(**TINY)
    params = est.get_params()
    assert params["T"] == 10 and params["sampler"] == "posterior"
    assert clone(est).get_params() == params
    est.set_params(steps=4)
    assert est.steps == 4


def test_unfitted_transform_raises(corpus):
    with pytest.raises(NotFittedError):
        BridgeDehazer(**TINY).transform(corpus.hazy)


def test_fit_transform_score(corpus):
    est = BridgeDehazer(**TINY).fit(corpus.hazy, corpus.clean, X_unpaired=corpus.clean[:3])
    out = est.transform(corpus.hazy[:2])
    assert out.shape == (2, 16, 16, 3) and out.min() >= 0 and out.max() <= 1
    assert np.array_equal(out, est.predict(corpus.hazy[:2]))
    assert np.isfinite(est.score(corpus.hazy[:2], corpus.clean[:2]))
    assert len(est.stage1_losses_) == 3 and len(est.stage2_losses_) == 3


def test_supervised_only_fit_has_no_dehazer(corpus):
    est = BridgeDehazer(**{**TINY, "stage2_iters": 0}).fit(corpus.hazy, corpus.clean)
    with pytest.raises(ValueError):
        est.transform(corpus.hazy)


def test_check_images():
    ok = np.zeros((2, 8, 8, 3))
    assert check_images(ok).dtype == np.float64
    for bad in (np.zeros((8, 8, 3)), np.zeros((2, 8, 8, 4)), ok + 2.0):
        with pytest.raises(ValueError):
            check_images(bad)
    with pytest.raises(ValueError):
        check_images(np.full((2, 8, 8, 3), np.nan))
    with pytest.raises(ValueError):
        check_images(np.zeros((2, 7, 8, 3)), multiple_of=2)


def test_fit_rejects_mismatched_pairs(corpus):
    with pytest.raises(ValueError):
        BridgeDehazer(**TINY).fit(corpus.hazy, corpus.clean[:3])
