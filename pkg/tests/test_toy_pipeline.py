"""Properties of the trained toy models beyond the numbered criteria."""
import numpy as np
import pytest

from bridgehaze.repro.toy import pseudo_label_quality, score_test_set

pytestmark = pytest.mark.acceptance


def test_pseudo_labels_beat_identity(toy_models):
    model = toy_models.get(1.0)
    pseudo, identity = pseudo_label_quality(model)
    print(f"pseudo-hazy PSNR vs true hazy {pseudo:.2f} dB; clean vs hazy {identity:.2f} dB")
    assert pseudo > identity


def test_all_sampler_variants_run(toy_models):
    model = toy_models.get(1.0)
    for variant in ("posterior", "remarginalize", "paper_literal"):
        sc = score_test_set(model, 10, variant)
        print(f"{variant}: {sc['psnr_dehazed'].mean():.2f} dB")
        assert np.isfinite(sc["psnr_dehazed"]).all()
