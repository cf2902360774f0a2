"""Metric implementations against independent references."""
from __future__ import annotations

import itertools
import math

import numpy as np

from ..metrics import energy_distance, psnr, ssim, to_luma
from ..numeric.rng import RngStream
from .result import CriterionResult, timed


def reference_psnr(a: np.ndarray, b: np.ndarray) -> float:
    from skimage.metrics import peak_signal_noise_ratio

    return float(peak_signal_noise_ratio(a, b, data_range=1.0))


def reference_ssim(a: np.ndarray, b: np.ndarray) -> float:
    from skimage.metrics import structural_similarity

    return float(structural_similarity(to_luma(a), to_luma(b), gaussian_weights=True, sigma=1.5,
                                       use_sample_covariance=False, data_range=1.0))


def brute_force_energy(X: np.ndarray, Y: np.ndarray) -> float:
    def mean_dist(P, Q):
        total = 0.0
        for p, q in itertools.product(P, Q):
            total += math.sqrt(sum((pi - qi) ** 2 for pi, qi in zip(p, q)))
        return total / (len(P) * len(Q))

    X, Y = X.tolist(), Y.tolist()
    return 2 * mean_dist(X, Y) - mean_dist(X, X) - mean_dist(Y, Y)


@timed
def metric_oracles(n_pairs: int = 20, size: int = 32, n_points: int = 200, seed: int = 12):
    rng = RngStream(seed, 0)
    d_psnr = d_ssim = 0.0
    for _ in range(n_pairs):
        a = rng.uniform(size=(size, size, 3))
        b = np.clip(a + 0.1 * rng.normal((size, size, 3)), 0, 1)
        d_psnr = max(d_psnr, abs(psnr(a, b) - reference_psnr(a, b)))
        d_ssim = max(d_ssim, abs(ssim(a, b) - reference_ssim(a, b)))
    X = rng.normal((n_points, 2))
    Y = rng.normal((n_points, 2)) + np.array([0.5, -0.25])
    d_ed = abs(energy_distance(X, Y) - brute_force_energy(X, Y))
    ok = d_psnr < 1e-9 and d_ssim < 1e-6 and d_ed < 1e-9
    return CriterionResult(
        "metric oracles", ok,
        f"PSNR max diff {d_psnr:.1e} dB (tol 1e-9); SSIM max diff {d_ssim:.1e} (tol 1e-6); "
        f"energy distance diff {d_ed:.1e} at n={n_points} (tol 1e-9)",
    )
