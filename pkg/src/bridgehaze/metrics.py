"""Full-reference image metrics and the energy distance between point sets."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak * peak / mse))


def to_luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ LUMA
    if img.ndim == 2:
        return img
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation keeping only fully covered positions
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean single-scale SSIM over every fully covered 11x11 Gaussian window.

    Colour images are compared on luma.
    """
    a, b = _pair(a, b)
    a, b = to_luma(a), to_luma(b)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _mean_pairwise(X: np.ndarray, Y: np.ndarray, chunk: int = 2048) -> float:
    total = 0.0
    for i in range(0, len(X), chunk):
        d = X[i:i + chunk, None, :] - Y[None, :, :]
        total += np.sqrt((d * d).sum(-1)).sum()
    return total / (len(X) * len(Y))


def energy_distance(X, Y) -> float:
    """``2 E|x - y| - E|x - x'| - E|y - y'|`` averaged over all pairs (V-statistic)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.size == 0 or Y.size == 0:
        raise ValueError("energy distance of an empty set")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("point sets differ in dimension")
    ed = 2 * _mean_pairwise(X, Y) - _mean_pairwise(X, X) - _mean_pairwise(Y, Y)
    return max(ed, 0.0)


@dataclass
class MetricReport:
    names: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    energy: float | None = None

    def add(self, name: str, pred, ref) -> None:
        self.names.append(name)
        self.psnr.append(psnr(pred, ref))
        self.ssim.append(ssim(pred, ref))

    def summary(self) -> dict:
        p = np.array(self.psnr)
        s = np.array(self.ssim)
        out = {"n": len(p),
               "psnr_mean": float(p.mean()) if len(p) else math.nan,
               "psnr_std": float(p.std()) if len(p) else math.nan,
               "ssim_mean": float(s.mean()) if len(s) else math.nan,
               "ssim_std": float(s.std()) if len(s) else math.nan}
        if self.energy is not None:
            out["energy_distance"] = self.energy
        return out

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["item", "psnr", "ssim"])
            for row in zip(self.names, self.psnr, self.ssim):
                w.writerow(row)
            summ = self.summary()
            w.writerow(["mean", summ["psnr_mean"], summ["ssim_mean"]])
            w.writerow(["std", summ["psnr_std"], summ["ssim_std"]])


def evaluate(preds, refs, names=None) -> MetricReport:
    rep = MetricReport()
    names = names or [str(i) for i in range(len(preds))]
    for n, p, r in zip(names, preds, refs):
        rep.add(n, p, r)
    return rep
