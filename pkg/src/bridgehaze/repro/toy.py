"""Desk-scale end-to-end dehazing runs on the synthetic corpus."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..bridge import SamplerMode
from ..data import Corpus, DatasetManifest, gen_corpus, split
from ..metrics import psnr, ssim
from ..model.checkpoint import freeze, load_checkpoint, save_checkpoint
from ..model.unet import PredictorNet
from ..numeric.rng import RngStream
from ..training import (STREAM_DATA, STREAM_SAMPLE, STREAM_SPLIT, TrainConfig, dehaze_latents,
                        make_pseudo_pair, train_stage1, train_stage2)
from .result import CriterionResult, timed
from .training_checks import to_images, to_latents

log = logging.getLogger(__name__)

TOY_ITEMS = 80  # 32 paired + 32 unpaired + 16 held out
TOY_SIZE = 32


def toy_config(**kw) -> TrainConfig:
    base = dict(T=50, s=1.0, lr=5e-5, batch_size=8, stage1_iters=5000, stage2_iters=5000,
                seed=0, n_test=16, steps=10, log_every=500)
    base.update(kw)
    return TrainConfig(**base)


@dataclass
class ToyModel:
    config: TrainConfig
    corpus: Corpus
    manifest: DatasetManifest
    stage1: PredictorNet
    stage2: PredictorNet
    seconds: dict = field(default_factory=dict)

    def arrays(self, which: str):
        ids = getattr(self.manifest, which)
        return self.corpus.clean[ids], self.corpus.hazy[ids]


def toy_corpus(config: TrainConfig, n_items: int = TOY_ITEMS, size: int = TOY_SIZE):
    corpus = gen_corpus(n_items, size, RngStream(config.seed, STREAM_DATA))
    manifest = split(corpus.manifest, RngStream(config.seed, STREAM_SPLIT),
                     config.split_ratio, config.n_test)
    return corpus, manifest


def _cache_key(config: TrainConfig, n_items: int, size: int) -> str:
    blob = json.dumps({"config": config.to_dict(), "n": n_items, "size": size}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def train_toy_model(config: TrainConfig | None = None, n_items: int = TOY_ITEMS,
                    size: int = TOY_SIZE, cache_dir=None) -> ToyModel:
    """Synthesize, split, train both stages. Optionally reuse checkpoints in ``cache_dir``."""
    config = config or toy_config()
    corpus, manifest = toy_corpus(config, n_items, size)
    cached = Path(cache_dir) / _cache_key(config, n_items, size) if cache_dir else None
    if cached is not None and (cached / "stage2" / "manifest.json").is_file():
        net1, _ = load_checkpoint(cached / "stage1", stage=1, T=config.T)
        net2, m2 = load_checkpoint(cached / "stage2", stage=2, T=config.T)
        return ToyModel(config, corpus, manifest, freeze(net1), net2.eval(), m2.get("seconds", {}))

    x_p = to_latents(corpus.clean[manifest.paired])
    y_p = to_latents(corpus.hazy[manifest.paired])
    x_u = to_latents(corpus.clean[manifest.unpaired])
    t0 = time.perf_counter()
    s1 = train_stage1(config, x_p, y_p)
    t1 = time.perf_counter()
    s2 = train_stage2(config, x_u, s1.net)
    t2 = time.perf_counter()
    seconds = {"stage1": t1 - t0, "stage2": t2 - t1}
    log.info("toy model trained: %s", seconds)
    model = ToyModel(config, corpus, manifest, s2.frozen, s2.net.eval(), seconds)
    if cached is not None:
        save_checkpoint(cached / "stage1", s1.net, stage=1, s=config.s)
        save_checkpoint(cached / "stage2", s2.net, stage=2, s=config.s,
                        extra={"seconds": seconds})
    return model


def dehaze_test_set(model: ToyModel, steps: int, variant: str = "posterior",
                    stream: int = STREAM_SAMPLE) -> np.ndarray:
    _, hazy = model.arrays("test")
    mode = SamplerMode(variant, steps)
    rng = RngStream(model.config.seed, stream)
    out = dehaze_latents(model.stage2, to_latents(hazy), model.config.schedule(), mode, rng)
    return to_images(out)


def score_test_set(model: ToyModel, steps: int, variant: str = "posterior") -> dict:
    clean, hazy = model.arrays("test")
    dehazed = dehaze_test_set(model, steps, variant)
    return {
        "psnr_hazy": np.array([psnr(h, c) for h, c in zip(hazy, clean)]),
        "psnr_dehazed": np.array([psnr(d, c) for d, c in zip(dehazed, clean)]),
        "ssim_hazy": np.array([ssim(h, c) for h, c in zip(hazy, clean)]),
        "ssim_dehazed": np.array([ssim(d, c) for d, c in zip(dehazed, clean)]),
    }


def pseudo_label_quality(model: ToyModel) -> tuple[float, float]:
    """Mean PSNR of one-shot pseudo-hazy labels vs the true hazy test images, and of x vs y."""
    clean, hazy = model.arrays("test")
    with torch.no_grad():
        _, y_hat = make_pseudo_pair(to_latents(clean), model.stage1)
    y_img = to_images(y_hat)
    return (float(np.mean([psnr(a, b) for a, b in zip(y_img, hazy)])),
            float(np.mean([psnr(a, b) for a, b in zip(clean, hazy)])))


# -- criteria -------------------------------------------------------------------------

@timed
def end_to_end(model: ToyModel, margin_db: float = 2.0, ssim_fraction: float = 0.75):
    sc = score_test_set(model, model.config.steps)
    gain = sc["psnr_dehazed"].mean() - sc["psnr_hazy"].mean()
    frac = float(np.mean(sc["ssim_dehazed"] > sc["ssim_hazy"]))
    ok = gain >= margin_db and frac >= ssim_fraction
    train_s = sum(model.seconds.values())
    res = CriterionResult(
        "end-to-end toy dehazing", ok,
        f"hazy PSNR {sc['psnr_hazy'].mean():.2f} dB -> dehazed {sc['psnr_dehazed'].mean():.2f} dB "
        f"(gain {gain:+.2f}, need >= {margin_db}); SSIM improved on {frac:.0%} of "
        f"{len(sc['ssim_hazy'])} items (need >= {ssim_fraction:.0%}); "
        f"mean SSIM {sc['ssim_hazy'].mean():.3f} -> {sc['ssim_dehazed'].mean():.3f}; "
        f"training {train_s / 60:.1f} min",
    )
    res.artifacts["scores"] = sc
    return res


@timed
def steps_ablation(model: ToyModel, steps=(2, 5, 10, 50), band_db: float = 0.3):
    vals = [float(score_test_set(model, n)["psnr_dehazed"].mean()) for n in steps]
    drops = [b - a for a, b in zip(vals, vals[1:])]
    ok = all(d >= -band_db for d in drops) and vals[-1] > vals[0]
    table = ", ".join(f"{n}: {v:.2f}" for n, v in zip(steps, vals))
    return CriterionResult(
        "sampling-steps ablation", ok,
        f"PSNR by steps {{{table}}} dB; worst consecutive change {min(drops):+.2f} dB "
        f"(band -{band_db}); last minus first {vals[-1] - vals[0]:+.2f} dB",
        artifacts={"psnr": dict(zip(steps, vals))},
    )


@timed
def variance_ablation(model_low: ToyModel, model_high: ToyModel):
    lo = float(score_test_set(model_low, model_low.config.steps)["psnr_dehazed"].mean())
    hi = float(score_test_set(model_high, model_high.config.steps)["psnr_dehazed"].mean())
    return CriterionResult(
        "variance-factor ablation", lo >= hi,
        f"PSNR at s={model_low.config.s:g}: {lo:.2f} dB, at s={model_high.config.s:g}: "
        f"{hi:.2f} dB (matched data, seed and iterations)",
        artifacts={"psnr": {model_low.config.s: lo, model_high.config.s: hi}},
    )


def high_variance_config(config: TrainConfig, s: float = 4.0) -> TrainConfig:
    return replace(config, s=s)
