"""Overfit and oracle-equivalence checks of the training steps."""
from __future__ import annotations

import numpy as np
import torch

from ..data import gen_corpus
from ..model.checkpoint import parameters_digest
from ..model.encoder import PixelEncoder
from ..numeric.optim import Adam
from ..numeric.rng import RngStream
from ..training import (StageState, TrainConfig, init_net, init_stage1, init_stage2,
                        single_bridge_step, stage2_step, train_stage1)
from .result import CriterionResult, timed


def to_latents(images: np.ndarray) -> torch.Tensor:
    """(N, H, W, 3) pixels in [0, 1] -> (N, 3, H, W) pixel-encoder latents."""
    t = torch.as_tensor(np.ascontiguousarray(images.transpose(0, 3, 1, 2)), dtype=torch.float32)
    return PixelEncoder().encode(t)


def to_images(latents: torch.Tensor) -> np.ndarray:
    return PixelEncoder().decode(latents).numpy().transpose(0, 2, 3, 1).astype(np.float64)


def overfit_config(**kw) -> TrainConfig:
    base = dict(batch_size=4, stage1_iters=2000, log_every=10**9, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@timed
def stage1_overfit(config: TrainConfig | None = None, tol: float = 0.02, window: int = 50):
    """Single paired item, default learning rate; trailing-window mean L1 below ``tol``."""
    config = config or overfit_config()
    c = gen_corpus(4, 32, RngStream(config.seed, 1))
    x, y = to_latents(c.clean[:1]), to_latents(c.hazy[:1])
    state = train_stage1(config, x, y)
    losses = np.array(state.losses)
    final = float(losses[-window:].mean())
    first = next((i + 1 for i in range(window - 1, len(losses))
                  if losses[i - window + 1:i + 1].mean() < tol), None)
    res = CriterionResult(
        "stage-1 overfit", final < tol,
        f"{len(losses)} steps (lr {config.lr:g}, batch {config.batch_size}); initial L1 "
        f"{losses[:window].mean():.4f}, final {window}-step mean L1 {final:.4f} (tol {tol}); "
        f"first below tol at step {first}",
    )
    res.artifacts.update(state=state, x=x, y=y)
    return res


def _oracle_config() -> TrainConfig:
    return TrainConfig(T=10, base_channels=8, levels=2, blocks_per_level=1, batch_size=4,
                       stage1_iters=1, stage2_iters=30, lr=1e-3, seed=5)


@timed
def oracle_equivalence(n_steps: int = 30):
    """Stage 2 fed the true endpoint vs supervised single-bridge training, same seed.

    The frozen stage-1 network's digest is also checked before and after.
    """
    cfg = _oracle_config()
    c = gen_corpus(8, 16, RngStream(cfg.seed, 1))
    x, y = to_latents(c.clean), to_latents(c.hazy)
    sched = cfg.schedule()
    frozen = init_stage1(cfg, 3).net
    before = parameters_digest(frozen)

    s2 = init_stage2(cfg, frozen)
    net_ref = init_net(cfg.net_config(3, dual=False), RngStream(cfg.seed, 21))
    ref = StageState(stage=0, net=net_ref, optimizer=Adam(net_ref.parameters(), lr=cfg.lr))
    same_init = parameters_digest(s2.net) == parameters_digest(ref.net)

    rng_a, rng_b = RngStream(cfg.seed, 22), RngStream(cfg.seed, 22)
    batch_rng = RngStream(cfg.seed, 23)
    for _ in range(n_steps):
        idx = batch_rng.integers(0, len(x) - 1, size=cfg.batch_size)
        stage2_step(x[idx], s2, sched, rng_a, pseudo=y[idx])
        single_bridge_step(x[idx], y[idx], ref, sched, rng_b)
    a, b = np.array(s2.losses), np.array(ref.losses)
    identical = np.array_equal(a, b) and parameters_digest(s2.net) == parameters_digest(ref.net)
    frozen_ok = parameters_digest(frozen) == before
    ok = same_init and identical and frozen_ok
    return CriterionResult(
        "stage-2 oracle equivalence", ok,
        f"{n_steps} steps; loss traces bit-identical: {bool(np.array_equal(a, b))} "
        f"(max diff {np.abs(a - b).max():.1e}), final weights identical: {identical}, "
        f"frozen stage-1 digest unchanged: {frozen_ok}",
    )
