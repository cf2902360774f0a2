"""Two-stage semi-supervised training.

Stage 1 trains one dual-bridge network on paired ``(x, y)`` latents: the
clean->hazy bridge is diffused to ``t_x`` and the hazy->clean bridge to
``t_y``, and the network regresses both clean endpoints ``(x, y)`` with an
L1 loss. The x-group term is the M-step surrogate for the dehazing
conditional ``p(x|y)`` and the y-group term for the hazing conditional
``q(y|x)``; training them jointly in one network replaces the explicit
alternation.

Stage 2 freezes that network, turns each unpaired clean image ``x`` into a
pseudo-hazy endpoint ``y_hat`` in one shot, and trains a freshly initialised
single-bridge network on ``x -> y_hat`` bridges to predict ``x``. At
inference the real hazy image is the pinned endpoint ``z_T``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .bridge import SamplerMode, forward_marginal, sample
from .model.checkpoint import freeze
from .model.unet import NetConfig, PredictorNet
from .numeric import ops
from .numeric.optim import Adam
from .numeric.rng import RngStream
from .schedule import BridgeSchedule, build_schedule

log = logging.getLogger(__name__)

# stream ids derived from the root seed
STREAM_DATA = 1
STREAM_SPLIT = 2
STREAM_STAGE1_INIT = 11
STREAM_STAGE1 = 12
STREAM_STAGE2_INIT = 21
STREAM_STAGE2 = 22
STREAM_SAMPLE = 31


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    T: int = 50
    s: float = 1.0
    lr: float = 5e-5
    batch_size: int = 8
    stage1_iters: int = 1000
    stage2_iters: int = 1000
    seed: int = 0
    base_channels: int = 32
    levels: int = 2
    blocks_per_level: int = 2
    branches: tuple[str, ...] = ("vanilla", "cd", "ad", "hd", "vd")
    rdc_mode: str = "reparam"
    encoder: str = "pixel"
    patch: int | None = None
    pseudo_label: str = "one_shot"  # or "bridge": iterative sampling of the hazing bridge
    pseudo_steps: int = 10
    cache_pseudo_labels: bool = False
    split_ratio: tuple[int, int] = (1, 1)
    n_test: int = 16
    sampler: str = "posterior"
    steps: int = 10
    data_dir: str | None = None
    log_every: int = 50
    checkpoint_every: int = 0

    def __post_init__(self):
        self.branches = tuple(self.branches)
        self.split_ratio = tuple(self.split_ratio)
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not self.s > 0:
            raise ValueError("s must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.stage1_iters < 1 or self.stage2_iters < 0:
            raise ValueError("stage1_iters must be >= 1 and stage2_iters >= 0")
        if self.pseudo_label not in ("one_shot", "bridge"):
            raise ValueError(f"unknown pseudo_label mode {self.pseudo_label!r}")
        if len(self.split_ratio) != 2 or min(self.split_ratio) < 0 or sum(self.split_ratio) == 0:
            raise ValueError("split_ratio must be two non-negative numbers")

    def net_config(self, latent_channels: int = 3, dual: bool = False) -> NetConfig:
        return NetConfig(latent_channels=latent_channels, base_channels=self.base_channels,
                         levels=self.levels, blocks_per_level=self.blocks_per_level,
                         T=self.T, dual=dual, branches=self.branches, rdc_mode=self.rdc_mode)

    def schedule(self) -> BridgeSchedule:
        return build_schedule(self.T, self.s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branches"] = list(self.branches)
        d["split_ratio"] = list(self.split_ratio)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StageState:
    stage: int
    net: PredictorNet
    optimizer: Adam
    iteration: int = 0
    frozen: PredictorNet | None = None
    losses: list[float] = field(default_factory=list)
    pseudo_cache: dict | None = None

    def __post_init__(self):
        if self.stage == 2 and self.frozen is None:
            raise ValueError("a stage-2 state needs the frozen stage-1 network")


def init_net(config: NetConfig, rng: RngStream) -> PredictorNet:
    """Construct a network whose initial weights depend only on ``rng``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(rng.integers(0, 2**62)))
        return PredictorNet(config)


def init_stage1(config: TrainConfig, latent_channels: int = 3,
                rng: RngStream | None = None) -> StageState:
    rng = rng or RngStream(config.seed, STREAM_STAGE1_INIT)
    net = init_net(config.net_config(latent_channels, dual=True), rng)
    return StageState(stage=1, net=net, optimizer=Adam(net.parameters(), lr=config.lr))


def init_stage2(config: TrainConfig, frozen: PredictorNet,
                rng: RngStream | None = None) -> StageState:
    """Fresh single-bridge network plus the frozen stage-1 network."""
    if not frozen.config.dual:
        raise ValueError("stage 2 needs a dual-mode stage-1 network")
    rng = rng or RngStream(config.seed, STREAM_STAGE2_INIT)
    net = init_net(config.net_config(frozen.config.latent_channels, dual=False), rng)
    return StageState(stage=2, net=net, optimizer=Adam(net.parameters(), lr=config.lr),
                      frozen=freeze(frozen))


def _draw_t(T: int, batch: int, rng: RngStream) -> np.ndarray:
    return rng.integers(1, T, size=batch)


def _apply(state: StageState, loss: torch.Tensor, dump: dict) -> float:
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"non-finite loss at stage {state.stage} iteration {state.iteration}; "
            f"batch stats: " + json.dumps(dump)
        )
    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    state.iteration += 1
    state.losses.append(value)
    return value


def _batch_stats(**tensors) -> dict:
    return {k: {"min": float(v.min()), "max": float(v.max()),
                "finite": bool(torch.isfinite(v).all())} for k, v in tensors.items()}


def stage1_step(x: torch.Tensor, y: torch.Tensor, state: StageState,
                sched: BridgeSchedule, rng: RngStream, t_x=None, t_y=None) -> float:
    """One paired dual-bridge update; returns the batch L1 loss."""
    if state.stage != 1:
        raise ValueError("stage1_step needs a stage-1 state")
    if x.shape != y.shape:
        raise ValueError("x and y must share a shape")
    b = x.shape[0]
    t_x = _draw_t(sched.T, b, rng) if t_x is None else np.broadcast_to(t_x, (b,))
    t_y = _draw_t(sched.T, b, rng) if t_y is None else np.broadcast_to(t_y, (b,))
    z_tx = forward_marginal(x, y, t_x, sched, rng)
    z_ty = forward_marginal(y, x, t_y, sched, rng)
    state.net.train()
    x_hat, y_hat = state.net.predict_pair(z_tx, z_ty, t_x, t_y)
    loss = ops.l1_loss(ops.concat([x_hat, y_hat]), ops.concat([x, y]))
    return _apply(state, loss, _batch_stats(x=x, y=y, z_tx=z_tx, z_ty=z_ty))


@torch.no_grad()
def make_pseudo_pair(x: torch.Tensor, frozen: PredictorNet, mode: str = "one_shot",
                     sched: BridgeSchedule | None = None, steps: int = 10,
                     rng: RngStream | None = None):
    """``(x, y_hat)`` with ``y_hat`` predicted by the frozen stage-1 network.

    ``one_shot`` reads the y-group output at ``(t_x, t_y) = (0, T)``, where
    both bridge states equal ``x``. ``bridge`` instead runs the reverse
    hazing bridge from ``z_T = x`` with ``steps`` posterior steps.
    """
    if x.ndim != 4 or x.shape[1] != frozen.config.latent_channels:
        raise ValueError("x does not match the frozen network's latent shape")
    T = frozen.config.T
    if mode == "one_shot":
        return x, frozen.predict_pair(x, x, 0, T)[1]
    if mode == "bridge":
        if sched is None or rng is None:
            raise ValueError("bridge pseudo-labels need a schedule and an rng")

        def predictor(z, zT, t):
            return frozen.predict_pair(x, z, 0, t)[1]

        return x, sample(predictor, x, sched, SamplerMode("posterior", steps), rng)
    raise ValueError(f"unknown pseudo-label mode {mode!r}")


def single_bridge_step(x: torch.Tensor, y_end: torch.Tensor, state: StageState,
                       sched: BridgeSchedule, rng: RngStream, t=None) -> float:
    """Supervised ``x -> y_end`` bridge update predicting ``x``."""
    if x.shape != y_end.shape:
        raise ValueError("x and its endpoint must share a shape")
    b = x.shape[0]
    t = _draw_t(sched.T, b, rng) if t is None else np.broadcast_to(t, (b,))
    z_t = forward_marginal(x, y_end, t, sched, rng)
    state.net.train()
    pred = state.net(z_t, y_end, t)
    loss = ops.l1_loss(pred, x)
    return _apply(state, loss, _batch_stats(x=x, y_end=y_end, z_t=z_t))


def stage2_step(x: torch.Tensor, state: StageState, sched: BridgeSchedule, rng: RngStream,
                pseudo: torch.Tensor | None = None, t=None, keys=None,
                config: TrainConfig | None = None) -> float:
    """One unpaired update. ``pseudo`` overrides the frozen network's labels."""
    if state.stage != 2:
        raise ValueError("stage2_step needs a stage-2 state")
    if pseudo is None:
        pseudo = _pseudo_labels(x, state, sched, config, keys)
    return single_bridge_step(x, pseudo, state, sched, rng, t=t)


def _pseudo_labels(x, state: StageState, sched, config: TrainConfig | None, keys):
    mode = config.pseudo_label if config else "one_shot"
    steps = config.pseudo_steps if config else 10
    if config is not None and config.cache_pseudo_labels and keys is not None:
        cache = state.pseudo_cache if state.pseudo_cache is not None else {}
        state.pseudo_cache = cache
        missing = [i for i, k in enumerate(keys) if k not in cache]
        if missing:
            _, y_hat = make_pseudo_pair(x[missing], state.frozen, mode, sched, steps,
                                        RngStream(config.seed, 100_000 + state.iteration))
            for i, yh in zip(missing, y_hat):
                cache[keys[i]] = yh
        return torch.stack([cache[k] for k in keys])
    # only the "bridge" mode consumes randomness; one stream per iteration
    rng = RngStream(config.seed if config else 0, 100_000 + state.iteration)
    return make_pseudo_pair(x, state.frozen, mode, sched, steps, rng)[1]


# -- stage plan -------------------------------------------------------------------

@dataclass
class StagePlan:
    phases: list[dict]

    def to_json(self) -> str:
        return json.dumps({"phases": self.phases}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StagePlan":
        return cls(json.loads(text)["phases"])


def em_schedule(config: TrainConfig) -> StagePlan:
    """Training plan: paired dual-bridge stage, freeze, unpaired stage."""
    phases = [{
        "stage": 1, "iters": config.stage1_iters, "data": "paired",
        "terms": {
            "x_group": "L1 to x on the x->y bridge; M-step surrogate for p(x|y)",
            "y_group": "L1 to y on the y->x bridge; M-step surrogate for q(y|x)",
        },
    }]
    if config.stage2_iters > 0:
        phases.append({"freeze": 1})
        phases.append({
            "stage": 2, "iters": config.stage2_iters, "data": "unpaired_clean",
            "terms": {"x": "L1 to x on the x->y_hat bridge; y_hat from the frozen q(y|x)"},
        })
    return StagePlan(phases)


# -- loops ----------------------------------------------------------------------------

class LossLog:
    """CSV writer for ``iteration, stage, loss, lr, wall_time``."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self._t0 = time.perf_counter()
        self._fh = None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            new = not self.path.exists()
            self._fh = open(self.path, "a", newline="")
            self._w = csv.writer(self._fh)
            if new:
                self._w.writerow(["iteration", "stage", "loss", "lr", "wall_time"])

    def write(self, it: int, stage: int, loss: float, lr: float) -> None:
        if self._fh:
            self._w.writerow([it, stage, f"{loss:.8g}", lr,
                              f"{time.perf_counter() - self._t0:.3f}"])

    def close(self) -> None:
        if self._fh:
            self._fh.close()


def _to_tensor(a) -> torch.Tensor:
    return a if isinstance(a, torch.Tensor) else torch.as_tensor(np.asarray(a), dtype=torch.float32)


def _batch(pool: torch.Tensor, idx: np.ndarray, patch: int | None, rng: RngStream,
           *others: torch.Tensor):
    tensors = [pool[idx]] + [o[idx] for o in others]
    if patch is None or patch >= pool.shape[-1]:
        return tensors
    h, w = pool.shape[-2:]
    out = [[] for _ in tensors]
    for i in range(len(idx)):
        top = int(rng.integers(0, h - patch))
        left = int(rng.integers(0, w - patch))
        for j, t in enumerate(tensors):
            out[j].append(t[i, :, top:top + patch, left:left + patch])
    return [torch.stack(o) for o in out]


def train_stage1(config: TrainConfig, x, y, *, state: StageState | None = None,
                 log_path=None, callback=None) -> StageState:
    """Run ``config.stage1_iters`` paired updates on latent stacks ``x, y``."""
    x, y = _to_tensor(x), _to_tensor(y)
    sched = config.schedule()
    state = state or init_stage1(config, x.shape[1])
    rng = RngStream(config.seed, STREAM_STAGE1)
    logger = LossLog(log_path)
    try:
        while state.iteration < config.stage1_iters:
            idx = rng.integers(0, len(x) - 1, size=config.batch_size)
            bx, by = _batch(x, idx, config.patch, rng, y)
            loss = stage1_step(bx, by, state, sched, rng)
            if state.iteration % config.log_every == 0 or state.iteration == config.stage1_iters:
                logger.write(state.iteration, 1, loss, config.lr)
                log.info("stage 1 it %d loss %.5f", state.iteration, loss)
            if callback:
                callback(state)
    finally:
        logger.close()
    return state


def train_stage2(config: TrainConfig, x_unpaired, frozen: PredictorNet, *,
                 state: StageState | None = None, log_path=None, callback=None) -> StageState:
    """Run ``config.stage2_iters`` unpaired updates on clean latents."""
    x = _to_tensor(x_unpaired)
    sched = config.schedule()
    state = state or init_stage2(config, frozen)
    rng = RngStream(config.seed, STREAM_STAGE2)
    logger = LossLog(log_path)
    try:
        while state.iteration < config.stage2_iters:
            idx = rng.integers(0, len(x) - 1, size=config.batch_size)
            (bx,) = _batch(x, idx, config.patch, rng)
            keys = [int(i) for i in idx] if config.patch is None else None
            loss = stage2_step(bx, state, sched, rng, keys=keys, config=config)
            if state.iteration % config.log_every == 0 or state.iteration == config.stage2_iters:
                logger.write(state.iteration, 2, loss, config.lr)
                log.info("stage 2 it %d loss %.5f", state.iteration, loss)
            if callback:
                callback(state)
    finally:
        logger.close()
    return state


@torch.no_grad()
def dehaze_latents(net: PredictorNet, hazy: torch.Tensor, sched: BridgeSchedule,
                   mode: SamplerMode, rng: RngStream, batch_size: int = 16) -> torch.Tensor:
    """Sample clean latents with ``z_T`` pinned to each hazy latent."""
    if net.config.dual:
        raise ValueError("dehazing uses the single-bridge (stage 2) network")
    was_training = net.training
    net.fuse()
    outs = []
    try:
        for i in range(0, len(hazy), batch_size):
            zT = hazy[i:i + batch_size]
            outs.append(sample(net.predict_z0, zT, sched, mode, rng))
    finally:
        for blk in net.rdc_blocks():
            blk.unfuse()
        net.train(was_training)
    return torch.cat(outs)
