"""Checkpoint directories: ``weights.bbt`` archive plus ``manifest.json``."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from ..numeric.tensorio import load_archive, save_archive
from .unet import NetConfig, PredictorNet

FORMAT_VERSION = 1
WEIGHTS = "weights.bbt"
OPTIM = "optimizer.bbt"
MANIFEST = "manifest.json"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, net: PredictorNet, *, stage: int, s: float,
                    optimizer=None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_archive(path / WEIGHTS, {k: v for k, v in net.state_dict().items()})
    if optimizer is not None:
        save_archive(path / OPTIM, optimizer.state_tensors())
    manifest = {
        "version": FORMAT_VERSION,
        "stage": stage,
        "T": net.config.T,
        "s": s,
        "net": net.config.to_dict(),
        **(extra or {}),
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    mf = path / MANIFEST
    if not mf.is_file():
        raise CheckpointError(f"no checkpoint manifest at {mf}")
    manifest = json.loads(mf.read_text())
    if manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
    return manifest


def check_compatible(manifest: dict, *, T: int | None = None, stage: int | None = None,
                     latent_channels: int | None = None) -> None:
    """Raise before any compute if the checkpoint cannot serve the request."""
    if T is not None and manifest["T"] != T:
        raise CheckpointError(f"checkpoint trained with T={manifest['T']}, config asks T={T}")
    if stage is not None and manifest["stage"] != stage:
        raise CheckpointError(f"expected a stage-{stage} checkpoint, got stage {manifest['stage']}")
    if latent_channels is not None and manifest["net"]["latent_channels"] != latent_channels:
        raise CheckpointError("latent channel count differs from the checkpoint")


def load_checkpoint(path, *, optimizer=None, **expect) -> tuple[PredictorNet, dict]:
    path = Path(path)
    manifest = read_manifest(path)
    check_compatible(manifest, **expect)
    net = PredictorNet(NetConfig.from_dict(manifest["net"]))
    state = load_archive(path / WEIGHTS)
    try:
        net.load_state_dict({k: v for k, v in state.items()})
    except RuntimeError as exc:
        raise CheckpointError(f"weights do not fit the manifest config: {exc}") from exc
    if optimizer is not None and (path / OPTIM).is_file():
        optimizer.load_state_tensors(load_archive(path / OPTIM))
    return net, manifest


def freeze(net: PredictorNet) -> PredictorNet:
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net


def parameters_digest(net: PredictorNet) -> str:
    h = hashlib.sha256()
    for name, t in sorted(net.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


__all__ = [
    "CheckpointError",
    "check_compatible",
    "freeze",
    "load_checkpoint",
    "parameters_digest",
    "read_manifest",
    "save_checkpoint",
]
