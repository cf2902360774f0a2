"""``bridgehaze`` command line: synth | train | sample | eval | schedule."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .bridge import SamplerMode
from .config import (ConfigError, RunConfig, load_config_file, parse_override, resolve,
                     snapshot, write_snapshot)
from .data import gen_corpus, load_corpus, load_image, save_image, split, write_corpus
from .metrics import evaluate
from .model.checkpoint import CheckpointError, check_compatible, load_checkpoint, read_manifest
from .model.checkpoint import save_checkpoint
from .model.encoder import get_encoder
from .numeric.rng import RngStream
from .schedule import build_schedule
from .training import (STREAM_DATA, STREAM_SAMPLE, STREAM_SPLIT, TrainingDivergedError,
                       dehaze_latents, train_stage1, train_stage2)

log = logging.getLogger("bridgehaze")

LOG_ENV = "BRIDGEHAZE_LOG"

# exit codes by error category
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_INCOMPATIBLE = 4
EXIT_DIVERGED = 5

IMAGE_SUFFIXES = (".ppm", ".png", ".pgm", ".bmp")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")

    p = argparse.ArgumentParser(prog="bridgehaze", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic hazy/clean corpus")

    tr = sub.add_parser("train", parents=[common], help="run one training stage")
    tr.add_argument("--stage", type=int, choices=(1, 2), required=True)
    tr.add_argument("--checkpoint", help="stage-1 checkpoint (required for stage 2)")
    tr.add_argument("--data", help="corpus directory (overrides data_dir)")

    sa = sub.add_parser("sample", parents=[common], help="dehaze images with a stage-2 model")
    sa.add_argument("--checkpoint", required=True)
    sa.add_argument("--input", required=True, help="corpus directory or image directory")
    sa.add_argument("--sampler", choices=("posterior", "remarginalize", "paper-literal"))
    sa.add_argument("--steps", type=int)

    ev = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of predictions vs references")
    ev.add_argument("--pred", required=True, help="directory of predicted images")
    ev.add_argument("--ref", required=True, help="directory of reference images")

    sub.add_parser("schedule", parents=[common], help="print the bridge schedule table")
    return p


def _run_config(args) -> RunConfig:
    overrides = dict(parse_override(o) for o in args.overrides)
    # dedicated flags are overrides too
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        overrides["steps"] = args.steps
    if getattr(args, "sampler", None) is not None:
        overrides["sampler"] = args.sampler.replace("-", "_")
    if getattr(args, "data", None) is not None:
        overrides["data_dir"] = args.data
    return RunConfig(args.subcommand, args.config, overrides, args.seed, args.out)


def _require_out(run: RunConfig) -> Path:
    if not run.out:
        raise ConfigError(f"{run.subcommand} needs --out")
    return Path(run.out)


def _checkpoint_defaults(path) -> dict:
    manifest = read_manifest(path)
    return manifest.get("train_config", {})


# -- subcommands -----------------------------------------------------------------------

def cmd_synth(run: RunConfig) -> int:
    out = _require_out(run)
    file_vals = load_config_file(run.config_path) if run.config_path else None
    train, synth, source = resolve(file_vals, run.overrides)
    corpus = gen_corpus(synth.n_items, synth.size, RngStream(train.seed, STREAM_DATA),
                        downsample_factor=2 ** (train.levels - 1))
    split(corpus.manifest, RngStream(train.seed, STREAM_SPLIT), train.split_ratio,
          min(train.n_test, synth.n_items - 2))
    write_corpus(corpus, out)
    write_snapshot(out, snapshot(train, synth, run, source))
    m = corpus.manifest
    print(f"wrote {len(m.items)} items to {out} "
          f"(paired {len(m.paired)}, unpaired {len(m.unpaired)}, test {len(m.test)})")
    return EXIT_OK


def _latents(images: np.ndarray, encoder: str) -> torch.Tensor:
    t = torch.as_tensor(np.ascontiguousarray(images.transpose(0, 3, 1, 2)), dtype=torch.float32)
    return get_encoder(encoder).encode(t)


def cmd_train(run: RunConfig, stage: int, checkpoint: str | None) -> int:
    out = _require_out(run)
    file_vals = load_config_file(run.config_path) if run.config_path else None
    base = {}
    if stage == 2:
        if not checkpoint:
            raise ConfigError("train --stage 2 requires --checkpoint <stage-1 checkpoint>")
        base = _checkpoint_defaults(checkpoint)
    train, synth, source = resolve(file_vals, run.overrides, base)
    if stage == 2:
        # validate before any compute
        check_compatible(read_manifest(checkpoint), T=train.T, stage=1)
    if not train.data_dir:
        raise ConfigError("no corpus: pass --data or set data_dir")
    corpus = load_corpus(train.data_dir)
    m = corpus.manifest
    snap = snapshot(train, synth, run, source)
    write_snapshot(out, snap)
    log_path = out / "loss.csv"
    if stage == 1:
        ids = m.paired or [it["id"] for it in m.items]
        x = _latents(corpus.clean[ids], train.encoder)
        y = _latents(corpus.hazy[ids], train.encoder)
        state = train_stage1(train, x, y, log_path=log_path)
    else:
        frozen, _ = load_checkpoint(checkpoint, T=train.T, stage=1)
        ids = m.unpaired or [it["id"] for it in m.items]
        x = _latents(corpus.clean[ids], train.encoder)
        state = train_stage2(train, x, frozen, log_path=log_path)
    save_checkpoint(out / "checkpoint", state.net, stage=stage, s=train.s,
                    optimizer=state.optimizer,
                    extra={"train_config": train.to_dict(), "iterations": state.iteration})
    print(f"stage {stage}: {state.iteration} iterations, final loss {state.losses[-1]:.5f}; "
          f"checkpoint {out / 'checkpoint'}")
    return EXIT_OK


def _read_inputs(path: Path):
    if (path / "manifest.json").is_file():
        corpus = load_corpus(path)
        m = corpus.manifest
        ids = m.test or [it["id"] for it in m.items]
        return [f"{i:05d}" for i in ids], corpus.hazy[ids]
    if not path.is_dir():
        raise FileNotFoundError(f"input directory {path} not found")
    files = sorted(f for f in path.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no images in {path}")
    return [f.stem for f in files], np.stack([load_image(f) for f in files])


def cmd_sample(run: RunConfig, checkpoint: str, input_dir: str) -> int:
    out = _require_out(run)
    file_vals = load_config_file(run.config_path) if run.config_path else None
    base = _checkpoint_defaults(checkpoint)
    train, synth, source = resolve(file_vals, run.overrides, base)
    manifest = read_manifest(checkpoint)
    check_compatible(manifest, T=train.T, stage=2)
    names, hazy = _read_inputs(Path(input_dir))
    check_compatible(manifest, latent_channels=hazy.shape[-1])
    net, _ = load_checkpoint(checkpoint, T=train.T, stage=2)
    f = net.config.downsample_factor
    if hazy.shape[1] % f or hazy.shape[2] % f:
        raise CheckpointError(f"input size {hazy.shape[1:3]} not divisible by {f}")
    write_snapshot(out, snapshot(train, synth, run, source))
    enc = get_encoder(train.encoder)
    mode = SamplerMode(train.sampler, train.steps)
    z = dehaze_latents(net, _latents(hazy, train.encoder), train.schedule(), mode,
                       RngStream(train.seed, STREAM_SAMPLE))
    images = enc.decode(z).numpy().transpose(0, 2, 3, 1)
    for name, img in zip(names, images):
        save_image(out / f"{name}.ppm", img)
    print(f"dehazed {len(names)} images with {mode.variant} x {mode.steps} steps into {out}")
    return EXIT_OK


def _image_dir(path: Path) -> dict:
    if not path.is_dir():
        raise FileNotFoundError(f"image directory {path} not found")
    return {f.stem: f for f in sorted(path.iterdir()) if f.suffix.lower() in IMAGE_SUFFIXES}


def cmd_eval(run: RunConfig, pred: str, ref: str) -> int:
    out = _require_out(run)
    file_vals = load_config_file(run.config_path) if run.config_path else None
    train, synth, source = resolve(file_vals, run.overrides)
    preds, refs = _image_dir(Path(pred)), _image_dir(Path(ref))
    names = [n for n in preds if n in refs]
    if not names:
        raise FileNotFoundError(f"no matching image names between {pred} and {ref}")
    report = evaluate([load_image(preds[n]) for n in names],
                      [load_image(refs[n]) for n in names], names)
    write_snapshot(out, snapshot(train, synth, run, source))
    report.write_csv(out / "metrics.csv")
    summ = report.summary()
    print(f"{summ['n']} items: PSNR {summ['psnr_mean']:.3f} dB, SSIM {summ['ssim_mean']:.4f}")
    return EXIT_OK


def schedule_table(T: int, s: float) -> str:
    rows = build_schedule(T, s).table()
    cols = list(rows[0])
    lines = ["\t".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(str(v) if c == "t" else ("nan" if np.isnan(v) else f"{v:.6g}"))
        lines.append("\t".join(cells))
    return "\n".join(lines)


def cmd_schedule(run: RunConfig) -> int:
    file_vals = load_config_file(run.config_path) if run.config_path else None
    train, synth, source = resolve(file_vals, run.overrides)
    text = schedule_table(train.T, train.s)
    print(text)
    if run.out:
        out = Path(run.out)
        write_snapshot(out, snapshot(train, synth, run, source))
        (out / "schedule.tsv").write_text(text + "\n")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------------

def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        run = _run_config(args)
        if args.subcommand == "synth":
            return cmd_synth(run)
        if args.subcommand == "train":
            return cmd_train(run, args.stage, args.checkpoint)
        if args.subcommand == "sample":
            return cmd_sample(run, args.checkpoint, args.input)
        if args.subcommand == "eval":
            return cmd_eval(run, args.pred, args.ref)
        return cmd_schedule(run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        code = EXIT_MISSING if "no checkpoint manifest" in str(exc) else EXIT_INCOMPATIBLE
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return code
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
