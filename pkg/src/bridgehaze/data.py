"""Synthetic hazy/clean corpora and a 2-D point-cloud toy domain.

Images are float arrays in ``[0, 1]`` with layout ``(H, W, 3)``; stacks are
``(N, H, W, 3)``. Generated pixels are snapped to 8-bit levels so that the
portable-pixmap files written by :func:`write_corpus` round-trip exactly.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from sklearn.datasets import make_moons

from .numeric.rng import RngStream

BETA_RANGE = (0.6, 1.8)
A_RANGE = (0.7, 1.0)
MAX_DEPTH = 3.0


# -- atmospheric scattering ---------------------------------------------------

@dataclass
class HazeField:
    beta: float
    A: float
    depth: np.ndarray

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 <= self.A <= 1.0:
            raise ValueError(f"atmospheric light must lie in [0, 1], got {self.A}")
        if (self.depth < 0).any():
            raise ValueError("depth must be non-negative")

    def transmission(self) -> np.ndarray:
        return np.exp(-self.beta * self.depth)


def haze_apply(J, field: HazeField) -> np.ndarray:
    """``I = J t + A (1 - t)`` with ``t = exp(-beta d)``, per pixel.

    ``J`` is ``(H, W)`` or ``(H, W, C)``; the depth map is ``(H, W)``.
    """
    J = np.asarray(J, dtype=np.float64)
    if J.shape[:2] != field.depth.shape:
        raise ValueError(f"image {J.shape[:2]} and depth {field.depth.shape} differ")
    t = field.transmission()
    if J.ndim == 3:
        t = t[..., None]
    return J * t + field.A * (1.0 - t)


def estimate_beta(I, J, A: float, depth: float) -> float:
    """Invert the scattering model for a uniform-depth scene."""
    I = np.asarray(I, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    t = np.mean((I - A) / (J - A))
    return float(-math.log(t) / depth)


# -- procedural scenes -------------------------------------------------------

def _grid(size: int):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    return yy, xx


def depth_field(size: int, rng: RngStream) -> np.ndarray:
    """Smooth depth: sum of three random planar/radial components, scaled to [0, 3]."""
    yy, xx = _grid(size)
    d = np.zeros((size, size))
    for _ in range(3):
        if rng.uniform() < 0.5:
            theta = rng.uniform(0, 2 * math.pi)
            d += rng.uniform(0.3, 1.0) * (math.cos(theta) * xx + math.sin(theta) * yy)
        else:
            cy, cx = rng.uniform(size=2)
            d += rng.uniform(0.3, 1.0) * np.hypot(yy - cy, xx - cx)
    d -= d.min()
    span = d.max()
    return d * (MAX_DEPTH / span) if span > 0 else d


def clean_image(size: int, rng: RngStream) -> np.ndarray:
    """Colour gradient background with random rectangles and disks."""
    yy, xx = _grid(size)
    c0, c1 = rng.uniform(0.1, 0.9, size=3), rng.uniform(0.1, 0.9, size=3)
    theta = rng.uniform(0, 2 * math.pi)
    ramp = np.clip(0.5 + 0.5 * (math.cos(theta) * (xx - 0.5) + math.sin(theta) * (yy - 0.5)) * 2,
                   0, 1)
    img = c0 * (1 - ramp[..., None]) + c1 * ramp[..., None]
    for _ in range(int(rng.integers(2, 5))):
        y0, x0 = rng.uniform(0, 0.8, size=2)
        h, w = rng.uniform(0.1, 0.5, size=2)
        mask = (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)
        img[mask] = rng.uniform(0, 1, size=3)
    for _ in range(int(rng.integers(1, 3))):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        r = rng.uniform(0.05, 0.25)
        img[np.hypot(yy - cy, xx - cx) < r] = rng.uniform(0, 1, size=3)
    return np.clip(img, 0.0, 1.0)


def quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


# -- corpus and manifest ------------------------------------------------------

@dataclass
class DatasetManifest:
    size: int
    seed: int
    items: list[dict] = field(default_factory=list)
    paired: list[int] = field(default_factory=list)
    unpaired: list[int] = field(default_factory=list)
    test: list[int] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        ids = {it["id"] for it in self.items}
        groups = [set(self.paired), set(self.unpaired), set(self.test)]
        for g in groups:
            if not g <= ids:
                raise ValueError("split references unknown item ids")
        if (groups[0] & groups[1]) or (groups[0] & groups[2]) or (groups[1] & groups[2]):
            raise ValueError("splits are not disjoint")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        m = cls(**json.loads(text))
        m.validate()
        return m


@dataclass
class Corpus:
    clean: np.ndarray  # (N, H, W, 3)
    hazy: np.ndarray
    fields: list[HazeField]
    manifest: DatasetManifest

    def subset(self, ids) -> tuple[np.ndarray, np.ndarray]:
        ids = list(ids)
        return self.clean[ids], self.hazy[ids]


def gen_corpus(n: int, size: int, rng: RngStream, downsample_factor: int = 2) -> Corpus:
    """``n`` clean/hazy pairs of ``size x size`` pixels; a pure function of the seed.

    Each item draws from its own child stream, so item ``i`` does not depend
    on ``n``.
    """
    if n < 4:
        raise ValueError("need at least 4 items")
    if size % downsample_factor:
        warnings.warn(f"image size {size} is not divisible by the network "
                      f"downsampling factor {downsample_factor}", stacklevel=2)
    clean, hazy, fields, items = [], [], [], []
    for i in range(n):
        item_rng = rng.child(1000 + i)
        J = quantize(clean_image(size, item_rng))
        f = HazeField(beta=float(item_rng.uniform(*BETA_RANGE)),
                      A=float(item_rng.uniform(*A_RANGE)),
                      depth=depth_field(size, item_rng))
        clean.append(J)
        hazy.append(quantize(haze_apply(J, f)))
        fields.append(f)
        items.append({"id": i, "clean": f"clean/{i:05d}.ppm", "hazy": f"hazy/{i:05d}.ppm",
                      "beta": f.beta, "A": f.A})
    manifest = DatasetManifest(size=size, seed=rng.seed, items=items,
                               params={"beta_range": list(BETA_RANGE),
                                       "A_range": list(A_RANGE), "max_depth": MAX_DEPTH})
    return Corpus(np.stack(clean), np.stack(hazy), fields, manifest)


def split(manifest: DatasetManifest, rng: RngStream, ratio=(1, 1),
          n_test: int = 0) -> DatasetManifest:
    """Shuffle items into disjoint test / paired / unpaired lists.

    ``n_test`` items are held out first; the rest are divided ``ratio[0]:ratio[1]``.
    """
    ids = np.array([it["id"] for it in manifest.items])
    if not 0 <= n_test < len(ids):
        raise ValueError("n_test must leave training items")
    perm = [int(i) for i in rng.generator.permutation(ids)]
    test, rest = perm[:n_test], perm[n_test:]
    n_paired = int(round(len(rest) * ratio[0] / (ratio[0] + ratio[1])))
    manifest.test = sorted(test)
    manifest.paired = sorted(rest[:n_paired])
    manifest.unpaired = sorted(rest[n_paired:])
    manifest.validate()
    return manifest


def save_image(path, img: np.ndarray) -> None:
    arr = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB" if arr.ndim == 3 else "L").save(path, format="PPM")


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_corpus(corpus: Corpus, out_dir) -> Path:
    out = Path(out_dir)
    for it, J, I in zip(corpus.manifest.items, corpus.clean, corpus.hazy):
        save_image(out / it["clean"], J)
        save_image(out / it["hazy"], I)
    (out / "manifest.json").write_text(corpus.manifest.to_json())
    return out


def load_corpus(data_dir) -> Corpus:
    root = Path(data_dir)
    mf = root / "manifest.json"
    if not mf.is_file():
        raise FileNotFoundError(f"no dataset manifest at {mf}")
    manifest = DatasetManifest.from_json(mf.read_text())
    clean = np.stack([load_image(root / it["clean"]) for it in manifest.items])
    hazy = np.stack([load_image(root / it["hazy"]) for it in manifest.items])
    return Corpus(clean, hazy, [], manifest)


# -- patches ---------------------------------------------------------------------

def n_crop_positions(height: int, width: int, patch: int) -> int:
    return (height - patch + 1) * (width - patch + 1)


def crop_patches(img, patch: int, rng: RngStream):
    """Uniformly random ``patch x patch`` window over the last two axes.

    Stack paired images on a leading axis to crop them identically.
    """
    h, w = img.shape[-2], img.shape[-1]
    if patch > h or patch > w:
        raise ValueError(f"patch {patch} larger than image {h}x{w}")
    top = int(rng.integers(0, h - patch))
    left = int(rng.integers(0, w - patch))
    return img[..., top:top + patch, left:left + patch]


# -- 2-D toy domain ---------------------------------------------------------------

@dataclass
class Toy2D:
    X: np.ndarray
    Y: np.ndarray
    matrix: np.ndarray
    offset: np.ndarray

    def inverse(self, Y: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.matrix, (Y - self.offset).T).T


TOY_MATRIX = np.array([[1.2, 0.6], [0.0, 0.9]])
TOY_OFFSET = np.array([1.5, -1.0])


def toy2d_domains(n: int, rng: RngStream) -> Toy2D:
    """Two-moons cloud ``X`` and its sheared, shifted copy ``Y`` (row-paired)."""
    if n < 100:
        raise ValueError("need at least 100 points")
    X, _ = make_moons(n_samples=n, noise=0.05, random_state=int(rng.integers(0, 2**31 - 1)))
    Y = X @ TOY_MATRIX.T + TOY_OFFSET
    return Toy2D(X=X, Y=Y, matrix=TOY_MATRIX.copy(), offset=TOY_OFFSET.copy())
