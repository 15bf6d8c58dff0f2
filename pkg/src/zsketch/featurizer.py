"""Lightweight gradient-orientation descriptor for raw pixel queries.

Pipeline: bilinear resize to a ``grid * cell_size`` square, 3x3 Sobel
gradients with replicate padding, per-cell unsigned orientation
histograms over [0, pi) weighted by gradient magnitude, global L2
normalization.  Deterministic by construction; a stand-in for CNN
features so the end-to-end demo needs no deep-learning stack.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import FeaturizerError
from .feature_store import FeatureStore, Instance, save_store

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm")


@dataclass(frozen=True)
class PixelImage:
    """Grayscale image, intensities in [0, 1], row-major."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width) float64

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise FeaturizerError("image must have positive dimensions")
        px = np.asarray(self.pixels, dtype=np.float64).reshape(self.height, self.width)
        px = np.clip(px, 0.0, 1.0)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "PixelImage":
        if len(data) != width * height:
            raise FeaturizerError(
                f"pixel buffer has {len(data)} bytes, expected {width * height}"
            )
        arr = np.frombuffer(data, dtype=np.uint8).astype(np.float64) / 255.0
        return cls(width, height, arr)


@dataclass(frozen=True)
class FeaturizerConfig:
    cell_size: int = 8
    n_bins: int = 9
    grid: int = 4
    binarize: bool = False  # threshold at 0.5 before gradients; default off

    def __post_init__(self):
        if min(self.cell_size, self.n_bins, self.grid) <= 0:
            raise FeaturizerError("featurizer config values must be positive")
        if self.output_dim < 8:
            raise FeaturizerError(f"output dim {self.output_dim} < 8 is useless")

    @property
    def output_dim(self) -> int:
        return self.grid * self.grid * self.n_bins

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _bilinear_resize(px: np.ndarray, size: int) -> np.ndarray:
    h, w = px.shape
    if (h, w) == (size, size):
        return px.copy()
    # pixel-center mapping, clamped at the borders
    rows = np.clip((np.arange(size) + 0.5) * h / size - 0.5, 0, h - 1)
    cols = np.clip((np.arange(size) + 0.5) * w / size - 0.5, 0, w - 1)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = px[np.ix_(r0, c0)] * (1 - fc) + px[np.ix_(r0, c1)] * fc
    bot = px[np.ix_(r1, c0)] * (1 - fc) + px[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def _sobel(px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(px, 1, mode="edge")
    # horizontal intensity change (correlation with the standard kernel)
    gx = (
        padded[:-2, 2:] + 2 * padded[1:-1, 2:] + padded[2:, 2:]
        - padded[:-2, :-2] - 2 * padded[1:-1, :-2] - padded[2:, :-2]
    )
    gy = (
        padded[2:, :-2] + 2 * padded[2:, 1:-1] + padded[2:, 2:]
        - padded[:-2, :-2] - 2 * padded[:-2, 1:-1] - padded[:-2, 2:]
    )
    return gx, gy


def extract(image: PixelImage, cfg: FeaturizerConfig) -> np.ndarray:
    """Descriptor vector of length ``cfg.output_dim``, L2 norm 0 or 1."""
    px = image.pixels
    if cfg.binarize:
        px = (px >= 0.5).astype(np.float64)
    size = cfg.grid * cfg.cell_size
    px = _bilinear_resize(px, size)
    gx, gy = _sobel(px)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((theta / np.pi * cfg.n_bins).astype(int), cfg.n_bins - 1)

    hist = np.zeros((cfg.grid, cfg.grid, cfg.n_bins))
    for gr in range(cfg.grid):
        for gc in range(cfg.grid):
            rs = slice(gr * cfg.cell_size, (gr + 1) * cfg.cell_size)
            cs = slice(gc * cfg.cell_size, (gc + 1) * cfg.cell_size)
            hist[gr, gc] = np.bincount(
                bins[rs, cs].ravel(), weights=mag[rs, cs].ravel(),
                minlength=cfg.n_bins,
            )
    vec = hist.ravel()
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec = vec / norm
    return vec


def read_pgm(path: str | Path) -> PixelImage:
    """Binary PGM (P5), maxval up to 65535."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise FeaturizerError(f"{path}: not a binary PGM (P5) file")
    # header = magic, width, height, maxval as whitespace/comment-separated tokens
    tokens: list[bytes] = []
    i = 2
    while len(tokens) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise FeaturizerError(f"{path}: truncated PGM header")
        tokens.append(data[start:i])
    i += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval <= 0 or maxval > 65535:
        raise FeaturizerError(f"{path}: bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=i)
    if raw.size != count:
        raise FeaturizerError(f"{path}: truncated PGM pixel data")
    return PixelImage(width, height, raw.astype(np.float64) / maxval)


def write_pgm(path: str | Path, image: PixelImage):
    px = np.round(image.pixels * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode())
        fh.write(px.tobytes())


def read_image(path: str | Path) -> PixelImage:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as im:
            gray = im.convert("L")
            arr = np.asarray(gray, dtype=np.float64) / 255.0
        return PixelImage(arr.shape[1], arr.shape[0], arr)
    raise FeaturizerError(f"{path}: unsupported image format")


def iter_class_images(root: str | Path):
    """Yield (class_name, path) for ``<class>/<file>`` trees, sorted."""
    root = Path(root)
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for img in sorted(class_dir.iterdir()):
            if img.suffix.lower() in IMAGE_SUFFIXES:
                yield class_dir.name, img


def featurize_tree(
    root: str | Path, cfg: FeaturizerConfig, modality: str
) -> tuple[list[Instance], list[str]]:
    """Extract descriptors for every image under ``root``.

    Instance ids are ``<modality>:<class>/<filename>`` so merged stores
    stay collision-free and thumbnails resolve back to source files.
    Unreadable images are skipped and reported, not fatal.
    """
    root = Path(root)
    instances: list[Instance] = []
    skipped: list[str] = []
    for label, path in iter_class_images(root):
        rel = f"{label}/{path.name}"
        try:
            img = read_image(path)
        except Exception as exc:  # unreadable file: record and move on
            log.warning("skipping unreadable image %s: %s", path, exc)
            skipped.append(rel)
            continue
        feats = extract(img, cfg)
        instances.append(Instance(f"{modality}:{rel}", modality, label, feats))
    if not instances and not skipped:
        raise FeaturizerError(f"no images found under {root}")
    if not instances:
        raise FeaturizerError(f"all {len(skipped)} images under {root} unreadable")
    return instances, skipped


def featurize_directory(
    root: str | Path,
    cfg: FeaturizerConfig,
    modality: str,
    out_dir: str | Path,
) -> FeatureStore:
    """Featurize one image tree and write a store manifest to ``out_dir``."""
    instances, _ = featurize_tree(root, cfg, modality)
    classes = sorted({inst.label for inst in instances})
    store = FeatureStore(
        instances, classes, cfg.output_dim,
        featurizer_meta={"config": cfg.to_dict(), "hash": cfg.hash()},
    )
    save_store(store, out_dir)
    return store
