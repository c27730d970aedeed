"""Labelled 96x96 grayscale images: PGM loading and a synthetic sonar-like set.

Synthetic classes (index: name), each a bright shape on a dark seabed,
slightly rotated, shifted and scaled, then corrupted by multiplicative
speckle ``p <- clip(p * (1 + sigma * u), 0, 1)``, ``u ~ U[-1, 1]``:

 0 background   speckle over the seabed texture only
 1 bar          long thin rectangle
 2 disk         filled circle
 3 ring         annulus
 4 cross        two crossing bars
 5 corner       L shape
 6 two-blob     pair of small disks
 7 arc          half annulus
 8 wedge        filled circular sector
 9 triangle     filled triangle
10 frame        square outline
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGE_SIZE = 96
SPECKLE_SIGMA = 0.4
# pose jitter of the synthetic shapes
MAX_ROTATION = np.pi / 12
SCALE_RANGE = (0.8, 1.05)
MAX_SHIFT = 0.15

SYNTH_CLASSES = (
    "background", "bar", "disk", "ring", "cross", "corner",
    "two-blob", "arc", "wedge", "triangle", "frame",
)


class DatasetError(ValueError):
    pass


@dataclass
class LabeledImage:
    pixels: np.ndarray  # (1, 1, 96, 96), values in [0, 1]
    label: int
    source: str


@dataclass
class DatasetSplit:
    train: list
    test: list = field(default_factory=list)
    class_names: list = field(default_factory=lambda: list(SYNTH_CLASSES))

    def __post_init__(self):
        overlap = {im.source for im in self.train} & {im.source for im in self.test}
        if overlap:
            raise DatasetError(f"train and test share {len(overlap)} source ids")

    def images(self, which="train"):
        if which == "all":
            return self.train + self.test
        return {"train": self.train, "test": self.test}[which]

    def arrays(self, which="train"):
        """Stacked ``(N, 1, H, W)`` float32 pixels and ``(N,)`` labels."""
        ims = self.images(which)
        if not ims:
            return np.zeros((0, 1, IMAGE_SIZE, IMAGE_SIZE), np.float32), np.zeros(0, dtype=np.int64)
        x = np.concatenate([im.pixels for im in ims]).astype(np.float32)
        y = np.array([im.label for im in ims], dtype=np.int64)
        return x, y

    def __len__(self):
        return len(self.train) + len(self.test)


# -- PGM -------------------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int):
    """First ``count`` header tokens and the offset just past the single whitespace after them."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DatasetError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8-bit graymap as a ``(H, W)`` uint8 array."""
    data = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"{path}: unreadable PGM header") from exc
    if magic != b"P5":
        raise DatasetError(f"{path}: not a binary PGM (magic {magic!r})")
    if maxval != 255:
        raise DatasetError(f"{path}: expected max value 255, got {maxval}")
    body = data[offset:offset + w * h]
    if len(body) != w * h:
        raise DatasetError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def write_pgm(path, pixels) -> None:
    """Write ``(H, W)`` values, either uint8 or floats in [0, 1], as binary PGM."""
    a = np.asarray(pixels)
    if a.dtype != np.uint8:
        a = np.clip(np.rint(a * 255), 0, 255).astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(a.tobytes())


def load_image(path, size=IMAGE_SIZE) -> np.ndarray:
    """PGM file as a ``(1, 1, size, size)`` float32 tensor scaled by 1/255."""
    raw = read_pgm(path)
    if raw.shape != (size, size):
        raise DatasetError(f"{path}: expected {size}x{size} image, got {raw.shape[1]}x{raw.shape[0]}")
    return (raw.astype(np.float32) / 255.0).reshape(1, 1, size, size)


def read_manifest(path) -> dict:
    """``name,index`` lines to a dict; blank lines and ``#`` comments skipped."""
    mapping = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            name, index = (part.strip() for part in line.split(","))
            mapping[name] = int(index)
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: expected 'name,index'") from exc
    return mapping


def load_directory(root, manifest=None, size=IMAGE_SIZE) -> DatasetSplit:
    """Load ``root/<class>/*.pgm`` into the train part of a split.

    ``manifest`` is a ``name -> index`` dict or a path to a manifest file;
    without one, ``root/manifest.csv`` is used if present, else classes are
    numbered in sorted directory order.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"data directory not found: {root}")
    if manifest is None and (root / "manifest.csv").exists():
        manifest = root / "manifest.csv"
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if manifest is None:
        mapping = {d.name: i for i, d in enumerate(dirs)}
    elif isinstance(manifest, (str, os.PathLike)):
        mapping = read_manifest(manifest)
    else:
        mapping = dict(manifest)
    unknown = [d.name for d in dirs if d.name not in mapping]
    if unknown:
        raise DatasetError(f"unknown class directories: {', '.join(unknown)}")
    names = [""] * (max(mapping.values()) + 1 if mapping else 0)
    for name, idx in mapping.items():
        names[idx] = name
    images = []
    for path in sorted(p for d in dirs for p in d.iterdir() if p.is_file() and p.suffix.lower() == ".pgm"):
        images.append(LabeledImage(load_image(path, size), mapping[path.parent.name], path.relative_to(root).as_posix()))
    return DatasetSplit(images, [], names)


# -- synthetic data ----------------------------------------------------------------


def _shape_mask(label, u, v, rng):
    r = np.hypot(u, v)
    theta = np.arctan2(v, u)
    if label == 1:
        return (np.abs(u) < 0.75) & (np.abs(v) < 0.12)
    if label == 2:
        return r < 0.45
    if label == 3:
        return (r > 0.35) & (r < 0.55)
    if label == 4:
        return ((np.abs(u) < 0.6) & (np.abs(v) < 0.1)) | ((np.abs(v) < 0.6) & (np.abs(u) < 0.1))
    if label == 5:
        return ((u > -0.5) & (u < 0.5) & (v > -0.5) & (v < -0.3)) | ((u > -0.5) & (u < -0.3) & (v > -0.5) & (v < 0.5))
    if label == 6:
        return (np.hypot(u - 0.4, v) < 0.2) | (np.hypot(u + 0.4, v) < 0.2)
    if label == 7:
        return (r > 0.4) & (r < 0.6) & (v > 0)
    if label == 8:
        return (r < 0.6) & (np.abs(theta) < 0.45)
    if label == 9:
        return (v > -0.4) & (v < 0.8 * u + 0.5) & (v < -0.8 * u + 0.5)
    if label == 10:
        inner = (np.abs(u) < 0.32) & (np.abs(v) < 0.32)
        return (np.abs(u) < 0.5) & (np.abs(v) < 0.5) & ~inner
    raise ValueError(f"no shape for class {label}")


def _render(label, rng, size, sigma):
    axis = (np.arange(size) + 0.5) / size * 2 - 1
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    # seabed: dim, slowly varying
    fx, fy, phase = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
    img = 0.08 + 0.04 * np.sin(np.pi * (fx * xx + fy * yy) + phase)
    if label != 0:
        angle = rng.uniform(-MAX_ROTATION, MAX_ROTATION)
        scale = rng.uniform(*SCALE_RANGE)
        cx, cy = rng.uniform(-MAX_SHIFT, MAX_SHIFT, size=2)
        c, s = np.cos(angle), np.sin(angle)
        dx, dy = (xx - cx) / scale, (yy - cy) / scale
        u, v = c * dx + s * dy, -s * dx + c * dy
        mask = _shape_mask(label, u, v, rng)
        img = np.where(mask, rng.uniform(0.6, 0.9), img)
    noise = rng.uniform(-1.0, 1.0, size=img.shape)
    return np.clip(img * (1 + sigma * noise), 0.0, 1.0).astype(np.float32)


def synth_generate(n_per_class, seed=0, test_fraction=0.0, sigma=SPECKLE_SIGMA, size=IMAGE_SIZE) -> DatasetSplit:
    """``n_per_class`` images for each of the 11 synthetic classes.

    The last ``round(test_fraction * n_per_class)`` images of every class
    go to the test part.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    n_test = int(round(test_fraction * n_per_class))
    train, test = [], []
    for i in range(n_per_class):
        for label, name in enumerate(SYNTH_CLASSES):
            px = _render(label, rng, size, sigma).reshape(1, 1, size, size)
            item = LabeledImage(px, label, f"synth/{name}/{i:05d}")
            (test if i >= n_per_class - n_test else train).append(item)
    return DatasetSplit(train, test, list(SYNTH_CLASSES))


@dataclass
class PixelStats:
    mean: float
    std: float
    count: int


def normalize_stats(split: DatasetSplit, which="all") -> PixelStats:
    """Mean and standard deviation of all pixels (single channel)."""
    x, _ = split.arrays(which)
    if x.shape[0] == 0:
        raise DatasetError("cannot compute statistics of an empty split")
    return PixelStats(float(x.mean(dtype=np.float64)), float(x.std(dtype=np.float64)), int(x.shape[0]))
