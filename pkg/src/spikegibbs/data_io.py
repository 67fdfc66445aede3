"""IDX dataset ingestion, binarization, downsampling, and pixel noise."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ParameterError, ParseError
from .rng import make_stream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"
SALT = "salt"
SALT_PEPPER = "salt_pepper"
# Noise draws use chain index 2**32 - 1, which no Gibbs chain uses.
NOISE_STREAM_BASE = 0xFFFFFFFF << 32


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise ParseError(f"corrupt gzip stream ({exc})", 0) from None
    return data


def _parse_idx(data: bytes, magic: int, ndim: int, what: str) -> np.ndarray:
    data = _maybe_gunzip(bytes(data))
    if len(data) < 4:
        raise ParseError(f"truncated {what} header", len(data))
    (found,) = struct.unpack_from(">I", data, 0)
    if found != magic:
        raise ParseError("bad magic", 0)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise ParseError(f"truncated {what} header", len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    expected = 1
    for d in dims:
        expected *= d
        if expected > len(data):
            break
    if expected > (1 << 40):
        raise ParseError(f"{what} dimensions {dims} overflow", 4)
    payload = len(data) - header
    if payload < expected:
        raise ParseError(
            f"truncated {what} payload: {payload} of {expected} bytes", len(data))
    if payload > expected:
        raise ParseError(f"{payload - expected} trailing bytes after {what} payload",
                         header + expected)
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims).copy()


def parse_idx_images(data: bytes) -> np.ndarray:
    """Decode an IDX3 image file into a uint8 array (n, rows, cols)."""
    return _parse_idx(data, IMAGES_MAGIC, 3, "image")


def parse_idx_labels(data: bytes) -> np.ndarray:
    return _parse_idx(data, LABELS_MAGIC, 1, "label")


def serialize_idx_images(images: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ParameterError("expected an (n, rows, cols) image array")
    return struct.pack(">4I", IMAGES_MAGIC, *images.shape) + images.tobytes()


def serialize_idx_labels(labels) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() > 255)):
        raise ParameterError("labels must be a 1-d array of bytes")
    return struct.pack(">2I", LABELS_MAGIC, labels.size) + labels.astype(np.uint8).tobytes()


@dataclass(frozen=True)
class NoiseProvenance:
    kind: str
    noise_factor: float
    seed: int


@dataclass
class LabeledDataset:
    images: np.ndarray  # (n, height * width) of 0/1, row-major pixels
    labels: np.ndarray
    width: int
    height: int
    n_classes: int = 10
    noise_provenance: NoiseProvenance | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.images.ndim != 2 or self.images.shape[1] != self.width * self.height:
            raise ParameterError(
                f"images must be (n, {self.width * self.height}), got {self.images.shape}")
        if self.images.shape[0] != self.labels.size:
            raise ParameterError(
                f"{self.images.shape[0]} images but {self.labels.size} labels")
        if np.any(self.images > 1):
            raise ParameterError("dataset images must be binary")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ParameterError(f"labels must lie in [0, {self.n_classes - 1}]")

    def __len__(self):
        return self.labels.size

    def subset(self, index) -> "LabeledDataset":
        return replace(self, images=self.images[index], labels=self.labels[index])


def binarize(raw: np.ndarray, threshold: int = 128) -> np.ndarray:
    """1 where ``raw >= threshold``; keeps the input shape."""
    return (np.asarray(raw) >= threshold).astype(np.uint8)


def downsample(images: np.ndarray, factor: int) -> np.ndarray:
    """Block majority vote over ``factor x factor`` blocks, ties resolved to 1.

    ``images`` has shape (n, rows, cols).
    """
    images = np.asarray(images)
    if factor < 1:
        raise ParameterError(f"downsample factor must be positive, got {factor}")
    n, rows, cols = images.shape
    if rows % factor or cols % factor:
        raise ParameterError(f"{rows}x{cols} images are not divisible by factor {factor}")
    blocks = images.reshape(n, rows // factor, factor, cols // factor, factor)
    ones = blocks.astype(np.int64).sum(axis=(2, 4))
    return (2 * ones >= factor * factor).astype(np.uint8)


def load_dataset(images_path, labels_path, threshold: int = 128,
                 downsample_factor: int = 1) -> LabeledDataset:
    images = parse_idx_images(_read(images_path))
    labels = parse_idx_labels(_read(labels_path))
    bits = downsample(binarize(images, threshold), downsample_factor)
    n, rows, cols = bits.shape
    n_classes = max(10, int(labels.max()) + 1) if labels.size else 10
    return LabeledDataset(bits.reshape(n, rows * cols), labels, cols, rows, n_classes)


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ParameterError(f"cannot read {path}: {exc.strerror}") from None


def _corrupt(ds: LabeledDataset, noise_factor: float, seed: int, kind: str) -> LabeledDataset:
    if not 0.0 <= noise_factor <= 1.0:
        raise ParameterError(f"noise factor must lie in [0, 1], got {noise_factor}")
    n_pixels = ds.width * ds.height
    k = int(np.floor(noise_factor * n_pixels))
    images = ds.images.copy()
    picks = make_stream(seed, NOISE_STREAM_BASE).generator()
    colours = make_stream(seed, NOISE_STREAM_BASE | 1).generator()
    for row in images:
        chosen = picks.choice(n_pixels, size=k, replace=False)
        if kind == SALT:
            row[chosen] = 1
        else:
            row[chosen] = colours.integers(0, 2, size=k)
    return replace(ds, images=images,
                   noise_provenance=NoiseProvenance(kind, float(noise_factor), int(seed)))


def add_salt_noise(ds: LabeledDataset, noise_factor: float, seed: int) -> LabeledDataset:
    """Set ``floor(noise_factor * pixels)`` distinct random pixels per image to 1."""
    return _corrupt(ds, noise_factor, seed, SALT)


def add_salt_pepper_noise(ds: LabeledDataset, noise_factor: float, seed: int) -> LabeledDataset:
    """Like salt noise, but each chosen pixel becomes 1 or 0 with equal odds."""
    return _corrupt(ds, noise_factor, seed, SALT_PEPPER)


def add_noise(ds: LabeledDataset, kind: str, noise_factor: float, seed: int) -> LabeledDataset:
    if kind not in (SALT, SALT_PEPPER):
        raise ParameterError(f"unknown noise kind {kind!r}")
    return _corrupt(ds, noise_factor, seed, kind)
