"""Synthetic shape datasets, IDX ingestion, dequantization and the ``NFDS`` cache format."""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, ParseError
from .numerics.prng import Prng

CLASS_NAMES = ("square", "cross", "circle", "stripe")
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
NFDS_MAGIC = b"NFDS"
NFDS_VERSION = 1


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    n_classes: int
    tag: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ContractError("images must be (N, C, H, W)")
        if len(self.images) != len(self.labels):
            raise ContractError("image and label counts differ")
        if np.any(~((self.images >= 0) & (self.images <= 1))):
            raise ContractError("pixels must lie in [0, 1]")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ContractError("labels out of range for class count")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return self.images.shape[1:]


def _template(cls, size):
    i, j = np.mgrid[0:size, 0:size]
    q = size // 4
    mid = size / 2
    if cls == 0:
        img = (i >= q) & (i < size - q) & (j >= q) & (j < size - q)
    elif cls == 1:
        band = lambda a: (a >= mid - 1) & (a < mid + 1)
        inner = lambda a: (a >= 1) & (a < size - 1)
        img = (band(i) & inner(j)) | (band(j) & inner(i))
    elif cls == 2:
        r = np.hypot(i - (size - 1) / 2, j - (size - 1) / 2)
        radius = (size - 2) / 2 - 0.5
        img = np.abs(r - radius) < 0.75
    else:
        img = (np.abs(i - j) <= 1) & (i >= 1) & (i < size - 1) & (j >= 1) & (j < size - 1)
    return img.astype(np.float64)


def _shift(img, di, dj):
    out = np.zeros_like(img)
    s = img.shape[0]
    src = img[max(0, -di):s - max(0, di), max(0, -dj):s - max(0, dj)]
    out[max(0, di):max(0, di) + src.shape[0], max(0, dj):max(0, dj) + src.shape[1]] = src
    return out


def quantize(images):
    """Round pixels onto the 8-bit grid ``k / 255``."""
    return (np.round(np.asarray(images, dtype=np.float64) * 255) / 255).astype(np.float32)


def gen_shapes(n, classes=3, size=8, noise_std=0.1, seed=0, jitter=True, intensity=(0.6, 1.0),
               background=0.0, tag="train"):
    """Balanced procedural grayscale shapes, quantized to the 8-bit grid.

    Class ``c`` is one of square / cross / hollow circle / diagonal stripe.  Each
    image gets an integer offset in [-1, 1] per axis (when ``jitter``), a stroke
    intensity drawn uniformly from ``intensity`` on top of a constant
    ``background`` level, Gaussian pixel noise, and clipping to [0, 1].
    """
    if classes not in (2, 3, 4):
        raise ContractError(f"classes must be 2, 3 or 4, got {classes}")
    lo, hi = intensity
    if not 0 <= lo <= hi <= 1:
        raise ContractError("intensity range must satisfy 0 <= low <= high <= 1")
    if size < 8 or size % 2:
        raise ContractError("size must be an even number >= 8")
    prng = Prng(seed)
    labels = np.arange(n) % classes
    labels = labels[prng.permutation(n)]
    templates = [_template(c, size) for c in range(classes)]
    offsets = prng.integers(-1, 2, (n, 2)) if jitter else np.zeros((n, 2), dtype=np.int64)
    level = prng.uniform(lo, hi, n, dtype=np.float64)
    noise = prng.standard_normal((n, size, size), dtype=np.float64) * noise_std
    images = np.empty((n, 1, size, size), dtype=np.float64)
    for k in range(n):
        base = _shift(templates[labels[k]], *offsets[k])
        images[k, 0] = background + base * level[k] + noise[k]
    images = quantize(np.clip(images, 0, 1))
    return Dataset(images, labels, classes, tag)


def dequantize(images, prng):
    """Uniform dequantization: ``(255 x + u) / 256`` with ``u ~ U[0, 1)``."""
    images = np.asarray(images, dtype=np.float32)
    u = prng.uniform(0.0, 1.0, images.shape, dtype=np.float64)
    return ((np.round(images.astype(np.float64) * 255) + u) / 256).astype(np.float32)


def split(dataset, fraction=0.8, seed=0):
    """Label-stratified deterministic train/test split.

    The train set holds ``round(fraction * n)`` images; per-class shares are
    allotted by largest remainder, so each class is within one image of its
    exact share.
    """
    if not 0 < fraction < 1:
        raise ContractError("fraction must lie in (0, 1)")
    prng = Prng(seed)
    counts = np.bincount(dataset.labels, minlength=dataset.n_classes)
    exact = fraction * counts
    cuts = np.floor(exact).astype(np.int64)
    short = int(round(fraction * counts.sum())) - int(cuts.sum())
    # stable sort: ties go to the lower class index
    cuts[np.argsort(-(exact - cuts), kind="stable")[:short]] += 1
    train_idx, test_idx = [], []
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[prng.permutation(len(idx))]
        cut = int(cuts[c])
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    mk = lambda idx, tag: Dataset(dataset.images[idx], dataset.labels[idx], dataset.n_classes, tag)
    return mk(train_idx, "train"), mk(test_idx, "test")


def _read_idx(path, magic, what):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise ParseError(f"{what} file truncated in magic", offset=len(raw))
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise ParseError(f"bad {what} magic 0x{got:08x}, expected 0x{magic:08x}", offset=0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError(f"{what} file truncated in dimension sizes", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = header + int(np.prod(dims))
    if len(raw) < need:
        raise ParseError(f"{what} payload truncated", offset=len(raw))
    data = np.frombuffer(raw, dtype=np.uint8, count=need - header, offset=header)
    return dims, data


def load_idx(images_path, labels_path, n_classes=None, tag="train"):
    """Read an IDX image/label file pair (big-endian headers, unsigned-byte payload)."""
    dims, pix = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    (n_lab,), labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    n, rows, cols = dims
    if n != n_lab:
        raise ParseError(f"image count {n} != label count {n_lab}", offset=4)
    images = pix.reshape(n, 1, rows, cols).astype(np.float32) / np.float32(255)
    labels = labels.astype(np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if n else 1
    return Dataset(images, labels, n_classes, tag)


def save_dataset(dataset, path):
    """Write the ``NFDS`` cache: LE header, float32 pixels, uint8 labels (atomic rename)."""
    n, c, h, w = dataset.images.shape
    payload = b"".join([
        NFDS_MAGIC,
        struct.pack("<6I", NFDS_VERSION, n, c, h, w, dataset.n_classes),
        dataset.images.astype("<f4").tobytes(),
        dataset.labels.astype(np.uint8).tobytes(),
    ])
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def load_dataset(path, tag=None):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != NFDS_MAGIC:
        raise ParseError("bad dataset magic", offset=0)
    if len(raw) < 28:
        raise ParseError("dataset header truncated", offset=len(raw))
    version, n, c, h, w, k = struct.unpack("<6I", raw[4:28])
    if version != NFDS_VERSION:
        raise ParseError(f"unsupported dataset version {version}", offset=4)
    npix = n * c * h * w
    need = 28 + 4 * npix + n
    if len(raw) < need:
        raise ParseError("dataset payload truncated", offset=len(raw))
    images = np.frombuffer(raw, dtype="<f4", count=npix, offset=28).reshape(n, c, h, w)
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=28 + 4 * npix)
    if tag is None:
        tag = os.path.splitext(os.path.basename(path))[0]
    return Dataset(images.astype(np.float32), labels, k, tag)
