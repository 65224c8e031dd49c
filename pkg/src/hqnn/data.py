"""MNIST ingestion and preprocessing.

Pipeline per image: divide by 255, bilinear resize 28x28 -> 8x8 with
half-pixel centres (no antialiasing), split into TL/TR/BL/BR 4x4 chunks.
Digits 0-9 become classes 1-10.
"""
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
SIDE = 28
SMALL = 8
PIPELINE_VERSION = "bilinear-halfpixel-v1"

FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IdxFormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class SplitError(ValueError):
    pass


def _header(data, magic, n_dims):
    need = 4 * (1 + n_dims)
    if len(data) < need:
        raise IdxFormatError(f"truncated header: {len(data)} bytes", len(data))
    got = struct.unpack_from(">I", data, 0)[0]
    if got != magic:
        raise IdxFormatError(f"bad magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    return struct.unpack_from(f">{n_dims}I", data, 4), need


def parse_idx_images(data):
    """Decode an IDX3 image file into a ``(count, 28, 28)`` uint8 array."""
    (count, rows, cols), offset = _header(data, IMAGE_MAGIC, 3)
    if rows != SIDE or cols != SIDE:
        raise IdxFormatError(f"image dims {rows}x{cols}, expected {SIDE}x{SIDE}", 8)
    size = count * rows * cols
    if len(data) - offset < size:
        raise IdxFormatError(
            f"truncated payload: need {size} bytes, have {len(data) - offset}", len(data))
    pixels = np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)
    return pixels.reshape(count, rows, cols).copy()


def parse_idx_labels(data):
    """Decode an IDX1 label file into a uint8 array of digits."""
    (count,), offset = _header(data, LABEL_MAGIC, 1)
    if len(data) - offset < count:
        raise IdxFormatError(
            f"truncated payload: need {count} bytes, have {len(data) - offset}", len(data))
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset).copy()
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise IdxFormatError(f"label {labels[bad[0]]} out of range", offset + int(bad[0]))
    return labels


def encode_idx_images(images):
    images = np.asarray(images, dtype=np.uint8)
    return struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.tobytes()


def encode_idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">2I", LABEL_MAGIC, labels.shape[0]) + labels.tobytes()


def _read(path):
    path = Path(path)
    # accept both "train-images-idx3-ubyte" and "train-images.idx3-ubyte", optionally gzipped
    for name in (path.name, path.name.replace("-idx", ".idx")):
        for cand in (path.with_name(name), path.with_name(name + ".gz")):
            if cand.exists():
                path = cand
                break
        else:
            continue
        break
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def load_mnist(data_dir):
    """Read the four MNIST files (plain or ``.gz``) from ``data_dir``.

    Returns ``(train_images, train_digits, test_images, test_digits)``.
    """
    d = Path(data_dir)
    out = []
    for key in ("train_images", "train_labels", "test_images", "test_labels"):
        raw = _read(d / FILES[key])
        out.append(parse_idx_images(raw) if key.endswith("images") else parse_idx_labels(raw))
    return tuple(out)


def _bilinear_matrix(n_in, n_out):
    """Row-stochastic ``(n_out, n_in)`` matrix for 1-D half-pixel bilinear."""
    scale = n_in / n_out
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        f = np.floor(src)
        lerp = src - f
        lo = int(min(max(f, 0), n_in - 1))
        hi = int(min(max(f + 1, 0), n_in - 1))
        m[i, lo] += 1 - lerp
        m[i, hi] += lerp
    return m


_RESIZE = _bilinear_matrix(SIDE, SMALL)


def resize_8x8(img):
    """Normalize to [0, 1] and downscale ``(..., 28, 28)`` to ``(..., 8, 8)``."""
    x = np.asarray(img, dtype=np.float64) / 255.0
    if x.shape[-2:] != (SIDE, SIDE):
        raise ValueError(f"expected 28x28 images, got {x.shape[-2:]}")
    out = np.einsum("ia,...ab,jb->...ij", _RESIZE, x, _RESIZE)
    return np.clip(out, 0.0, 1.0)


def split_quadrants(img8):
    """``(..., 8, 8) -> (..., 4, 4, 4)`` in TL, TR, BL, BR order."""
    img8 = np.asarray(img8)
    if img8.shape[-2:] != (SMALL, SMALL):
        raise ValueError(f"expected 8x8 images, got {img8.shape[-2:]}")
    h = SMALL // 2
    return np.stack([img8[..., :h, :h], img8[..., :h, h:],
                     img8[..., h:, :h], img8[..., h:, h:]], axis=-3)


class ExampleRecord(NamedTuple):
    chunks: np.ndarray
    label: int

    @property
    def digit(self):
        return self.label - 1


@dataclass
class RecordSet:
    """Column store of preprocessed examples.

    ``chunks`` is ``(n, 4, 4, 4)`` in [0, 1]; ``labels`` holds classes 1..10.
    """
    chunks: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return ExampleRecord(self.chunks[idx], int(self.labels[idx]))
        return RecordSet(self.chunks[idx], self.labels[idx])

    @property
    def digits(self):
        return self.labels - 1


def preprocess(images, digits):
    images = np.asarray(images)
    digits = np.asarray(digits)
    if images.shape[0] != digits.shape[0]:
        raise ValueError("image and label counts differ")
    return RecordSet(split_quadrants(resize_8x8(images)), digits.astype(np.int64) + 1)


@dataclass(frozen=True)
class SplitSpec:
    n_train: int = 50000
    n_val: int = 10000
    n_test: int = 10000


def make_splits(tune, test, seed, spec=SplitSpec()):
    """Seeded shuffle of the tuning set into train/validation; test untouched."""
    if len(tune) != spec.n_train + spec.n_val:
        raise SplitError(f"expected {spec.n_train + spec.n_val} tuning records, got {len(tune)}")
    if len(test) != spec.n_test:
        raise SplitError(f"expected {spec.n_test} test records, got {len(test)}")
    perm = np.random.default_rng(seed).permutation(len(tune))
    return tune[perm[:spec.n_train]], tune[perm[spec.n_train:]], test


def stratified_subsample(records, fraction, rng):
    """Keep ``round(fraction * n)`` records with per-class proportional quotas.

    Quotas use largest-remainder rounding (ties to the lower class); kept
    records stay in their original order.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1:
        return records
    classes, counts = np.unique(records.labels, return_counts=True)
    target = int(round(fraction * len(records)))
    exact = fraction * counts
    quota = np.floor(exact).astype(int)
    order = sorted(range(len(classes)), key=lambda k: (-(exact[k] - quota[k]), k))
    for k in order[:target - quota.sum()]:
        quota[k] += 1
    keep = []
    for c, q in zip(classes, quota):
        idx = np.flatnonzero(records.labels == c)
        keep.append(rng.permutation(idx)[:q])
    return records[np.sort(np.concatenate(keep))]


def save_cache(path, splits, seed):
    """Write (train, val, test) record sets with the seed and pipeline tag."""
    arrays = {"pipeline_version": np.array(PIPELINE_VERSION), "seed": np.array(seed)}
    for name, rs in zip(("train", "val", "test"), splits):
        arrays[f"{name}_chunks"] = rs.chunks
        arrays[f"{name}_labels"] = rs.labels
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_cache(path, seed=None):
    with np.load(path) as z:
        if str(z["pipeline_version"]) != PIPELINE_VERSION:
            raise ValueError(f"cache {path} built by pipeline {z['pipeline_version']}")
        if seed is not None and int(z["seed"]) != seed:
            raise ValueError(f"cache {path} holds seed {int(z['seed'])}, wanted {seed}")
        return tuple(RecordSet(z[f"{n}_chunks"], z[f"{n}_labels"])
                     for n in ("train", "val", "test"))


_SHADES = " .:-=+*#%@"


def render_example(record):
    """Text rendering of one record: the 8x8 image and its angle grid."""
    from .nn import assemble_image

    img = assemble_image(record.chunks)
    lines = [f"class {record.label} (digit {record.digit})"]
    for row in img:
        lines.append("".join(_SHADES[min(int(v * len(_SHADES)), len(_SHADES) - 1)] * 2
                             for v in row))
    lines.append("Rx angles / pi, chunk order TL TR BL BR:")
    for k, chunk in enumerate(record.chunks):
        for r, row in enumerate(chunk):
            prefix = f"  [{k}] " if r == 0 else "      "
            lines.append(prefix + " ".join(f"{v:.2f}" for v in row))
    return "\n".join(lines)
