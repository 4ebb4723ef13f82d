"""Semantic feature vectors: a built-in handcrafted descriptor and external files.

Features are float32 vectors with unit L2 norm. External features (for
example CNN embeddings) are read from small binary files::

    b"CAFT" | u32 version (1) | u32 dim | dim x f32      (all little-endian)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..colorspace import srgb_to_lab
from ..errors import CorruptFeatureFile, DimensionMismatch, MissingEntry
from ..imgio import RgbImage

FEATURE_MAGIC = b"CAFT"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sII")

BUILTIN_DIM = 512
_GRID = 8
_CHROMA_BINS = 16
_CHROMA_RANGE = 60.0
_LUMA_BINS = 64
# a/b grid means are divided by this so they sit on the same scale as L in [0, 1]
_CHROMA_SCALE = 100.0


def normalize_feature(v) -> np.ndarray:
    """Return ``v`` as a unit-norm float32 vector."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if not np.isfinite(v).all():
        raise ValueError("feature contains non-finite values")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero feature vector")
    return (v / norm).astype(np.float32)


def _block_means(plane: np.ndarray, blocks: np.ndarray, counts: np.ndarray) -> np.ndarray:
    sums = np.bincount(blocks, weights=plane.reshape(-1), minlength=_GRID * _GRID)
    means = np.full(_GRID * _GRID, plane.mean())
    filled = counts > 0
    means[filled] = sums[filled] / counts[filled]
    return means


def builtin_semantic_feature(img: RgbImage) -> np.ndarray:
    """Deterministic 512-d layout/color descriptor.

    Concatenates an 8x8 grid of mean luminance (64), 8x8 grids of mean a and b
    (128), a 16x16 joint (a, b) histogram over [-60, 60]^2 (256) and a 64-bin
    luminance histogram (64), then L2-normalizes. Out-of-range chroma falls
    into the edge bins.
    """
    lab = srgb_to_lab(img)
    h, w = lab.shape
    rows = (np.arange(h) * _GRID) // h
    cols = (np.arange(w) * _GRID) // w
    blocks = (rows[:, None] * _GRID + cols[None, :]).reshape(-1)
    counts = np.bincount(blocks, minlength=_GRID * _GRID).astype(np.float64)

    n = float(lab.L.size)
    span = 2 * _CHROMA_RANGE
    ia = np.clip(((lab.a + _CHROMA_RANGE) / span * _CHROMA_BINS).astype(np.intp), 0, _CHROMA_BINS - 1)
    ib = np.clip(((lab.b + _CHROMA_RANGE) / span * _CHROMA_BINS).astype(np.intp), 0, _CHROMA_BINS - 1)
    chroma_hist = np.bincount((ia * _CHROMA_BINS + ib).reshape(-1), minlength=_CHROMA_BINS**2) / n
    il = np.clip((lab.L * _LUMA_BINS).astype(np.intp), 0, _LUMA_BINS - 1)
    luma_hist = np.bincount(il.reshape(-1), minlength=_LUMA_BINS) / n

    parts = [
        _block_means(lab.L, blocks, counts),
        _block_means(lab.a, blocks, counts) / _CHROMA_SCALE,
        _block_means(lab.b, blocks, counts) / _CHROMA_SCALE,
        chroma_hist,
        luma_hist,
    ]
    return normalize_feature(np.concatenate(parts))


def write_feature_file(path, v) -> None:
    v = np.asarray(v, dtype="<f4").reshape(-1)
    Path(path).write_bytes(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, v.size) + v.tobytes())


def read_feature_file(path) -> np.ndarray:
    """Parse a feature file and return the unit-normalized vector."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise MissingEntry(f"feature file not found: {path}") from exc
    if len(data) < _HEADER.size:
        raise CorruptFeatureFile(f"{path}: truncated header")
    magic, version, dim = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise CorruptFeatureFile(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise CorruptFeatureFile(f"{path}: unsupported feature version {version}")
    if dim == 0 or len(data) != _HEADER.size + 4 * dim:
        raise CorruptFeatureFile(f"{path}: expected {dim} values, file has {len(data)} bytes")
    v = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    try:
        return normalize_feature(v)
    except ValueError as exc:
        raise CorruptFeatureFile(f"{path}: {exc}") from exc


def load_external_features(directory, manifest) -> dict[str, np.ndarray]:
    """Load every feature listed in ``manifest``.

    The manifest is a JSON object mapping image ids to feature file paths
    relative to ``directory``. All features must share one dimension.
    """
    directory = Path(directory)
    entries = json.loads(Path(manifest).read_text())
    if not isinstance(entries, dict):
        raise CorruptFeatureFile(f"{manifest}: manifest must map image ids to files")
    out: dict[str, np.ndarray] = {}
    dim = None
    for image_id in sorted(entries):
        v = read_feature_file(directory / entries[image_id])
        if dim is None:
            dim = v.size
        elif v.size != dim:
            raise DimensionMismatch(f"{image_id}: dimension {v.size}, expected {dim}")
        out[image_id] = v
    return out
