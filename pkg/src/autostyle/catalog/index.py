"""On-disk style index.

Directory layout::

    manifest.json   version, k, dim, fingerprint, sha256 of every payload file
    centers.bin     b"CACE" | u32 version | u32 k | u32 dim | k*dim f32
    styles.json     style ids, source paths and descriptors
    rankings.bin    b"CARK" | u32 version | u32 k | u32 n | k*n (u32 id, f32 score)

All binary fields are little-endian. Files carry no timestamps, so equal
inputs give byte-identical indexes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ChecksumMismatch, CorruptIndex, IndexIOError, VersionMismatch
from ..stylestats import StyleDescriptor
from .kmeans import ClusterModel
from .ranking import RankingTable, StyleEntry

INDEX_VERSION = 1
CENTERS_MAGIC = b"CACE"
RANKINGS_MAGIC = b"CARK"
_HEADER = struct.Struct("<4sIII")
_PAIR = np.dtype([("id", "<u4"), ("score", "<f4")])

MANIFEST = "manifest.json"
CENTERS = "centers.bin"
STYLES = "styles.json"
RANKINGS = "rankings.bin"


@dataclass(frozen=True, eq=False)
class StyleIndex:
    model: ClusterModel
    rankings: RankingTable
    styles: list[StyleEntry]
    fingerprint: str
    # how semantic features were produced ("builtin" or "external") plus build settings
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rankings.k != self.model.k:
            raise ValueError("rankings and cluster model disagree on k")
        known = {s.style_id for s in self.styles}
        if len(known) != len(self.styles):
            raise ValueError("duplicate style ids")
        if not set(np.unique(self.rankings.style_ids).tolist()) <= known:
            raise ValueError("rankings reference unknown style ids")

    def style(self, style_id: int) -> StyleEntry:
        for s in self.styles:
            if s.style_id == style_id:
                return s
        raise KeyError(style_id)

    def descriptors(self) -> dict[int, StyleDescriptor]:
        return {s.style_id: s.descriptor for s in self.styles}


def fingerprint(params: dict) -> str:
    """Stable hash of a JSON-able parameter dictionary."""
    blob = json.dumps(params, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()


def _centers_bytes(model: ClusterModel) -> bytes:
    head = _HEADER.pack(CENTERS_MAGIC, INDEX_VERSION, model.k, model.dim)
    return head + model.centers.astype("<f4").tobytes()


def _rankings_bytes(table: RankingTable) -> bytes:
    pairs = np.empty(table.style_ids.shape, dtype=_PAIR)
    pairs["id"] = table.style_ids
    pairs["score"] = table.scores
    return _HEADER.pack(RANKINGS_MAGIC, INDEX_VERSION, table.k, table.n_styles) + pairs.tobytes()


def _styles_bytes(styles: list[StyleEntry]) -> bytes:
    return _dump_json(
        [
            {"id": s.style_id, "source_path": s.source_path, "descriptor": s.descriptor.to_dict()}
            for s in styles
        ]
    )


def save_index(index: StyleIndex, path) -> None:
    path = Path(path)
    payload = {
        CENTERS: _centers_bytes(index.model),
        STYLES: _styles_bytes(index.styles),
        RANKINGS: _rankings_bytes(index.rankings),
    }
    manifest = {
        "version": INDEX_VERSION,
        "k": index.model.k,
        "dim": index.model.dim,
        "n_styles": len(index.styles),
        "fingerprint": index.fingerprint,
        "meta": index.meta,
        "checksums": {name: hashlib.sha256(data).hexdigest() for name, data in payload.items()},
    }
    try:
        path.mkdir(parents=True, exist_ok=True)
        for name, data in payload.items():
            (path / name).write_bytes(data)
        (path / MANIFEST).write_bytes(_dump_json(manifest))
    except OSError as exc:
        raise IndexIOError(f"cannot write index to {path}: {exc}") from exc


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise IndexIOError(f"cannot read {path}: {exc}") from exc


def _parse_header(data: bytes, magic: bytes, name: str) -> tuple[int, int]:
    if len(data) < _HEADER.size:
        raise CorruptIndex(f"{name}: truncated header")
    got, version, a, b = _HEADER.unpack_from(data)
    if got != magic:
        raise CorruptIndex(f"{name}: bad magic {got!r}")
    if version != INDEX_VERSION:
        raise VersionMismatch(f"{name}: version {version}, expected {INDEX_VERSION}")
    return a, b


def load_index(path, supported_versions=(INDEX_VERSION,)) -> StyleIndex:
    """Read an index directory, verifying version and checksums."""
    path = Path(path)
    try:
        manifest = json.loads(_read(path / MANIFEST))
    except json.JSONDecodeError as exc:
        raise CorruptIndex(f"{path / MANIFEST}: {exc}") from exc
    version = manifest.get("version")
    if version not in supported_versions:
        raise VersionMismatch(f"index version {version!r} not in supported {list(supported_versions)}")

    blobs = {}
    for name in (CENTERS, STYLES, RANKINGS):
        data = _read(path / name)
        expected = manifest.get("checksums", {}).get(name)
        if expected != hashlib.sha256(data).hexdigest():
            raise ChecksumMismatch(f"{name}: checksum does not match manifest")
        blobs[name] = data

    k, dim = _parse_header(blobs[CENTERS], CENTERS_MAGIC, CENTERS)
    if (k, dim) != (manifest.get("k"), manifest.get("dim")):
        raise CorruptIndex("centers shape disagrees with manifest")
    if len(blobs[CENTERS]) != _HEADER.size + 4 * k * dim:
        raise CorruptIndex(f"{CENTERS}: wrong payload size")
    centers = np.frombuffer(blobs[CENTERS], dtype="<f4", offset=_HEADER.size).reshape(k, dim)

    rk, n = _parse_header(blobs[RANKINGS], RANKINGS_MAGIC, RANKINGS)
    if rk != k or len(blobs[RANKINGS]) != _HEADER.size + _PAIR.itemsize * k * n:
        raise CorruptIndex(f"{RANKINGS}: shape disagrees with manifest")
    pairs = np.frombuffer(blobs[RANKINGS], dtype=_PAIR, offset=_HEADER.size).reshape(k, n)

    try:
        styles = [
            StyleEntry(int(s["id"]), StyleDescriptor.from_dict(s["descriptor"]), s["source_path"])
            for s in json.loads(blobs[STYLES])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptIndex(f"{STYLES}: {exc}") from exc
    if len(styles) != n:
        raise CorruptIndex(f"{STYLES}: {len(styles)} styles, rankings list {n}")

    try:
        return StyleIndex(
            ClusterModel(centers),
            RankingTable(pairs["id"], pairs["score"]),
            styles,
            manifest.get("fingerprint", ""),
            manifest.get("meta", {}),
        )
    except ValueError as exc:
        raise CorruptIndex(str(exc)) from exc
