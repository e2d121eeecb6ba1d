"""Binary embedding files, run manifests, and deterministic report serialization.

Embedding file layout (all integers little-endian):

    bytes 0-3    magic ``HATV``
    bytes 4-7    format version, u32 (currently 1)
    bytes 8-15   n items, u64
    bytes 16-23  t frames per item, u64 (1 = global-only)
    bytes 24-31  d dimensions, u64
    bytes 32-35  dtype code, u32 (0 = float32)
    bytes 36-    n*t*d little-endian float32 values, row-major (item, frame, dim)

JSON reports are serialized with sorted keys, two-space indent, and floats
rendered by Python's shortest round-trip ``repr``; identical inputs therefore
produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import EmbeddingSet
from .errors import (
    BadMagic,
    MissingGroundTruth,
    ShapeOverflow,
    TruncatedPayload,
    VersionUnsupported,
)

MAGIC = b"HATV"
FORMAT_VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sIQQQI")
MAX_ELEMENTS = 1 << 40  # sanity bound on n*t*d


def write_embeddings(e: EmbeddingSet, path: Union[str, Path]) -> None:
    """Write an embedding set; frame-level sets store t = n_frames, global-only t = 1."""
    arr = e.frames if e.frames is not None else e.data[:, None, :]
    n, t, d = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, n, t, d, DTYPE_F32)
    Path(path).write_bytes(header + payload.tobytes())


def read_embeddings(path: Union[str, Path]) -> EmbeddingSet:
    """Read an embedding file; t = 1 yields a global-only set, t > 1 keeps frames
    with the global vectors re-pooled as frame means."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"file shorter than the {_HEADER.size}-byte header")
    magic, version, n, t, d, dtype_code = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"unsupported format version {version}")
    if dtype_code != DTYPE_F32:
        raise VersionUnsupported(f"unsupported dtype code {dtype_code}")
    n_elements = n * t * d
    if n_elements == 0 or n_elements > MAX_ELEMENTS:
        raise ShapeOverflow(f"header declares shape ({n}, {t}, {d})")
    expected = n_elements * 4
    actual = len(blob) - _HEADER.size
    if actual != expected:
        raise TruncatedPayload(f"payload holds {actual} bytes, header implies {expected}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    arr = values.reshape(n, t, d)
    if t == 1:
        return EmbeddingSet(data=arr[:, 0, :])
    return EmbeddingSet(data=arr.mean(axis=1), frames=arr)


def dump_json(obj: dict) -> str:
    """Canonical JSON text: sorted keys, 2-space indent, trailing newline, no NaN."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_json(obj))


def write_rankings_csv(rankings: np.ndarray, path: Union[str, Path], top: int = 10) -> None:
    """One row per query: query index, then its top ``top`` gallery indices."""
    top = min(top, rankings.shape[1])
    lines = [
        ",".join([str(i)] + [str(int(g)) for g in rankings[i, :top]])
        for i in range(rankings.shape[0])
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_rankings_csv(path: Union[str, Path]) -> np.ndarray:
    """Inverse of :func:`write_rankings_csv`; rows must share one list length."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        cells = [int(c) for c in line.split(",")]
        rows.append(cells[1:])
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("rankings CSV empty or ragged")
    return np.asarray(rows, dtype=np.int64)


def read_ground_truth(spec: str, n_queries: int, n_gallery: int) -> np.ndarray:
    """Resolve a ground-truth spec: ``identity`` or a path to one index per line."""
    if spec == "identity":
        if n_queries > n_gallery:
            raise MissingGroundTruth(
                f"identity pairing needs n_queries <= n_gallery ({n_queries} > {n_gallery})"
            )
        return np.arange(n_queries)
    path = Path(spec)
    if not path.exists():
        raise MissingGroundTruth(f"ground-truth file not found: {spec}")
    values = [int(v) for v in path.read_text().split()]
    gt = np.asarray(values, dtype=np.int64)
    if gt.shape != (n_queries,):
        raise MissingGroundTruth(f"expected {n_queries} ground-truth indices, got {gt.size}")
    return gt


@dataclass
class RunManifest:
    """Paths plus configuration for one reproducible stream run."""

    query_path: str
    gallery_path: str
    ground_truth: str = "identity"  # or a path to explicit indices
    mode: str = "v2t"
    seed: int = 42
    config: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query_path": self.query_path,
            "gallery_path": self.gallery_path,
            "ground_truth": self.ground_truth,
            "mode": self.mode,
            "seed": int(self.seed),
            "config": self.config,
            "generator": self.generator,
        }


def write_manifest(manifest: RunManifest, path: Union[str, Path]) -> None:
    write_json(manifest.to_dict(), path)


def load_manifest(path: Union[str, Path], check_files: bool = True) -> RunManifest:
    raw = json.loads(Path(path).read_text())
    manifest = RunManifest(
        query_path=raw["query_path"],
        gallery_path=raw["gallery_path"],
        ground_truth=raw.get("ground_truth", "identity"),
        mode=raw.get("mode", "v2t"),
        seed=int(raw.get("seed", 42)),
        config=raw.get("config", {}),
        generator=raw.get("generator", {}),
    )
    if check_files:
        base = Path(path).parent
        for label, p in (("query", manifest.query_path), ("gallery", manifest.gallery_path)):
            resolved = Path(p) if Path(p).is_absolute() else base / p
            if not resolved.exists():
                raise FileNotFoundError(f"manifest {label} file missing: {resolved}")
    return manifest


def resolve_manifest_path(manifest_path: Union[str, Path], file_path: str) -> Path:
    p = Path(file_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
