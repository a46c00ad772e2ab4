"""Grid cache: self-describing binary files for field and transfer grids.

Layout (little-endian):

  header   8s magic | u16 version | u8 kind | pad | u32 dim0 | u32 dim1 | f8 frequency
  meta     u32 length | UTF-8 JSON
  data     kind 1 (field):    f8 rho[dim1] | f8 z[dim0] | c16 p[dim0 * dim1]
           kind 2 (transfer): f8 fc[dim1]  | f8 xz[dim0 * 2] | c16 H[dim0 * dim1]
  trailer  SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mcpl_zones.core.services.nonlinear import AudioTransferGrid
from mcpl_zones.core.services.ultrasound import CylGrid, UltraFieldGrid

logger = logging.getLogger(__name__)

MAGIC = b"MCPLGRID"
FORMAT_VERSION = 1
SUFFIX = ".mcpl"
TEMP_PREFIX = ".tmp-"

_HEADER = struct.Struct("<8sHBxIId")
_META_LEN = struct.Struct("<I")
_DIGEST_SIZE = 32

KIND_FIELD = 1
KIND_TRANSFER = 2


class CacheError(RuntimeError):
    pass


class CacheCorruptionError(CacheError):
    pass


class CacheVersionError(CacheError):
    pass


# ── Codec ────────────────────────────────────────────────────────────────────


def _f8(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _c16(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<c16").tobytes()


def encode_grid(grid: UltraFieldGrid | AudioTransferGrid) -> bytes:
    if isinstance(grid, UltraFieldGrid):
        dims = grid.pressures.shape
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, KIND_FIELD, dims[0], dims[1], grid.frequency)
        body = _f8(grid.grid.radial_nodes) + _f8(grid.grid.axial_nodes) + _c16(grid.pressures)
    elif isinstance(grid, AudioTransferGrid):
        dims = grid.values.shape
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, KIND_TRANSFER, dims[0], dims[1], grid.audio_frequency)
        body = _f8(grid.carriers) + _f8(grid.points) + _c16(grid.values)
    else:
        raise TypeError(f"cannot cache {type(grid).__name__}")
    meta = json.dumps(grid.metadata, sort_keys=True).encode()
    payload = header + _META_LEN.pack(len(meta)) + meta + body
    return payload + hashlib.sha256(payload).digest()


def decode_grid(data: bytes) -> UltraFieldGrid | AudioTransferGrid:
    if len(data) < _HEADER.size + _META_LEN.size + _DIGEST_SIZE:
        raise CacheCorruptionError(f"cache entry truncated ({len(data)} bytes)")
    magic, version, kind, dim0, dim1, frequency = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CacheCorruptionError("not a grid cache file (bad magic)")
    if version != FORMAT_VERSION:
        raise CacheVersionError(f"cache format version {version}, expected {FORMAT_VERSION}")

    payload, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(payload).digest() != digest:
        raise CacheCorruptionError("cache checksum mismatch")

    offset = _HEADER.size
    (meta_len,) = _META_LEN.unpack_from(payload, offset)
    offset += _META_LEN.size
    try:
        metadata = json.loads(payload[offset:offset + meta_len])
    except ValueError as exc:
        raise CacheCorruptionError(f"unreadable cache metadata: {exc}") from exc
    offset += meta_len

    def take(dtype: str, count: int) -> np.ndarray:
        nonlocal offset
        size = np.dtype(dtype).itemsize * count
        if offset + size > len(payload):
            raise CacheCorruptionError("cache body shorter than its header declares")
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset).copy()
        offset += size
        return arr

    try:
        if kind == KIND_FIELD:
            rho = take("<f8", dim1)
            z = take("<f8", dim0)
            pressures = take("<c16", dim0 * dim1).reshape(dim0, dim1)
            grid = UltraFieldGrid(
                grid=CylGrid(radial_nodes=rho, axial_nodes=z),
                frequency=frequency,
                pressures=pressures,
                metadata=metadata,
            )
        elif kind == KIND_TRANSFER:
            carriers = take("<f8", dim1)
            points = take("<f8", dim0 * 2).reshape(dim0, 2)
            values = take("<c16", dim0 * dim1).reshape(dim0, dim1)
            grid = AudioTransferGrid(
                points=points,
                carriers=tuple(float(c) for c in carriers),
                audio_frequency=frequency,
                values=values,
                metadata=metadata,
            )
        else:
            raise CacheCorruptionError(f"unknown grid kind {kind}")
    except ValueError as exc:
        raise CacheCorruptionError(f"cache entry fails validation: {exc}") from exc
    if offset != len(payload):
        raise CacheCorruptionError("trailing bytes after cache body")
    return grid


def cache_store(grid: UltraFieldGrid | AudioTransferGrid, path: Path) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_grid(grid)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=TEMP_PREFIX)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def cache_load(path: Path) -> UltraFieldGrid | AudioTransferGrid:
    return decode_grid(Path(path).read_bytes())


# ── Directory cache ──────────────────────────────────────────────────────────


@dataclass
class GcReport:
    removed: list[Path] = field(default_factory=list)
    kept: int = 0


class GridCache:
    """Content-keyed grid store; invalid entries count as misses."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}{SUFFIX}"

    def _load(self, key: str, expected: type):
        path = self.path_for(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            grid = cache_load(path)
        except CacheError as exc:
            logger.warning("discarding cache entry %s: %s; recomputing", path.name, exc)
            self.misses += 1
            return None
        if not isinstance(grid, expected):
            logger.warning("cache entry %s holds a %s; recomputing", path.name, type(grid).__name__)
            self.misses += 1
            return None
        self.hits += 1
        logger.debug("cache hit %s", path.name)
        return grid

    def _store(self, key: str, grid) -> None:
        cache_store(grid, self.path_for(key))
        logger.debug("cache store %s", self.path_for(key).name)

    def load_field(self, key: str) -> UltraFieldGrid | None:
        return self._load(key, UltraFieldGrid)

    def store_field(self, key: str, grid: UltraFieldGrid) -> None:
        self._store(key, grid)

    def load_transfer(self, key: str) -> AudioTransferGrid | None:
        return self._load(key, AudioTransferGrid)

    def store_transfer(self, key: str, grid: AudioTransferGrid) -> None:
        self._store(key, grid)

    def gc(self, purge_all: bool = False) -> GcReport:
        """Remove leftover temp files and entries that fail validation."""
        report = GcReport()
        if not self.root.exists():
            return report
        for path in sorted(self.root.iterdir()):
            if not path.is_file():
                continue
            if path.name.startswith(TEMP_PREFIX) or purge_all:
                path.unlink()
                report.removed.append(path)
                continue
            if path.suffix != SUFFIX:
                continue
            try:
                cache_load(path)
            except CacheError as exc:
                logger.info("removing invalid cache entry %s: %s", path.name, exc)
                path.unlink()
                report.removed.append(path)
            else:
                report.kept += 1
        return report
