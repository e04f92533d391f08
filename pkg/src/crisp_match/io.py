"""File formats: binary PGM (P5, maxval 255), lossless EMAP, and TSV manifests.

EMAP layout: magic b"EMAP", uint32-LE width, uint32-LE height, then
width*height IEEE-754 float32-LE confidences, row-major. Internal maps are
float64; writing quantizes to float32, so a write/read cycle is bit-exact for
float32-representable values (PGM's 8-bit quantization is far coarser:
round-trip error is at most 1/510 per pixel).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .raster import BinaryMap, ConfidenceMap

EMAP_MAGIC = b"EMAP"


class MapFormatError(ValueError):
    """Unknown magic, malformed header, or truncated payload."""


class MapValidationError(ValueError):
    """Decoded values violate map invariants (confidence outside [0, 1])."""


class ManifestError(ValueError):
    """Malformed manifest; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _parse_pgm(data: bytes, path: str) -> ConfidenceMap:
    if not data.startswith(b"P5"):
        raise MapFormatError(f"{path}: not a binary PGM")
    # header tokens: width, height, maxval; '#' starts a comment until newline
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            if eol < 0:
                raise MapFormatError(f"{path}: unterminated comment in header")
            pos = eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise MapFormatError(f"{path}: bad header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace byte separating header from payload
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MapFormatError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise MapFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    payload = data[pos:pos + width * height]
    if len(payload) != width * height:
        raise MapFormatError(f"{path}: truncated payload")
    grid = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return ConfidenceMap(grid.astype(np.float64) / 255.0)


def _parse_emap(data: bytes, path: str) -> ConfidenceMap:
    if len(data) < 12:
        raise MapFormatError(f"{path}: truncated EMAP header")
    width, height = struct.unpack_from("<II", data, 4)
    if width < 1 or height < 1:
        raise MapFormatError(f"{path}: bad dimensions {width}x{height}")
    expected = 12 + 4 * width * height
    if len(data) < expected:
        raise MapFormatError(f"{path}: truncated payload")
    grid = np.frombuffer(data, dtype="<f4", count=width * height, offset=12)
    grid = grid.reshape(height, width).astype(np.float64)
    if not np.all(np.isfinite(grid)):
        raise MapValidationError(f"{path}: non-finite confidence value")
    if np.any(grid < -1e-9) or np.any(grid > 1.0 + 1e-9):
        raise MapValidationError(f"{path}: confidence outside [0, 1]")
    return ConfidenceMap(np.clip(grid, 0.0, 1.0))


def read_map(path) -> ConfidenceMap:
    """Decode a PGM or EMAP file, dispatching on the magic bytes."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(EMAP_MAGIC):
        return _parse_emap(data, str(path))
    if data.startswith(b"P5"):
        return _parse_pgm(data, str(path))
    raise MapFormatError(f"{path}: unknown magic {data[:4]!r}")


def write_map(m: Union[ConfidenceMap, BinaryMap], path, fmt: str) -> None:
    """Encode a map as 'pgm' (quantized, round-half-up) or 'emap' (float32)."""
    path = Path(path)
    if isinstance(m, BinaryMap):
        grid = m.bits.astype(np.float64)
    else:
        grid = m.values
    height, width = grid.shape
    fmt = fmt.lower()
    if fmt == "pgm":
        bytes_ = np.floor(grid * 255.0 + 0.5).astype(np.uint8)
        header = f"P5\n{width} {height}\n255\n".encode("ascii")
        path.write_bytes(header + bytes_.tobytes())
    elif fmt == "emap":
        payload = grid.astype("<f4").tobytes()
        path.write_bytes(EMAP_MAGIC + struct.pack("<II", width, height) + payload)
    else:
        raise ValueError(f"unknown map format {fmt!r} (expected 'pgm' or 'emap')")


GRID64_MAGIC = b"GR64"


def write_grid64(grid: np.ndarray, path) -> None:
    """Write an unconstrained float64 grid (loss gradients exceed [0, 1], so
    EMAP cannot hold them): magic b"GR64", uint32-LE width/height, float64-LE
    row-major payload."""
    grid = np.asarray(grid, dtype=np.float64)
    height, width = grid.shape
    Path(path).write_bytes(
        GRID64_MAGIC + struct.pack("<II", width, height) + grid.astype("<f8").tobytes()
    )


def read_grid64(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(GRID64_MAGIC) or len(data) < 12:
        raise MapFormatError(f"{path}: not a GR64 grid")
    width, height = struct.unpack_from("<II", data, 4)
    if len(data) < 12 + 8 * width * height:
        raise MapFormatError(f"{path}: truncated payload")
    grid = np.frombuffer(data, dtype="<f8", count=width * height, offset=12)
    return grid.reshape(height, width).astype(np.float64)


class ManifestEntry(NamedTuple):
    prediction: Path
    ground_truths: tuple[Path, ...]
    image_id: str


@dataclass(frozen=True)
class Manifest:
    """Ordered dataset listing: per image, one prediction and >= 1 GT paths."""

    entries: tuple[ManifestEntry, ...]


def load_manifest(path) -> Manifest:
    """Parse a tab-separated manifest.

    Each non-blank, non-'#' line is: prediction path, TAB, one or more GT
    paths. Paths are resolved relative to the manifest's directory; the image
    id is the prediction file's stem.
    """
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f for f in line.split("\t") if f.strip()]
        if len(fields) < 2:
            raise ManifestError("expected a prediction path and at least one ground-truth path", lineno)
        pred = base / fields[0].strip()
        gts = tuple(base / f.strip() for f in fields[1:])
        entries.append(ManifestEntry(pred, gts, pred.stem))
    if not entries:
        raise ManifestError(f"{path}: manifest has no entries")
    return Manifest(tuple(entries))
