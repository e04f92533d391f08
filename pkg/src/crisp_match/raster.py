"""Grid primitives shared by matching, post-processing and evaluation.

Maps are immutable: the wrapped numpy arrays are marked read-only, so values
can be shared freely across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy.ndimage import uniform_filter


class PixelCoord(NamedTuple):
    """0-based (column, row) position inside a map."""

    x: int
    y: int


def manhattan(a: PixelCoord, b: PixelCoord) -> int:
    """L1 distance in pixels; symmetric, zero iff a == b."""
    return abs(a.x - b.x) + abs(a.y - b.y)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ConfidenceMap:
    """W x H grid of edge confidences in [0, 1], stored row-major as (H, W) float64."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"confidence map must be 2-D and non-empty, got shape {arr.shape}")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("confidence values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def value_at(self, p: PixelCoord) -> float:
        return float(self.values[p.y, p.x])

    @staticmethod
    def zeros(width: int, height: int) -> "ConfidenceMap":
        return ConfidenceMap(np.zeros((height, width)))


@dataclass(frozen=True)
class BinaryMap:
    """W x H grid of {0, 1}, stored row-major as (H, W) uint8."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        arr = arr.astype(np.uint8, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"binary map must be 2-D and non-empty, got shape {arr.shape}")
        if np.any(arr > 1):
            raise ValueError("binary map entries must be 0 or 1")
        object.__setattr__(self, "bits", _freeze(arr))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def popcount(self) -> int:
        return int(self.bits.sum())

    def coords(self) -> list[PixelCoord]:
        """Set pixels in row-major order."""
        ys, xs = np.nonzero(self.bits)
        return [PixelCoord(int(x), int(y)) for x, y in zip(xs, ys)]

    @staticmethod
    def zeros(width: int, height: int) -> "BinaryMap":
        return BinaryMap(np.zeros((height, width), dtype=np.uint8))


AnyMap = Union[ConfidenceMap, BinaryMap]


def threshold(m: ConfidenceMap, t: float) -> BinaryMap:
    """Binarize with the inclusive rule: bit = 1 exactly where value >= t.

    t = 0 therefore yields the all-ones map, which keeps threshold sweeps
    over [0, 1) monotone.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    return BinaryMap(m.values >= t)


def box_blur5(m: ConfidenceMap) -> ConfidenceMap:
    """5x5 box blur; border pixels average over the in-bounds samples only."""
    acc = uniform_filter(m.values, size=5, mode="constant", cval=0.0) * 25.0
    cnt = uniform_filter(np.ones_like(m.values), size=5, mode="constant", cval=0.0) * 25.0
    return ConfidenceMap(np.clip(acc / cnt, 0.0, 1.0))


class TileRegion(NamedTuple):
    """Offset and extent of one tile inside the parent map, in pixels."""

    x0: int
    y0: int
    width: int
    height: int


@dataclass(frozen=True)
class TileLayout:
    """Non-overlapping tiling that exactly covers a parent map.

    Tiles are listed row-major; uneven dimensions are split floor/ceil so
    extents along one axis differ by at most one pixel (earlier tiles take
    the extra pixel).
    """

    rows: int
    cols: int
    parent_width: int
    parent_height: int
    regions: tuple[TileRegion, ...]


def _split(length: int, parts: int) -> list[int]:
    base, rem = divmod(length, parts)
    return [base + 1 if i < rem else base for i in range(parts)]


def tile(m: AnyMap, rows: int, cols: int) -> tuple[TileLayout, list[AnyMap]]:
    """Partition a map into rows x cols sub-maps covering it exactly."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if rows > m.height or cols > m.width:
        raise ValueError(
            f"cannot split {m.width}x{m.height} map into {rows}x{cols} tiles"
        )
    heights = _split(m.height, rows)
    widths = _split(m.width, cols)
    y_offsets = np.concatenate([[0], np.cumsum(heights)])[:-1]
    x_offsets = np.concatenate([[0], np.cumsum(widths)])[:-1]
    grid = m.values if isinstance(m, ConfidenceMap) else m.bits
    wrap = ConfidenceMap if isinstance(m, ConfidenceMap) else BinaryMap
    regions = []
    pieces = []
    for r, (y0, h) in enumerate(zip(y_offsets, heights)):
        for c, (x0, w) in enumerate(zip(x_offsets, widths)):
            regions.append(TileRegion(int(x0), int(y0), int(w), int(h)))
            pieces.append(wrap(grid[y0:y0 + h, x0:x0 + w]))
    layout = TileLayout(rows, cols, m.width, m.height, tuple(regions))
    return layout, pieces


def merge_tiles(layout: TileLayout, tiles: Sequence[AnyMap]) -> AnyMap:
    """Inverse of tile(): reassemble sub-maps by layout, bit-exact."""
    if len(tiles) != len(layout.regions):
        raise ValueError(f"expected {len(layout.regions)} tiles, got {len(tiles)}")
    is_conf = isinstance(tiles[0], ConfidenceMap)
    dtype = np.float64 if is_conf else np.uint8
    out = np.zeros((layout.parent_height, layout.parent_width), dtype=dtype)
    for region, piece in zip(layout.regions, tiles):
        grid = piece.values if is_conf else piece.bits
        if grid.shape != (region.height, region.width):
            raise ValueError(f"tile shape {grid.shape} does not match region {region}")
        out[region.y0:region.y0 + region.height, region.x0:region.x0 + region.width] = grid
    return ConfidenceMap(out) if is_conf else BinaryMap(out)
