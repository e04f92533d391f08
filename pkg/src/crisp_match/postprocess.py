"""Hand-crafted crisping baseline: gradient-direction NMS and skeleton thinning.

NMS follows the structured-edges convention: the gradient direction is taken
from central differences on a Gaussian-smoothed copy (sigma 1, 5x5 kernel), a
pixel survives when e * value >= the bilinearly interpolated map value at
p +/- k*u for k = 1..r, and survivors near the image border are faded over s
pixels. Thinning is the two-subiteration parallel scheme run to a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .raster import BinaryMap, ConfidenceMap, threshold


@dataclass(frozen=True)
class NmsConfig:
    """r: suppression radius, s: border fade size, e: edge magnitude multiplier."""

    r: int = 1
    s: int = 5
    e: float = 1.01

    def __post_init__(self):
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r}")
        if int(self.s) != self.s or self.s < 0:
            raise ValueError(f"s must be a non-negative integer, got {self.s}")
        if self.e < 1.0:
            raise ValueError(f"e must be >= 1, got {self.e}")
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "s", int(self.s))


def _unit_gradient(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit gradient direction; degenerate maps default to the
    long axis's normal, zero-gradient pixels to (1, 0)."""
    height, width = values.shape
    if height == 1 and width > 1:
        return np.zeros_like(values), np.ones_like(values)
    if width == 1:
        return np.ones_like(values), np.zeros_like(values)
    smoothed = gaussian_filter(values, sigma=1.0, truncate=2.0, mode="nearest")
    gy = np.gradient(smoothed, axis=0)
    gx = np.gradient(smoothed, axis=1)
    mag = np.hypot(gx, gy)
    nonzero = mag > 0
    ux = np.divide(gx, mag, out=np.ones_like(gx), where=nonzero)
    uy = np.divide(gy, mag, out=np.zeros_like(gy), where=nonzero)
    return ux, uy


def nms(m: ConfidenceMap, cfg: NmsConfig) -> ConfidenceMap:
    """Suppress pixels that are not local maxima along the gradient direction.

    Out-of-bounds samples count as 0, so border-facing comparisons never
    suppress. With s > 0, surviving values are scaled by
    min(1, border_distance / s).
    """
    values = m.values
    height, width = values.shape
    ux, uy = _unit_gradient(values)

    off = cfg.r + 2
    padded = np.zeros((height + 2 * off, width + 2 * off))
    padded[off:off + height, off:off + width] = values
    ys, xs = np.mgrid[0:height, 0:width]
    keep = np.ones((height, width), dtype=bool)
    for k in range(1, cfg.r + 1):
        for sign in (1.0, -1.0):
            sx = xs + sign * k * ux + off
            sy = ys + sign * k * uy + off
            x0 = np.floor(sx).astype(np.intp)
            y0 = np.floor(sy).astype(np.intp)
            fx = sx - x0
            fy = sy - y0
            sample = ((1 - fx) * (1 - fy) * padded[y0, x0]
                      + fx * (1 - fy) * padded[y0, x0 + 1]
                      + (1 - fx) * fy * padded[y0 + 1, x0]
                      + fx * fy * padded[y0 + 1, x0 + 1])
            keep &= cfg.e * values >= sample

    out = np.where(keep, values, 0.0)
    if cfg.s > 0:
        border = np.minimum(np.minimum(xs, width - 1 - xs),
                            np.minimum(ys, height - 1 - ys))
        out = out * np.minimum(1.0, border / cfg.s)
    return ConfidenceMap(out)


def _deletable(padded: np.ndarray, subiter: int) -> np.ndarray:
    """Pixels removable in one thinning sub-iteration.

    Neighbor layout (p2..p9): N, NE, E, SE, S, SW, W, NW. A pixel is deletable
    when its crossing number C is 1, min(N1, N2) lies in [2, 3], and the
    sub-iteration's directional mask is clear.
    """
    height, width = padded.shape[0] - 2, padded.shape[1] - 2
    a = padded[1:height + 1, 1:width + 1]
    p2 = padded[0:height, 1:width + 1]
    p3 = padded[0:height, 2:width + 2]
    p4 = padded[1:height + 1, 2:width + 2]
    p5 = padded[2:height + 2, 2:width + 2]
    p6 = padded[2:height + 2, 1:width + 1]
    p7 = padded[2:height + 2, 0:width]
    p8 = padded[1:height + 1, 0:width]
    p9 = padded[0:height, 0:width]
    c = ((~p2 & (p3 | p4)).astype(np.uint8) + (~p4 & (p5 | p6))
         + (~p6 & (p7 | p8)) + (~p8 & (p9 | p2)))
    n1 = (p9 | p2).astype(np.uint8) + (p3 | p4) + (p5 | p6) + (p7 | p8)
    n2 = (p2 | p3).astype(np.uint8) + (p4 | p5) + (p6 | p7) + (p8 | p9)
    n = np.minimum(n1, n2)
    if subiter == 0:
        mask = (p6 | p7 | ~p9) & p8
    else:
        mask = (p2 | p3 | ~p5) & p4
    return a & (c == 1) & (n >= 2) & (n <= 3) & ~mask


def thin(m: BinaryMap) -> BinaryMap:
    """Parallel thinning to a one-pixel-wide skeleton.

    Runs the two sub-iterations repeatedly until a full pass deletes nothing;
    the output is a fixed point and a subset of the input. Out-of-bounds
    neighbors count as 0.
    """
    padded = np.zeros((m.height + 2, m.width + 2), dtype=bool)
    padded[1:m.height + 1, 1:m.width + 1] = m.bits
    while True:
        changed = False
        for subiter in (0, 1):
            removable = _deletable(padded, subiter)
            if removable.any():
                padded[1:m.height + 1, 1:m.width + 1] &= ~removable
                changed = True
        if not changed:
            break
    return BinaryMap(padded[1:m.height + 1, 1:m.width + 1])


def standard_postprocess(m: ConfidenceMap, cfg: NmsConfig, t: float) -> BinaryMap:
    """One-threshold crisping as used by standard evaluation: thin(threshold(nms(m), t))."""
    return thin(threshold(nms(m, cfg), t))
