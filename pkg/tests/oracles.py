"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (exhaustive
enumeration, scalar double loops) and shares no code with the library paths
it checks.
"""

from __future__ import annotations

import numpy as np

from crisp_match.raster import BinaryMap, ConfidenceMap, PixelCoord


def brute_force_assignment(n_pred, n_gt, edges):
    """Best (cardinality, cost) over all matchings by exhaustive recursion.

    edges: list of (pred_index, gt_index, cost). Returns the maximum
    cardinality and, among matchings of that cardinality, the minimum total
    cost. Exponential; keep instances at <= 7 pixels per side.
    """
    adjacency: dict[int, list[int]] = {}
    cost_of = {}
    for i, j, c in edges:
        adjacency.setdefault(i, []).append(j)
        cost_of[(i, j)] = c
    best_card = 0
    best_cost = 0.0

    def recurse(i, used, card, cost):
        nonlocal best_card, best_cost
        if i == n_pred:
            if card > best_card or (card == best_card and cost < best_cost):
                best_card, best_cost = card, cost
            return
        recurse(i + 1, used, card, cost)
        for j in adjacency.get(i, []):
            if j not in used:
                used.add(j)
                recurse(i + 1, used, card + 1, cost + cost_of[(i, j)])
                used.remove(j)

    recurse(0, set(), 0, 0.0)
    return best_card, best_cost


def brute_force_candidates(pred: ConfidenceMap, gt: BinaryMap, tau_c, tau_d, alpha):
    """All feasible pairs by scanning the full cross product of pixels."""
    out = []
    for py in range(pred.height):
        for px in range(pred.width):
            conf = pred.values[py, px]
            if conf < tau_c:
                continue
            for gy in range(gt.height):
                for gx in range(gt.width):
                    if gt.bits[gy, gx] != 1:
                        continue
                    d = abs(px - gx) + abs(py - gy)
                    if d < tau_d:
                        out.append((PixelCoord(px, py), PixelCoord(gx, gy),
                                    d - alpha * conf))
    return out


def guo_hall_reference(bits: np.ndarray) -> np.ndarray:
    """Scalar two-subiteration thinning, one pixel at a time."""
    a = bits.astype(np.uint8).copy()
    height, width = a.shape

    def at(y, x):
        return int(a[y, x]) if 0 <= y < height and 0 <= x < width else 0

    while True:
        changed = False
        for subiter in (0, 1):
            marked = []
            for y in range(height):
                for x in range(width):
                    if not a[y, x]:
                        continue
                    p2 = at(y - 1, x); p3 = at(y - 1, x + 1); p4 = at(y, x + 1)
                    p5 = at(y + 1, x + 1); p6 = at(y + 1, x); p7 = at(y + 1, x - 1)
                    p8 = at(y, x - 1); p9 = at(y - 1, x - 1)
                    c = (((not p2) and (p3 or p4)) + ((not p4) and (p5 or p6))
                         + ((not p6) and (p7 or p8)) + ((not p8) and (p9 or p2)))
                    n1 = (p9 or p2) + (p3 or p4) + (p5 or p6) + (p7 or p8)
                    n2 = (p2 or p3) + (p4 or p5) + (p6 or p7) + (p8 or p9)
                    n = min(n1, n2)
                    if subiter == 0:
                        m = (p6 or p7 or (not p9)) and p8
                    else:
                        m = (p2 or p3 or (not p5)) and p4
                    if c == 1 and 2 <= n <= 3 and not m:
                        marked.append((y, x))
            if marked:
                changed = True
                for y, x in marked:
                    a[y, x] = 0
        if not changed:
            break
    return a


def random_instance(rng: np.random.Generator, width: int, height: int,
                    pred_density: float = 0.02, gt_density: float = 0.01,
                    low: float = 0.3):
    """Sparse prediction/ground-truth pair for matching tests."""
    values = np.zeros((height, width))
    chosen = rng.random((height, width)) < pred_density
    values[chosen] = rng.uniform(low, 1.0, int(chosen.sum()))
    gt = rng.random((height, width)) < gt_density
    return ConfidenceMap(values), BinaryMap(gt)
