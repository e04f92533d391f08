"""One-to-one matching between predicted and ground-truth edge pixels.

A (prediction, ground-truth) pair is feasible when the prediction's
confidence is at least tau_c, the ground-truth bit is set, and their
Manhattan distance is strictly below tau_d; its cost is
distance - alpha * confidence. Infeasible pairs are simply absent from the
candidate set. The assignment picks, among all maximum-cardinality matchings
of the feasible graph, one of least total cost; ground-truth pixels left
unmatched are recovered directly into the supervision label so they stay
active for later training iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import min_weight_full_bipartite_matching

from .raster import BinaryMap, ConfidenceMap, PixelCoord, merge_tiles, tile


@dataclass(frozen=True)
class MatchConfig:
    """Feasibility and cost parameters: confidence floor, distance ceiling, confidence weight."""

    tau_c: float
    tau_d: int
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.tau_c <= 1.0:
            raise ValueError(f"tau_c must lie in (0, 1], got {self.tau_c}")
        if int(self.tau_d) != self.tau_d or self.tau_d < 1:
            raise ValueError(f"tau_d must be a positive integer, got {self.tau_d}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        object.__setattr__(self, "tau_d", int(self.tau_d))


class CandidateEdge(NamedTuple):
    pred: PixelCoord
    gt: PixelCoord
    cost: float


@dataclass(frozen=True)
class MatchResult:
    """An optimal pairing plus the leftovers on both sides."""

    pairs: tuple[tuple[PixelCoord, PixelCoord, float], ...]
    unmatched_gt: tuple[PixelCoord, ...]
    unmatched_pred: tuple[PixelCoord, ...]
    total_cost: float

    def __post_init__(self):
        preds = [p for p, _, _ in self.pairs]
        gts = [g for _, g, _ in self.pairs]
        if len(set(preds)) != len(preds) or len(set(gts)) != len(gts):
            raise ValueError("matching is not one-to-one")


@dataclass(frozen=True)
class MatchedLabel:
    """Supervision target: ones at matched prediction pixels and unmatched GT pixels."""

    label: BinaryMap


def matchable_pred_pixels(pred: ConfidenceMap, tau_c: float) -> list[PixelCoord]:
    """Prediction pixels that clear the confidence floor, row-major."""
    ys, xs = np.nonzero(pred.values >= tau_c)
    return [PixelCoord(int(x), int(y)) for x, y in zip(xs, ys)]


def _candidate_arrays(pred_values: np.ndarray, gt_bits: np.ndarray, cfg: MatchConfig):
    """Enumerate feasible pairs as index arrays into the row-major pixel lists.

    Ground-truth pixels are bucketed on a tau_d-sized grid; every feasible
    partner of a prediction lies in the 3x3 block of buckets around it, so
    enumeration touches O(n_pred * tau_d^2) cells instead of the full
    (W*H)^2 cross product. Returns (pred_xy, gt_xy, ei, ej, costs) with edges
    sorted row-major by prediction, then row-major by ground truth.
    """
    pys, pxs = np.nonzero(pred_values >= cfg.tau_c)
    gys, gxs = np.nonzero(gt_bits)
    pred_xy = np.column_stack([pxs, pys]).astype(np.int64)
    gt_xy = np.column_stack([gxs, gys]).astype(np.int64)
    empty = np.empty(0, dtype=np.int64)
    if len(pxs) == 0 or len(gxs) == 0:
        return pred_xy, gt_xy, empty, empty, np.empty(0)

    conf = pred_values[pys, pxs]
    td = int(cfg.tau_d)
    n_cy = gt_bits.shape[0] // td + 2
    g_key = (gxs // td) * n_cy + (gys // td)
    order = np.argsort(g_key, kind="stable")
    uniq_keys, starts = np.unique(g_key[order], return_index=True)
    buckets = {int(k): order[s:e] for k, s, e in
               zip(uniq_keys, starts, np.append(starts[1:], len(order)))}

    p_key = (pxs // td) * n_cy + (pys // td)
    ei_parts, ej_parts, cost_parts = [], [], []
    for key in np.unique(p_key):
        sel = np.nonzero(p_key == key)[0]
        near = [buckets[k] for dx in (-n_cy, 0, n_cy) for dy in (-1, 0, 1)
                if (k := int(key) + dx + dy) in buckets]
        if not near:
            continue
        gsel = np.concatenate(near)
        dist = (np.abs(pxs[sel][:, None] - gxs[gsel][None, :])
                + np.abs(pys[sel][:, None] - gys[gsel][None, :]))
        ii, jj = np.nonzero(dist < td)
        if len(ii) == 0:
            continue
        ei_parts.append(sel[ii])
        ej_parts.append(gsel[jj])
        cost_parts.append(dist[ii, jj] - cfg.alpha * conf[sel[ii]])
    if not ei_parts:
        return pred_xy, gt_xy, empty, empty, np.empty(0)
    ei = np.concatenate(ei_parts)
    ej = np.concatenate(ej_parts)
    costs = np.concatenate(cost_parts)
    order = np.lexsort((ej, ei))
    return pred_xy, gt_xy, ei[order], ej[order], costs[order]


def build_candidates(pred: ConfidenceMap, gt: BinaryMap, cfg: MatchConfig) -> list[CandidateEdge]:
    """All feasible (prediction, ground-truth) pairs with their costs."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValueError(
            f"dimension mismatch: prediction {pred.width}x{pred.height} vs "
            f"ground truth {gt.width}x{gt.height}"
        )
    pred_xy, gt_xy, ei, ej, costs = _candidate_arrays(pred.values, gt.bits, cfg)
    return [
        CandidateEdge(
            PixelCoord(int(pred_xy[i, 0]), int(pred_xy[i, 1])),
            PixelCoord(int(gt_xy[j, 0]), int(gt_xy[j, 1])),
            float(c),
        )
        for i, j, c in zip(ei, ej, costs)
    ]


def solve_max_cardinality(
    n_pred: int, n_gt: int, ei: np.ndarray, ej: np.ndarray, costs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min-cost maximum-cardinality matching on a sparse bipartite graph.

    Costs may be negative; a uniform shift makes them positive, which cannot
    change the argmin because every matching considered has the same
    cardinality. The shifted graph is embedded in a square problem - real
    edges top-left, their mirror image bottom-right, and per-node slack edges
    of prohibitively large weight on the two diagonals - whose minimum-weight
    full matching (solved by shortest augmenting paths with node potentials)
    uses as many real edges as possible and restricts to an optimal matching
    of the original graph in its top-left block.

    Returns (pred_indices, gt_indices, pair_costs) sorted by prediction index.
    """
    out = np.empty(0, dtype=np.int64)
    if n_pred == 0 or n_gt == 0 or len(ei) == 0:
        return out, out, np.empty(0)
    keys = ei.astype(np.int64) * n_gt + ej
    key_order = np.argsort(keys)
    sorted_keys = keys[key_order]
    if np.any(sorted_keys[1:] == sorted_keys[:-1]):
        raise ValueError("duplicate candidate pair")

    # drop isolated nodes; they are unmatched by definition
    active_p, ei_c = np.unique(ei, return_inverse=True)
    active_g, ej_c = np.unique(ej, return_inverse=True)
    np_c, ng_c = len(active_p), len(active_g)

    shift = 1.0 - min(0.0, float(costs.min()))
    w = costs + shift

    # Quantize the shifted weights onto a binary grid: the augmenting-path
    # solver can stall when strict comparisons meet accumulated float error,
    # whereas integer-valued weights keep every comparison exact. The
    # resolution adapts so that even worst-case path sums (about n * big)
    # stay below 2^52; selected pairs are re-costed with the true values, so
    # the returned total differs from the exact optimum by at most
    # cardinality * 2^-(f+1).
    m = min(np_c, ng_c)
    n = np_c + ng_c
    budget = 2.0 ** 52 / (2.0 * max(float(w.max()), 1.0) * (m + 1) * (n + 1))
    f = min(40, max(0, int(math.floor(math.log2(budget)))))
    wq = np.maximum(np.round(w * 2.0 ** f), 1.0)
    big = 2.0 * float(wq.max()) * (m + 1) + 1.0

    rows = np.concatenate([ei_c, np.arange(np_c), np_c + np.arange(ng_c), np_c + ej_c])
    cols = np.concatenate([ej_c, ng_c + np.arange(np_c), np.arange(ng_c), ng_c + ei_c])
    vals = np.concatenate([wq, np.full(np_c, big), np.full(ng_c, big), wq])
    graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
    row_ind, col_ind = min_weight_full_bipartite_matching(graph)

    col_of = np.empty(n, dtype=np.int64)
    col_of[row_ind] = col_ind
    gc = col_of[:np_c]
    real = gc < ng_c
    pred_idx = active_p[np.nonzero(real)[0]]
    gt_idx = active_g[gc[real]]
    slot = np.searchsorted(sorted_keys, pred_idx * n_gt + gt_idx)
    return pred_idx, gt_idx, costs[key_order[slot]]


def solve_assignment(
    candidates: Sequence[CandidateEdge],
    gt_pixels: Sequence[PixelCoord],
    pred_pixels: Sequence[PixelCoord],
) -> MatchResult:
    """Optimal one-to-one assignment over the candidate edges.

    Among all maximum-cardinality matchings of the candidate graph, returns
    one minimizing total cost. The pairing may not be unique but the total
    cost is; unmatched lists preserve the order of the input pixel lists.
    """
    pred_index = {p: i for i, p in enumerate(pred_pixels)}
    gt_index = {g: j for j, g in enumerate(gt_pixels)}
    if len(pred_index) != len(pred_pixels) or len(gt_index) != len(gt_pixels):
        raise ValueError("duplicate coordinates in pixel lists")
    ei = np.empty(len(candidates), dtype=np.int64)
    ej = np.empty(len(candidates), dtype=np.int64)
    costs = np.empty(len(candidates))
    for k, cand in enumerate(candidates):
        if cand.pred not in pred_index or cand.gt not in gt_index:
            raise ValueError(f"candidate references unknown pixel: {cand}")
        ei[k] = pred_index[cand.pred]
        ej[k] = gt_index[cand.gt]
        costs[k] = cand.cost

    pi, gj, pair_costs = solve_max_cardinality(len(pred_pixels), len(gt_pixels), ei, ej, costs)
    matched_p = np.zeros(len(pred_pixels), dtype=bool)
    matched_g = np.zeros(len(gt_pixels), dtype=bool)
    matched_p[pi] = True
    matched_g[gj] = True
    pairs = tuple(
        (pred_pixels[i], gt_pixels[j], float(c)) for i, j, c in zip(pi, gj, pair_costs)
    )
    return MatchResult(
        pairs=pairs,
        unmatched_gt=tuple(g for j, g in enumerate(gt_pixels) if not matched_g[j]),
        unmatched_pred=tuple(p for i, p in enumerate(pred_pixels) if not matched_p[i]),
        total_cost=float(pair_costs.sum()),
    )


def build_matched_label(result: MatchResult, gt: BinaryMap) -> MatchedLabel:
    """Ones at every matched prediction pixel plus every unmatched GT pixel.

    Unmatched prediction pixels get 0: they are only kept "active" through
    the recovered ground-truth side.
    """
    out = np.zeros((gt.height, gt.width), dtype=np.uint8)
    for p, _, _ in result.pairs:
        out[p.y, p.x] = 1
    for g in result.unmatched_gt:
        out[g.y, g.x] = 1
    return MatchedLabel(BinaryMap(out))


def _supervise_arrays(pred_values: np.ndarray, gt_bits: np.ndarray, cfg: MatchConfig) -> np.ndarray:
    """Array fast path equivalent to build_matched_label(solve_assignment(
    build_candidates(...))); skips the per-pixel object layer."""
    pred_xy, gt_xy, ei, ej, costs = _candidate_arrays(pred_values, gt_bits, cfg)
    label = np.zeros(gt_bits.shape, dtype=np.uint8)
    if len(gt_xy) == 0:
        return label
    pi, gj, _ = solve_max_cardinality(len(pred_xy), len(gt_xy), ei, ej, costs)
    if len(pi):
        label[pred_xy[pi, 1], pred_xy[pi, 0]] = 1
    unmatched = np.ones(len(gt_xy), dtype=bool)
    unmatched[gj] = False
    label[gt_xy[unmatched, 1], gt_xy[unmatched, 0]] = 1
    return label


def generate_supervision(
    pred: ConfidenceMap,
    gt: BinaryMap,
    cfg: MatchConfig,
    tiling: Optional[tuple[int, int]] = None,
) -> MatchedLabel:
    """Full pipeline: candidates -> assignment -> matched label.

    With tiling=(rows, cols) the maps are split into non-overlapping patches
    that are matched independently (bounding peak memory) and the per-tile
    labels are merged back; when no feasible pair spans a tile border the
    result is identical to the untiled one.
    """
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValueError("prediction and ground truth dimensions differ")
    if tiling is None:
        return MatchedLabel(BinaryMap(_supervise_arrays(pred.values, gt.bits, cfg)))
    rows, cols = tiling
    layout, pred_tiles = tile(pred, rows, cols)
    _, gt_tiles = tile(gt, rows, cols)
    labels = [
        BinaryMap(_supervise_arrays(pt.values, gt_t.bits, cfg))
        for pt, gt_t in zip(pred_tiles, gt_tiles)
    ]
    return MatchedLabel(merge_tiles(layout, labels))
