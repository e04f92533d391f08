"""Boundary-map evaluation: tolerance-based correspondence, ODS/OIS/AP, crispness.

A predicted pixel counts as a true positive only when an exact one-to-one
matching (same solver as the supervision stage, with the distance itself as
the cost) pairs it with a ground-truth pixel strictly closer than the
tolerance. Precision credits a prediction matched in any annotation; recall
charges every annotation's unmatched ground-truth pixels.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .matching import solve_max_cardinality
from .postprocess import NmsConfig, nms, thin
from .raster import BinaryMap, ConfidenceMap, threshold

# the standard sweep: [0, 1) with a step of 0.01
THRESHOLDS: tuple[float, ...] = tuple(i / 100.0 for i in range(100))

PROTOCOLS = ("seval", "ceval")
DISTANCE_MODES = ("euclidean", "manhattan")


class CorrespondenceCounts(NamedTuple):
    tp: int
    fp: int
    fn: int


class PrPoint(NamedTuple):
    t: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class PrCurve:
    points: tuple[PrPoint, ...]

    def __post_init__(self):
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])) or any(not 0.0 <= t < 1.0 for t in ts):
            raise ValueError("thresholds must be strictly increasing in [0, 1)")

    def thresholds(self) -> tuple[float, ...]:
        return tuple(p.t for p in self.points)

    def best_f1(self) -> float:
        return max(p.f1 for p in self.points)


@dataclass(frozen=True)
class EvalReport:
    ods: float
    ois: float
    ap: float
    ac: float
    protocol: str
    tolerance: float
    dataset_curve: PrCurve
    per_image: tuple[PrCurve, ...]


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def _tolerance_edges(pred_xy: np.ndarray, gt_xy: np.ndarray, tolerance: float, mode: str):
    """Index pairs with distance strictly below the tolerance, plus distances."""
    p_norm = 1 if mode == "manhattan" else 2
    tree = cKDTree(gt_xy)
    neighbor_lists = tree.query_ball_point(pred_xy, r=tolerance, p=p_norm)
    ei, ej = [], []
    for i, js in enumerate(neighbor_lists):
        ei.extend([i] * len(js))
        ej.extend(js)
    ei = np.array(ei, dtype=np.int64)
    ej = np.array(ej, dtype=np.int64)
    if len(ei) == 0:
        return ei, ej, np.empty(0)
    delta = np.abs(pred_xy[ei] - gt_xy[ej])
    if mode == "manhattan":
        dist = (delta[:, 0] + delta[:, 1]).astype(np.float64)
        close = dist < tolerance
    else:
        d2 = delta[:, 0] ** 2 + delta[:, 1] ** 2
        close = d2 < float(tolerance) ** 2
        dist = np.sqrt(d2.astype(np.float64))
    return ei[close], ej[close], dist[close]


def correspond(
    pred: BinaryMap,
    gts: Sequence[BinaryMap],
    tolerance: float,
    distance_mode: str = "euclidean",
) -> CorrespondenceCounts:
    """One-to-one tolerance matching of a prediction against every annotation."""
    if distance_mode not in DISTANCE_MODES:
        raise ValueError(f"distance_mode must be one of {DISTANCE_MODES}")
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    for gt in gts:
        if (gt.width, gt.height) != (pred.width, pred.height):
            raise ValueError("prediction and ground-truth dimensions differ")
    pys, pxs = np.nonzero(pred.bits)
    pred_xy = np.column_stack([pxs, pys]).astype(np.int64)
    n_pred = len(pred_xy)
    matched_any = np.zeros(n_pred, dtype=bool)
    fn = 0
    for gt in gts:
        gys, gxs = np.nonzero(gt.bits)
        gt_xy = np.column_stack([gxs, gys]).astype(np.int64)
        if n_pred == 0 or len(gt_xy) == 0:
            fn += len(gt_xy)
            continue
        ei, ej, dist = _tolerance_edges(pred_xy, gt_xy, tolerance, distance_mode)
        pi, _, _ = solve_max_cardinality(n_pred, len(gt_xy), ei, ej, dist)
        matched_any[pi] = True
        fn += len(gt_xy) - len(pi)
    tp = int(matched_any.sum())
    return CorrespondenceCounts(tp=tp, fp=n_pred - tp, fn=fn)


def _image_counts(
    pred: ConfidenceMap,
    gts: Sequence[BinaryMap],
    protocol: str,
    nms_cfg: NmsConfig,
    tolerance: float,
    distance_mode: str,
) -> list[CorrespondenceCounts]:
    base = nms(pred, nms_cfg) if protocol == "seval" else pred
    counts = []
    for t in THRESHOLDS:
        binary = thin(threshold(base, t)) if protocol == "seval" else threshold(pred, t)
        counts.append(correspond(binary, gts, tolerance, distance_mode))
    return counts


def _curve_from_counts(counts: Sequence[CorrespondenceCounts]) -> PrCurve:
    points = []
    for t, c in zip(THRESHOLDS, counts):
        precision, recall, f1 = _prf(c.tp, c.fp, c.fn)
        points.append(PrPoint(t, c.tp, c.fp, c.fn, precision, recall, f1))
    return PrCurve(tuple(points))


def pr_curve(
    dataset: Sequence[tuple[ConfidenceMap, Sequence[BinaryMap]]],
    protocol: str,
    nms_cfg: NmsConfig,
    tolerance: float,
    distance_mode: str = "euclidean",
    threads: int = 1,
) -> tuple[PrCurve, list[PrCurve]]:
    """Sweep the 100-threshold grid over a dataset.

    Under "seval" each thresholded map is crisped first (NMS once per image,
    thinning once per threshold); "ceval" thresholds the raw map directly.
    The dataset curve sums the integer counts across images before computing
    precision/recall/F, so aggregation order cannot change the result.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}")
    if not dataset:
        raise ValueError("dataset must be non-empty")

    def work(item):
        pred, gts = item
        return _image_counts(pred, gts, protocol, nms_cfg, tolerance, distance_mode)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_counts = list(pool.map(work, dataset))
    else:
        all_counts = [work(item) for item in dataset]

    per_image = [_curve_from_counts(counts) for counts in all_counts]
    totals = []
    for k in range(len(THRESHOLDS)):
        tp = sum(c[k].tp for c in all_counts)
        fp = sum(c[k].fp for c in all_counts)
        fn = sum(c[k].fn for c in all_counts)
        totals.append(CorrespondenceCounts(tp, fp, fn))
    return _curve_from_counts(totals), per_image


def _area_under_pr(curve: PrCurve) -> float:
    """Trapezoid over recall, deduplicating equal recalls by max precision."""
    by_recall: dict[float, float] = {}
    for p in curve.points:
        by_recall[p.recall] = max(p.precision, by_recall.get(p.recall, 0.0))
    recalls = sorted(by_recall)
    if len(recalls) < 2:
        return 0.0
    precisions = [by_recall[r] for r in recalls]
    return float(np.trapezoid(precisions, recalls))


def summarize(
    dataset_curve: PrCurve,
    per_image: Sequence[PrCurve],
    ac: float,
    protocol: str,
    tolerance: float,
) -> EvalReport:
    """Collapse curves into the standard scores.

    ODS is the best dataset F-score over a single shared threshold, OIS the
    mean of each image's own best F-score, AP the area under the
    precision-recall curve.
    """
    grid = dataset_curve.thresholds()
    for curve in per_image:
        if curve.thresholds() != grid:
            raise ValueError("per-image curves must share the dataset threshold grid")
    ods = dataset_curve.best_f1()
    ois = float(np.mean([c.best_f1() for c in per_image])) if per_image else 0.0
    return EvalReport(
        ods=ods,
        ois=ois,
        ap=_area_under_pr(dataset_curve),
        ac=ac,
        protocol=protocol,
        tolerance=float(tolerance),
        dataset_curve=dataset_curve,
        per_image=tuple(per_image),
    )


def average_crispness(pred: ConfidenceMap, nms_cfg: NmsConfig) -> float:
    """Fraction of confidence mass that survives crisping (NMS + thinning).

    The survivor set is the nonzero support of the NMS output; it is thinned
    and the remaining pixels' share of the original confidence mass is
    returned. Already one-pixel-wide maps lose nothing and score exactly 1;
    an all-zero map scores 1 by convention.
    """
    total = float(pred.values.sum())
    if total == 0.0:
        return 1.0
    survivors = BinaryMap(nms(pred, nms_cfg).values > 0.0)
    kept = thin(survivors)
    return float((pred.values * kept.bits).sum() / total)
