"""Structural performance checks: solver scaling and pipeline cost comparison.

Timings are medians over repeated runs; every timed run folds its outputs
into an integer checksum that is compared against an untimed reference pass,
so a benchmark can never silently change functional results.
"""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import binary_dilation

from .matching import (CandidateEdge, MatchConfig, generate_supervision,
                       solve_assignment)
from .metrics import THRESHOLDS
from .postprocess import NmsConfig, nms, thin
from .raster import BinaryMap, ConfidenceMap, PixelCoord, threshold


@dataclass(frozen=True)
class BenchRecord:
    scenario: str
    params: dict
    seconds: float
    repetitions: int
    times: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.repetitions < 3:
            raise ValueError("at least 3 repetitions are required")

    @property
    def spread(self) -> float:
        return max(self.times) - min(self.times) if self.times else 0.0


def _median_timed(fn, trials: int) -> tuple[float, tuple[float, ...], object]:
    times = []
    result = None
    for _ in range(trials):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), tuple(times), result


def dense_instance(n: int, rng: np.random.Generator):
    """n predictions and n GT pixels packed so every pair is feasible."""
    side = math.isqrt(n - 1) + 1
    cells = side * side
    # max Manhattan distance inside the patch is 2*(side-1), below any
    # tau_d >= 2*side, so the candidate graph is complete
    alpha = 2.0
    p_idx = rng.choice(cells, size=n, replace=False)
    g_idx = rng.choice(cells, size=n, replace=False)
    preds = [PixelCoord(int(i % side), int(i // side)) for i in p_idx]
    gts = [PixelCoord(int(i % side), int(i // side)) for i in g_idx]
    conf = rng.uniform(0.5, 1.0, size=n)
    candidates = [
        CandidateEdge(p, g, abs(p.x - g.x) + abs(p.y - g.y) - alpha * float(conf[i]))
        for i, p in enumerate(preds)
        for g in gts
    ]
    return candidates, gts, preds


def scaling_bench(
    sizes: Sequence[int], trials: int = 3, seed: int = 0
) -> tuple[list[BenchRecord], Optional[float]]:
    """Time the assignment solver on growing dense-feasible instances.

    Returns per-size records and the fitted log-log slope of median time
    versus size (None when fewer than two sizes are given).
    """
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be increasing")
    if trials < 3:
        raise ValueError("at least 3 trials are required")
    rng = np.random.default_rng(seed)
    records = []
    for n in sizes:
        candidates, gts, preds = dense_instance(n, rng)
        median, times, _ = _median_timed(
            lambda: solve_assignment(candidates, gts, preds), trials
        )
        records.append(BenchRecord("assignment", {"size": n}, median, trials, times))
    slope = None
    if len(sizes) >= 2:
        xs = np.log([r.params["size"] for r in records])
        ys = np.log([max(r.seconds, 1e-9) for r in records])
        slope = float(np.polyfit(xs, ys, 1)[0])
    return records, slope


def synthetic_edge_image(
    width: int,
    height: int,
    rng: np.random.Generator,
    lines: int = 4,
    noise_fraction: float = 0.03,
    noise_high: float = 0.3,
) -> tuple[ConfidenceMap, BinaryMap]:
    """A one-pixel-wide polyline ground truth and its thick, noisy prediction.

    Polylines are random walks; the prediction dilates them to three pixels,
    jitters their confidence and sprinkles low-confidence noise so NMS and
    thinning have real work to do while matching sees realistic densities.
    """
    gt = np.zeros((height, width), dtype=bool)
    for _ in range(lines):
        x = rng.integers(2, width - 2)
        y = rng.integers(2, height - 2)
        angle = rng.uniform(0, 2 * np.pi)
        for _ in range(int(1.2 * max(width, height))):
            gt[int(y), int(x)] = True
            angle += rng.normal(0.0, 0.25)
            x = min(max(x + np.cos(angle), 1), width - 2)
            y = min(max(y + np.sin(angle), 1), height - 2)
    thick = binary_dilation(gt, structure=np.ones((3, 3), dtype=bool))
    values = np.where(thick, rng.uniform(0.55, 1.0, gt.shape), 0.0)
    noisy = rng.random(gt.shape) < noise_fraction
    values = np.clip(values + np.where(noisy, rng.uniform(0.0, noise_high, gt.shape), 0.0), 0.0, 1.0)
    return ConfidenceMap(values), BinaryMap(gt)


def _nms_checksum(item, nms_cfg) -> int:
    pred, _ = item
    return int(np.count_nonzero(nms(pred, nms_cfg).values))


def _sweep_checksum(item, nms_cfg) -> int:
    pred, _ = item
    suppressed = nms(pred, nms_cfg)
    return sum(thin(threshold(suppressed, t)).popcount() for t in THRESHOLDS)


def _supervision_checksum(item, cfg) -> int:
    pred, gt = item
    return generate_supervision(pred, gt, cfg).label.popcount()


def _over_dataset(dataset, per_image, threads: int) -> int:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return sum(pool.map(per_image, dataset))
    return sum(per_image(item) for item in dataset)


def pipeline_compare(
    dataset: Sequence[tuple[ConfidenceMap, BinaryMap]],
    nms_cfg: NmsConfig,
    cfg: MatchConfig,
    trials: int = 3,
    threads: int = 1,
) -> list[BenchRecord]:
    """Time NMS alone, NMS + 100-threshold thinning, and supervision generation.

    All three scenarios see the identical dataset; checksums guard against a
    timed run producing different outputs than the untimed reference. Runs
    single-worker by default for stable timings; threads > 1 measures the
    image-parallel throughput path instead.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if trials < 3:
        raise ValueError("at least 3 trials are required")
    scenarios = [
        ("nms", lambda item: _nms_checksum(item, nms_cfg)),
        ("nms_thin_x100", lambda item: _sweep_checksum(item, nms_cfg)),
        ("supervision", lambda item: _supervision_checksum(item, cfg)),
    ]
    records = []
    params = {"images": len(dataset), "width": dataset[0][0].width,
              "height": dataset[0][0].height, "threads": threads}
    for name, per_image in scenarios:
        reference = _over_dataset(dataset, per_image, threads=1)  # untimed
        median, times, checksum = _median_timed(
            lambda: _over_dataset(dataset, per_image, threads), trials)
        if checksum != reference:
            raise RuntimeError(f"benchmark '{name}' altered functional outputs")
        records.append(BenchRecord(name, dict(params), median, trials, times))
    return records
