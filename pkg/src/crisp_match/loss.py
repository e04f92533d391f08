"""Binary cross-entropy against matched labels, with its analytic gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .matching import MatchedLabel
from .raster import BinaryMap, ConfidenceMap


@dataclass(frozen=True)
class LossConfig:
    """beta weights the matched loss in the total; eps clamps predictions away
    from {0, 1} so saturated pixels keep a finite loss and gradient."""

    beta: float = 1.0
    eps: float = 1e-7

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {self.eps}")


@dataclass(frozen=True)
class LossValue:
    """Scalar loss (nats) and the per-pixel d(loss)/d(confidence) grid."""

    value: float
    gradient: np.ndarray


def _label_bits(label: Union[MatchedLabel, BinaryMap]) -> np.ndarray:
    return (label.label if isinstance(label, MatchedLabel) else label).bits


def bce_matched(
    pred: ConfidenceMap,
    labels: Sequence[Union[MatchedLabel, BinaryMap]],
    cfg: LossConfig,
) -> LossValue:
    """Sum of per-pixel BCE over all labels, plus the gradient w.r.t. pred.

    Sums (never averages) over pixels and annotations; labels are treated as
    constants, so no gradient flows through the matching that produced them.
    """
    if not labels:
        raise ValueError("at least one label is required")
    clamped = np.clip(pred.values, cfg.eps, 1.0 - cfg.eps)
    total = 0.0
    grad = np.zeros_like(clamped)
    for label in labels:
        bits = _label_bits(label)
        if bits.shape != clamped.shape:
            raise ValueError(
                f"label shape {bits.shape} does not match prediction {clamped.shape}"
            )
        g = bits.astype(np.float64)
        total -= float(np.sum(g * np.log(clamped) + (1.0 - g) * np.log1p(-clamped)))
        grad += (clamped - g) / (clamped * (1.0 - clamped))
    return LossValue(value=total, gradient=grad)


def total_loss(l_matched: float, l_model: float, cfg: LossConfig) -> float:
    """Weighted combination beta * matched-loss + model-loss."""
    if not (math.isfinite(l_matched) and math.isfinite(l_model)):
        raise ValueError("loss terms must be finite")
    return cfg.beta * l_matched + l_model
