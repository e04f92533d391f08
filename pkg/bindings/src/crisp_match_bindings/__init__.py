"""Training-loop entry points on plain numpy buffers.

Two functions wrap the supervision and loss core so a dataloader worker or a
custom autograd hook can call them without touching the library's map types:
`py_generate_supervision` produces the matched label for a raw prediction, and
`py_loss_and_grad` returns the (beta-weighted) matched BCE together with its
per-pixel gradient, ready for injection into a framework's backward pass.

Buffers are copied once on entry and never mutated; both functions are pure,
so concurrent calls from multiple host threads on distinct buffers are safe
(the heavy lifting happens in compiled numpy/scipy sections that drop the
interpreter lock).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from crisp_match import (BinaryMap, ConfidenceMap, LossConfig, MatchConfig,
                         bce_matched, generate_supervision)

__version__ = "0.1.0"

__all__ = ["py_generate_supervision", "py_loss_and_grad", "__version__"]


def _as_confidence(buf, name: str) -> ConfidenceMap:
    arr = np.asarray(buf)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (H, W) buffer, got shape {arr.shape}")
    if arr.dtype not in (np.float32, np.float64):
        raise TypeError(f"{name} must be float32 or float64, got {arr.dtype}")
    try:
        return ConfidenceMap(arr.astype(np.float64))
    except ValueError as exc:
        raise ValueError(f"{name}: {exc}") from exc


def _as_binary(buf, name: str) -> BinaryMap:
    arr = np.asarray(buf)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D (H, W) buffer, got shape {arr.shape}")
    if arr.dtype not in (np.uint8, np.bool_):
        raise TypeError(f"{name} must be uint8 or bool, got {arr.dtype}")
    try:
        return BinaryMap(arr)
    except ValueError as exc:
        raise ValueError(f"{name}: {exc}") from exc


def py_generate_supervision(
    pred: np.ndarray,
    gt: np.ndarray,
    tau_c: float = 0.01,
    tau_d: int = 4,
    alpha: float = 25.0,
    tiles: Optional[tuple[int, int]] = None,
) -> np.ndarray:
    """Matched supervision label for a raw prediction.

    pred: (H, W) float32/float64 confidences in [0, 1]; gt: (H, W) uint8/bool
    in {0, 1}. Returns a fresh (H, W) uint8 {0, 1} buffer, bit-identical to
    the `crisp-match match` CLI output on the same inputs. `tiles=(rows,
    cols)` matches non-overlapping patches independently to bound memory.
    """
    pred_map = _as_confidence(pred, "pred")
    gt_map = _as_binary(gt, "gt")
    if (pred_map.height, pred_map.width) != (gt_map.height, gt_map.width):
        raise ValueError(
            f"shape mismatch: pred {pred_map.height}x{pred_map.width} vs "
            f"gt {gt_map.height}x{gt_map.width}"
        )
    cfg = MatchConfig(tau_c=tau_c, tau_d=tau_d, alpha=alpha)
    tiling = tuple(int(t) for t in tiles) if tiles is not None else None
    label = generate_supervision(pred_map, gt_map, cfg, tiling=tiling)
    return label.label.bits.copy()


def py_loss_and_grad(
    pred: np.ndarray,
    labels: Sequence[np.ndarray],
    beta: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Beta-weighted matched BCE and its per-pixel gradient.

    pred as in py_generate_supervision; labels is a non-empty sequence of
    (H, W) uint8/bool supervision maps (one per annotation). Returns
    (beta * loss, beta * d(loss)/d(pred)) with the gradient in a fresh
    (H, W) float64 buffer; the labels carry no gradient.
    """
    pred_map = _as_confidence(pred, "pred")
    label_maps = [_as_binary(l, f"labels[{k}]") for k, l in enumerate(labels)]
    cfg = LossConfig(beta=beta)
    out = bce_matched(pred_map, label_maps, cfg)
    return beta * out.value, beta * out.gradient
