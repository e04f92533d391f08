"""Matching-based crisp-edge supervision and evaluation toolkit."""

from .raster import (BinaryMap, ConfidenceMap, PixelCoord, TileLayout,
                     box_blur5, manhattan, merge_tiles, threshold, tile)
from .matching import (CandidateEdge, MatchConfig, MatchResult, MatchedLabel,
                       build_candidates, build_matched_label,
                       generate_supervision, matchable_pred_pixels,
                       solve_assignment)
from .postprocess import NmsConfig, nms, standard_postprocess, thin
from .metrics import (CorrespondenceCounts, EvalReport, PrCurve, THRESHOLDS,
                      average_crispness, correspond, pr_curve, summarize)
from .loss import LossConfig, LossValue, bce_matched, total_loss
from .io import (Manifest, ManifestEntry, ManifestError, MapFormatError,
                 MapValidationError, load_manifest, read_map, write_map)

__version__ = "0.1.0"

__all__ = [
    "BinaryMap", "ConfidenceMap", "PixelCoord", "TileLayout",
    "box_blur5", "manhattan", "merge_tiles", "threshold", "tile",
    "CandidateEdge", "MatchConfig", "MatchResult", "MatchedLabel",
    "build_candidates", "build_matched_label", "generate_supervision",
    "matchable_pred_pixels", "solve_assignment",
    "NmsConfig", "nms", "standard_postprocess", "thin",
    "CorrespondenceCounts", "EvalReport", "PrCurve", "THRESHOLDS",
    "average_crispness", "correspond", "pr_curve", "summarize",
    "LossConfig", "LossValue", "bce_matched", "total_loss",
    "Manifest", "ManifestEntry", "ManifestError", "MapFormatError",
    "MapValidationError", "load_manifest", "read_map", "write_map",
    "__version__",
]
