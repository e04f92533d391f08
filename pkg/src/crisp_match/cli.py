"""Command-line front end: match, postprocess, eval, loss, and bench.

Exit codes: 0 on success, 1 on validation or parse errors, 2 on I/O errors.
Diagnostics go to stderr; results go to files or stdout. Identical
invocations on identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import io as mapio
from .loss import LossConfig, bce_matched, total_loss
from .matching import MatchConfig, generate_supervision
from .metrics import (THRESHOLDS, average_crispness, pr_curve, summarize)
from .postprocess import NmsConfig, standard_postprocess
from .raster import threshold


def _json_text(obj, indent: int = 0) -> str:
    """Serialize with floats at 17 significant digits, deterministically."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}"{k}": {_json_text(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [inner + _json_text(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if obj is None:
        return "null"
    return '"' + str(obj).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _write_json(obj, path) -> None:
    Path(path).write_text(_json_text(obj) + "\n", encoding="utf-8")


def _out_format(path) -> str:
    return "emap" if str(path).lower().endswith(".emap") else "pgm"


def _read_binary(path):
    return threshold(mapio.read_map(path), 0.5)


def _parse_tiles(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except Exception:
        raise ValueError(f"--tiles expects RxC (e.g. 2x2), got {text!r}")


def _default_threads() -> int:
    raw = os.environ.get("CRISP_MATCH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"CRISP_MATCH_THREADS must be an integer, got {raw!r}")


def _add_nms_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nms-r", type=int, default=1, help="suppression radius in pixels (default: 1)")
    p.add_argument("--nms-s", type=int, default=5, help="border fade size in pixels (default: 5)")
    p.add_argument("--nms-e", type=float, default=1.01, help="edge magnitude multiplier (default: 1.01)")


def _nms_cfg(args) -> NmsConfig:
    return NmsConfig(r=args.nms_r, s=args.nms_s, e=args.nms_e)


def _cmd_match(args) -> int:
    pred = mapio.read_map(args.pred)
    gt = _read_binary(args.gt)
    cfg = MatchConfig(tau_c=args.tau_c, tau_d=args.tau_d, alpha=args.alpha)
    tiling = _parse_tiles(args.tiles) if args.tiles else None
    label = generate_supervision(pred, gt, cfg, tiling=tiling)
    mapio.write_map(label.label, args.out, _out_format(args.out))
    return 0


def _cmd_postprocess(args) -> int:
    pred = mapio.read_map(args.pred)
    crisp = standard_postprocess(pred, _nms_cfg(args), args.threshold)
    mapio.write_map(crisp, args.out, _out_format(args.out))
    return 0


def _cmd_eval(args) -> int:
    manifest = mapio.load_manifest(args.manifest)
    dataset = []
    for entry in manifest.entries:
        pred = mapio.read_map(entry.prediction)
        gts = [_read_binary(p) for p in entry.ground_truths]
        dataset.append((pred, gts))
    nms_cfg = _nms_cfg(args)
    dataset_curve, per_image = pr_curve(
        dataset, args.protocol, nms_cfg, args.tolerance,
        distance_mode=args.distance, threads=args.threads,
    )
    image_ac = [average_crispness(pred, nms_cfg) for pred, _ in dataset]
    report = summarize(dataset_curve, per_image, float(np.mean(image_ac)),
                       args.protocol, args.tolerance)
    payload = {
        "protocol": report.protocol,
        "tolerance": report.tolerance,
        "ods": report.ods,
        "ois": report.ois,
        "ap": report.ap,
        "ac": report.ac,
        "thresholds": list(THRESHOLDS),
        "dataset_curve": [
            {"t": p.t, "tp": p.tp, "fp": p.fp, "fn": p.fn,
             "p": p.precision, "r": p.recall, "f1": p.f1}
            for p in report.dataset_curve.points
        ],
        "images": [
            {"id": entry.image_id, "best_f1": curve.best_f1(), "ac": ac}
            for entry, curve, ac in zip(manifest.entries, per_image, image_ac)
        ],
    }
    _write_json(payload, args.report)
    return 0


def _cmd_loss(args) -> int:
    pred = mapio.read_map(args.pred)
    labels = [_read_binary(p) for p in args.label]
    cfg = LossConfig(beta=args.beta, eps=args.eps)
    result = bce_matched(pred, labels, cfg)
    total = total_loss(result.value, args.model_loss, cfg)
    payload = {
        "matched": result.value,
        "model": args.model_loss,
        "beta": args.beta,
        "total": total,
    }
    if args.grad_out:
        mapio.write_grid64(result.gradient, args.grad_out)
        payload["gradient"] = str(args.grad_out)
    if args.out:
        _write_json(payload, args.out)
    else:
        sys.stdout.write(_json_text(payload) + "\n")
    return 0


def _cmd_bench(args) -> int:
    results = {}
    records = []
    if args.scenario in ("all", "scaling"):
        sizes = [int(s) for s in args.sizes.split(",")]
        scaling_records, slope = bench_mod.scaling_bench(sizes, trials=args.trials, seed=args.seed)
        records.extend(scaling_records)
        results["scaling_slope"] = slope
    if args.scenario in ("all", "pipeline"):
        rng = np.random.default_rng(args.seed)
        dataset = [
            bench_mod.synthetic_edge_image(args.width, args.height, rng)
            for _ in range(args.images)
        ]
        cfg = MatchConfig(tau_c=args.tau_c, tau_d=args.tau_d, alpha=args.alpha)
        records.extend(bench_mod.pipeline_compare(dataset, _nms_cfg(args), cfg,
                                                  trials=args.trials, threads=args.threads))

    header = f"{'scenario':<16}{'params':<28}{'median_s':>12}{'spread_s':>12}{'reps':>6}"
    sys.stdout.write(header + "\n" + "-" * len(header) + "\n")
    for rec in records:
        params = ",".join(f"{k}={v}" for k, v in rec.params.items())
        sys.stdout.write(
            f"{rec.scenario:<16}{params:<28}{rec.seconds:>12.4f}{rec.spread:>12.4f}{rec.repetitions:>6}\n"
        )
    if "scaling_slope" in results and results["scaling_slope"] is not None:
        sys.stdout.write(f"log-log scaling slope: {results['scaling_slope']:.3f}\n")

    if args.json:
        payload = {
            "records": [
                {"scenario": r.scenario, "params": r.params, "median_s": r.seconds,
                 "times_s": list(r.times), "repetitions": r.repetitions}
                for r in records
            ],
        }
        if "scaling_slope" in results:
            payload["scaling_slope"] = results["scaling_slope"]
        _write_json(payload, args.json)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crisp-match",
        description="Matching-based crisp-edge supervision, post-processing, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="generate a matched supervision label")
    p.add_argument("--pred", required=True, help="prediction map (EMAP or PGM)")
    p.add_argument("--gt", required=True, help="ground-truth map (PGM or EMAP, binarized at 0.5)")
    p.add_argument("--tau-c", type=float, default=0.01, help="confidence threshold (default: 0.01)")
    p.add_argument("--tau-d", type=int, default=4, help="distance threshold in pixels (default: 4)")
    p.add_argument("--alpha", type=float, default=25.0, help="confidence weight (default: 25)")
    p.add_argument("--tiles", default=None, help="optional RxC independent tiling (e.g. 2x2)")
    p.add_argument("--out", required=True, help="output label path (.pgm or .emap)")
    p.set_defaults(fn=_cmd_match)

    p = sub.add_parser("postprocess", help="NMS + threshold + thinning")
    p.add_argument("--pred", required=True, help="prediction map (EMAP or PGM)")
    p.add_argument("--threshold", type=float, default=0.5, help="binarization threshold (default: 0.5)")
    _add_nms_flags(p)
    p.add_argument("--out", required=True, help="output path (.pgm or .emap)")
    p.set_defaults(fn=_cmd_postprocess)

    p = sub.add_parser("eval", help="ODS/OIS/AP/AC over a manifest")
    p.add_argument("--manifest", required=True, help="TSV manifest: prediction, then GT paths")
    p.add_argument("--protocol", choices=("seval", "ceval"), default="ceval",
                   help="seval crisps predictions first; ceval uses raw maps (default: ceval)")
    p.add_argument("--tolerance", type=float, default=4.0,
                   help="correspondence distance threshold in pixels (default: 4)")
    p.add_argument("--distance", choices=("euclidean", "manhattan"), default="euclidean",
                   help="correspondence metric (default: euclidean)")
    p.add_argument("--threads", type=int, default=None,
                   help="image-level worker cap (default: $CRISP_MATCH_THREADS or 1)")
    _add_nms_flags(p)
    p.add_argument("--report", required=True, help="output JSON report path")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("loss", help="matched BCE loss and gradient")
    p.add_argument("--pred", required=True, help="prediction map (EMAP or PGM)")
    p.add_argument("--label", action="append", required=True,
                   help="matched label map; repeat for multiple annotations")
    p.add_argument("--beta", type=float, default=1.0, help="matched-loss weight (default: 1)")
    p.add_argument("--eps", type=float, default=1e-7, help="confidence clamp (default: 1e-7)")
    p.add_argument("--model-loss", type=float, default=0.0,
                   help="base detector loss to fold into the total (default: 0)")
    p.add_argument("--grad-out", default=None, help="optional GR64 gradient output path")
    p.add_argument("--out", default=None, help="JSON output path (default: stdout)")
    p.set_defaults(fn=_cmd_loss)

    p = sub.add_parser("bench", help="solver scaling and pipeline timing")
    p.add_argument("--scenario", choices=("all", "scaling", "pipeline"), default="all")
    p.add_argument("--sizes", default="50,100,200,400", help="matched-set sizes (default: 50,100,200,400)")
    p.add_argument("--trials", type=int, default=3, help="repetitions per scenario (default: 3)")
    p.add_argument("--images", type=int, default=10, help="synthetic image count (default: 10)")
    p.add_argument("--width", type=int, default=321, help="synthetic image width (default: 321)")
    p.add_argument("--height", type=int, default=481, help="synthetic image height (default: 481)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    p.add_argument("--threads", type=int, default=1,
                   help="image-level workers for the pipeline scenarios (default: 1)")
    p.add_argument("--tau-c", type=float, default=0.2, help="confidence threshold (default: 0.2)")
    p.add_argument("--tau-d", type=int, default=4, help="distance threshold (default: 4)")
    p.add_argument("--alpha", type=float, default=25.0, help="confidence weight (default: 25)")
    _add_nms_flags(p)
    p.add_argument("--json", default=None, help="optional machine-readable output path")
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "threads", None) is None and args.command == "eval":
            args.threads = _default_threads()
        return args.fn(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
