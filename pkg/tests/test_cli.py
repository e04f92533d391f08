import json

import numpy as np
import pytest

from crisp_match.cli import build_parser, main
from crisp_match.io import read_grid64, read_map, write_map
from crisp_match.loss import LossConfig, bce_matched
from crisp_match.matching import MatchConfig, generate_supervision
from crisp_match.postprocess import NmsConfig, thin
from crisp_match.raster import BinaryMap, ConfidenceMap, threshold

from oracles import random_instance


@pytest.fixture
def instance(tmp_path):
    rng = np.random.default_rng(0)
    pred, gt = random_instance(rng, 40, 32, pred_density=0.08, gt_density=0.05)
    pred_path = tmp_path / "pred.emap"
    gt_path = tmp_path / "gt.pgm"
    write_map(pred, pred_path, "emap")
    write_map(gt, gt_path, "pgm")
    return pred_path, gt_path, pred, gt


def test_match_cli_matches_library(tmp_path, instance):
    pred_path, gt_path, pred, gt = instance
    out = tmp_path / "label.pgm"
    status = main(["match", "--pred", str(pred_path), "--gt", str(gt_path),
                   "--tau-c", "0.3", "--tau-d", "4", "--alpha", "2",
                   "--out", str(out)])
    assert status == 0
    got = threshold(read_map(out), 0.5)
    expected = generate_supervision(read_map(pred_path), gt,
                                    MatchConfig(0.3, 4, 2.0)).label
    assert np.array_equal(got.bits, expected.bits)


def test_match_cli_deterministic(tmp_path, instance):
    pred_path, gt_path, _, _ = instance
    outs = []
    for name in ("a.pgm", "b.pgm"):
        out = tmp_path / name
        assert main(["match", "--pred", str(pred_path), "--gt", str(gt_path),
                     "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_match_cli_tiles(tmp_path, instance):
    pred_path, gt_path, _, _ = instance
    out = tmp_path / "tiled.pgm"
    status = main(["match", "--pred", str(pred_path), "--gt", str(gt_path),
                   "--tiles", "2x2", "--out", str(out)])
    assert status == 0
    assert read_map(out).width == 40


def test_postprocess_cli(tmp_path):
    values = np.zeros((9, 12))
    values[4, 2:10] = 0.9
    src = tmp_path / "in.emap"
    write_map(ConfidenceMap(values), src, "emap")
    out = tmp_path / "out.pgm"
    status = main(["postprocess", "--pred", str(src), "--threshold", "0.5",
                   "--nms-s", "0", "--out", str(out)])
    assert status == 0
    got = threshold(read_map(out), 0.5)
    assert np.array_equal(got.bits, (values >= 0.5).astype(np.uint8))


def make_eval_tree(tmp_path, n_images=2):
    rng = np.random.default_rng(1)
    lines = []
    for i in range(n_images):
        bits = np.zeros((24, 30), dtype=np.uint8)
        bits[int(rng.integers(8, 16)), 6:24] = 1
        gt = BinaryMap(bits)
        crisp = thin(gt)
        pred = ConfidenceMap(0.9 * crisp.bits.astype(np.float64))
        write_map(pred, tmp_path / f"p{i}.emap", "emap")
        write_map(gt, tmp_path / f"g{i}.pgm", "pgm")
        lines.append(f"p{i}.emap\tg{i}.pgm")
    manifest = tmp_path / "m.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def test_eval_cli_seval_perfect(tmp_path):
    manifest = make_eval_tree(tmp_path)
    report_path = tmp_path / "r.json"
    status = main(["eval", "--manifest", str(manifest), "--protocol", "seval",
                   "--tolerance", "2", "--nms-s", "0",
                   "--report", str(report_path)])
    assert status == 0
    report = json.loads(report_path.read_text())
    assert report["protocol"] == "seval"
    assert report["ods"] == pytest.approx(1.0, abs=1e-12)
    assert report["ois"] == pytest.approx(1.0, abs=1e-12)
    assert len(report["thresholds"]) == 100
    assert len(report["dataset_curve"]) == 100
    assert {"id", "best_f1", "ac"} <= set(report["images"][0])


def test_eval_cli_deterministic(tmp_path):
    manifest = make_eval_tree(tmp_path)
    reports = []
    for name in ("r1.json", "r2.json"):
        path = tmp_path / name
        assert main(["eval", "--manifest", str(manifest), "--protocol", "ceval",
                     "--tolerance", "2", "--report", str(path)]) == 0
        reports.append(path.read_bytes())
    assert reports[0] == reports[1]


def test_loss_cli(tmp_path, capsys):
    pred = ConfidenceMap(np.array([[0.9, 0.1]]))
    label = BinaryMap(np.array([[1, 0]], dtype=np.uint8))
    pred_path = tmp_path / "p.emap"
    label_path = tmp_path / "l.pgm"
    write_map(pred, pred_path, "emap")
    write_map(label, label_path, "pgm")
    grad_path = tmp_path / "g.gr64"
    status = main(["loss", "--pred", str(pred_path), "--label", str(label_path),
                   "--beta", "2", "--model-loss", "0.5",
                   "--grad-out", str(grad_path)])
    assert status == 0
    payload = json.loads(capsys.readouterr().out)
    expected = bce_matched(read_map(pred_path), [label], LossConfig()).value
    assert payload["matched"] == pytest.approx(expected, rel=1e-9)
    assert payload["total"] == pytest.approx(2 * expected + 0.5, rel=1e-9)
    grad = read_grid64(grad_path)
    assert grad.shape == (1, 2)


def test_exit_codes(tmp_path, instance, capsys):
    pred_path, gt_path, _, _ = instance
    # missing input file -> I/O error
    assert main(["match", "--pred", str(tmp_path / "nope.emap"),
                 "--gt", str(gt_path), "--out", str(tmp_path / "o.pgm")]) == 2
    # invalid parameter value -> validation error
    assert main(["match", "--pred", str(pred_path), "--gt", str(gt_path),
                 "--tau-c", "0", "--out", str(tmp_path / "o.pgm")]) == 1
    # malformed manifest -> validation error
    bad = tmp_path / "bad.tsv"
    bad.write_text("only_pred.emap\n", encoding="utf-8")
    assert main(["eval", "--manifest", str(bad),
                 "--report", str(tmp_path / "r.json")]) == 1
    capsys.readouterr()


def test_threads_env_default(tmp_path, monkeypatch):
    manifest = make_eval_tree(tmp_path, n_images=1)
    monkeypatch.setenv("CRISP_MATCH_THREADS", "2")
    report = tmp_path / "r.json"
    assert main(["eval", "--manifest", str(manifest), "--tolerance", "2",
                 "--report", str(report)]) == 0
    monkeypatch.setenv("CRISP_MATCH_THREADS", "banana")
    assert main(["eval", "--manifest", str(manifest), "--tolerance", "2",
                 "--report", str(report)]) == 1


def test_help_lists_flags():
    parser = build_parser()
    sub = {a.dest: a for a in parser._actions}["command"]
    expectations = {
        "match": ["--tau-c", "--tau-d", "--alpha", "--tiles", "default: 0.01"],
        "postprocess": ["--nms-r", "--nms-s", "--nms-e", "default: 1.01"],
        "eval": ["--protocol", "--tolerance", "--distance", "--threads"],
        "loss": ["--beta", "--model-loss", "--grad-out"],
        "bench": ["--sizes", "--trials", "--json"],
    }
    for name, flags in expectations.items():
        text = sub.choices[name].format_help()
        for flag in flags:
            assert flag in text, f"{name} help is missing {flag}"


def test_bench_cli_smoke(tmp_path, capsys):
    out = tmp_path / "bench.json"
    status = main(["bench", "--scenario", "scaling", "--sizes", "5,10",
                   "--trials", "3", "--json", str(out)])
    assert status == 0
    table = capsys.readouterr().out
    assert "assignment" in table
    payload = json.loads(out.read_text())
    assert len(payload["records"]) == 2
    assert payload["scaling_slope"] is not None
