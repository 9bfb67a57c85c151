"""Tests for odoscale.cli module."""

import json

import pytest

import odoscale
from odoscale import __version__
from odoscale.cli import EXIT_NUMERIC, EXIT_OK, EXIT_PARSE, EXIT_USAGE, build_parser, main
from odoscale.core.formats import read_manifest_file

IDENTITY_POSE = "1 0 0 0 0 1 0 0 0 0 1 0"


def synth(tmp_path, name="seq", *extra):
    gt = tmp_path / f"{name}.gt.txt"
    pred = tmp_path / f"{name}.txt"
    assert main(["synth", "--gt", str(gt), "--pred", str(pred), *extra]) == EXIT_OK
    return gt, pred


def evaluate_json(capsys, gt, pred, *extra):
    capsys.readouterr()
    assert main(["evaluate", "--gt", str(gt), "--pred", str(pred), "--format", "json", *extra]) == EXIT_OK
    return json.loads(capsys.readouterr().out)


class TestParser:
    """Tests for argument parsing."""

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_missing_required_argument(self):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--gt", "a.txt"])
        assert exc.value.code == EXIT_USAGE

    def test_command_required(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_USAGE

    def test_defaults(self):
        args = build_parser().parse_args(["filter", "--pred", "p.txt", "--out", "kept.jsonl"])
        assert args.tau == -5.668
        assert args.seed == 0
        assert args.method == "mc"

    def test_debug_goes_to_stderr(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setattr(odoscale, "DEBUG", False)
        assert main(["synth", "--debug", "--gt", str(tmp_path / "g.txt"), "--pred", str(tmp_path / "p.txt")]) == EXIT_OK
        captured = capsys.readouterr()
        assert "[DEBUG] odoscale v" in captured.err
        assert "[DEBUG]" not in captured.out

    def test_lengths_list(self):
        args = build_parser().parse_args(["evaluate", "--gt", "g", "--pred", "p", "--lengths", "10,20"])
        assert args.lengths == (10.0, 20.0)


class TestEvaluate:
    """Tests for the evaluate command."""

    def test_exact_prediction(self, tmp_path, capsys):
        gt, pred = synth(tmp_path)
        data = evaluate_json(capsys, gt, pred)
        (seq,) = data["sequences"]
        assert seq["name"] == "seq"
        assert seq["t_rel"] == pytest.approx(0.0, abs=1e-9)
        assert seq["se"] == 0.0
        assert set(data["inputs"]) == {str(gt), str(pred)}
        assert "timing" not in data

    def test_scaled_prediction(self, tmp_path, capsys):
        gt, pred = synth(tmp_path, "seq", "--scale-noise", "0.1")
        seq = evaluate_json(capsys, gt, pred)["sequences"][0]
        assert seq["t_rel"] == pytest.approx(10.0, rel=1e-9)
        assert seq["se"] == pytest.approx(1.0 - 1.0 / 1.1, rel=1e-9)

    def test_zigzag_and_alignment(self, tmp_path, capsys):
        gt, pred = synth(tmp_path, "zz", "--shape", "zigzag_supp_fig1", "--schedule", "prediction1")
        seq = evaluate_json(capsys, gt, pred, "--lengths", "99")["sequences"][0]
        assert seq["se"] == pytest.approx(1.0 / 3.0, abs=1e-4)
        assert seq["t_rel"] == pytest.approx(0.0, abs=1e-9)

        aligned = evaluate_json(capsys, gt, pred, "--lengths", "99", "--align", "scale-per-frame")
        assert aligned["sequences"][0]["se"] == pytest.approx(0.0, abs=1e-12)
        assert aligned["config"]["align"] == "scale-per-frame"

    def test_zigzag_alias(self, tmp_path, capsys):
        gt, pred = synth(tmp_path, "zz", "--shape", "zigzag", "--schedule", "prediction2")
        seq = evaluate_json(capsys, gt, pred, "--lengths", "99")["sequences"][0]
        assert seq["se"] == pytest.approx(0.30, abs=1e-4)

    def test_several_sequences(self, tmp_path, capsys):
        gt_a, pred_a = synth(tmp_path, "a")
        gt_b, pred_b = synth(tmp_path, "b", "--scale-noise", "0.1")
        capsys.readouterr()
        code = main([
            "evaluate", "--gt", str(gt_a), "--pred", str(pred_a), "--gt", str(gt_b), "--pred", str(pred_b),
            "--format", "csv", "--workers", "2",
        ])
        assert code == EXIT_OK
        rows = capsys.readouterr().out.splitlines()
        assert [row.split(",")[0] for row in rows[1:]] == ["a", "b", "average"]

    def test_report_file_is_reproducible(self, tmp_path, capsys):
        gt, pred = synth(tmp_path, "seq", "--rot-jitter", "0.01", "--seed", "3")
        first, second = tmp_path / "r1.json", tmp_path / "r2.json"
        for out in (first, second):
            assert main(["evaluate", "--gt", str(gt), "--pred", str(pred), "--format", "json", "--out", str(out)]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()

    def test_timing_opt_in(self, tmp_path, capsys):
        gt, pred = synth(tmp_path)
        assert "timing" in evaluate_json(capsys, gt, pred, "--timing")

    def test_mismatched_file_counts(self, tmp_path, capsys):
        gt, pred = synth(tmp_path)
        code = main(["evaluate", "--gt", str(gt), "--gt", str(gt), "--pred", str(pred)])
        assert code == EXIT_USAGE

    def test_parse_error(self, tmp_path, capsys):
        gt, pred = synth(tmp_path)
        bad = tmp_path / "bad.txt"
        bad.write_text(IDENTITY_POSE + "\n1 0 0 0 0 1 0 0 0 0 1\n")
        assert main(["evaluate", "--gt", str(bad), "--pred", str(pred)]) == EXIT_PARSE
        err = capsys.readouterr().err
        assert str(bad) in err
        assert "line 2" in err

    def test_length_mismatch(self, tmp_path, capsys):
        gt, _ = synth(tmp_path, "long")
        _, pred = synth(tmp_path, "short", "--frames", "11")
        assert main(["evaluate", "--gt", str(gt), "--pred", str(pred)]) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert main(["evaluate", "--gt", str(tmp_path / "nope"), "--pred", str(tmp_path / "nope")]) == EXIT_USAGE


class TestFilter:
    """Tests for the filter command."""

    def test_uniform_psi_rejected(self, tmp_path, capsys):
        _, pred = synth(tmp_path, "seq", "--frames", "6", "--concentration", "0")
        out = tmp_path / "kept.jsonl"
        assert main(["filter", "--pred", str(pred), "--out", str(out)]) == EXIT_OK
        assert len(read_manifest_file(out)) == 0
        rejected = read_manifest_file(tmp_path / "kept.rejected.jsonl")
        assert len(rejected) == 5
        assert all(r.entropy == 0.0 and r.selected is False for r in rejected.records)
        assert "kept 0/5" in capsys.readouterr().out

    def test_huge_threshold_keeps_all(self, tmp_path):
        _, pred = synth(tmp_path, "seq", "--frames", "6")
        out = tmp_path / "kept.jsonl"
        assert main(["filter", "--pred", str(pred), "--out", str(out), "--tau", "1e9", "--samples", "2000"]) == EXIT_OK
        kept = read_manifest_file(out)
        assert kept.ids == ["000001", "000002", "000003", "000004", "000005"]
        assert kept.provenance["filter"]["tau_u"] == 1e9

    def test_reproducible(self, tmp_path):
        _, pred = synth(tmp_path, "seq", "--frames", "6", "--rot-jitter", "0.1")
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.jsonl"
            args = ["filter", "--pred", str(pred), "--out", str(out), "--samples", "2000", "--seed", "5"]
            assert main(args) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_quadrature_method(self, tmp_path):
        _, pred = synth(tmp_path, "seq", "--frames", "4", "--concentration", "50")
        out = tmp_path / "kept.jsonl"
        assert main(["filter", "--pred", str(pred), "--out", str(out), "--method", "quadrature"]) == EXIT_OK
        records = read_manifest_file(out).records + read_manifest_file(tmp_path / "kept.rejected.jsonl").records
        assert len({r.entropy for r in records}) == 1

    def test_numeric_failure(self, tmp_path, capsys):
        pred = tmp_path / "sharp.txt"
        pred.write_text("a " + IDENTITY_POSE + " 1e6 0 0 0 1e6 0 0 0 1e6\n")
        code = main(["filter", "--pred", str(pred), "--out", str(tmp_path / "k.jsonl"), "--samples", "16"])
        assert code == EXIT_NUMERIC
        assert "numeric failure" in capsys.readouterr().err

    def test_pose_file_is_not_predictions(self, tmp_path):
        gt, _ = synth(tmp_path)
        assert main(["filter", "--pred", str(gt), "--out", str(tmp_path / "k.jsonl")]) == EXIT_PARSE

    @pytest.mark.parametrize("method", ["quadrature", "mc"])
    def test_confident_prediction_is_scored(self, tmp_path, method):
        pred = tmp_path / "confident.txt"
        pred.write_text("a " + IDENTITY_POSE + " 200 0 0 0 200 0 0 0 200\n")
        out = tmp_path / "k.jsonl"
        code = main(["filter", "--pred", str(pred), "--out", str(out), "--method", method, "--samples", "20000"])
        assert code == EXIT_OK
        records = read_manifest_file(out).records + read_manifest_file(tmp_path / "k.rejected.jsonl").records
        assert len(records) == 1
        if method == "quadrature":
            assert records[0].selected is True
            assert records[0].entropy == pytest.approx(-9.1, abs=0.05)

    def test_stdout_needs_rejected_path(self, tmp_path, capsys):
        _, pred = synth(tmp_path, "seq", "--frames", "3")
        capsys.readouterr()
        assert main(["filter", "--pred", str(pred), "--out", "-", "--samples", "2000"]) == EXIT_USAGE
        assert "--rejected" in capsys.readouterr().err

    def test_stdout_keeps_summary_off_the_manifest(self, tmp_path, capsys):
        _, pred = synth(tmp_path, "seq", "--frames", "3")
        rejected = tmp_path / "rejected.jsonl"
        capsys.readouterr()
        args = ["filter", "--pred", str(pred), "--out", "-", "--rejected", str(rejected), "--tau", "1e9", "--samples", "2000"]
        assert main(args) == EXIT_OK
        captured = capsys.readouterr()
        assert "kept 2/2" in captured.err
        assert "records (tau_u=" not in captured.out
        assert all(json.loads(line) for line in captured.out.splitlines())
        assert len(read_manifest_file(rejected)) == 0


class TestMix:
    """Tests for the mix command."""

    def test_labeled_poses_plus_pseudo(self, tmp_path, capsys):
        labeled, _ = synth(tmp_path, "lab", "--frames", "4")
        _, pred = synth(tmp_path, "ps", "--frames", "3")
        kept = tmp_path / "kept.jsonl"
        assert main(["filter", "--pred", str(pred), "--out", str(kept), "--tau", "1e9", "--samples", "2000"]) == EXIT_OK

        out = tmp_path / "mixed.jsonl"
        capsys.readouterr()
        assert main(["mix", "--labeled", str(labeled), "--pseudo", str(kept), "--out", str(out)]) == EXIT_OK
        mixed = read_manifest_file(out)
        assert mixed.source == "mixed"
        assert mixed.ids == [
            "labeled:000001", "labeled:000002", "labeled:000003", "pseudo:000001", "pseudo:000002",
        ]
        assert "= 5 records" in capsys.readouterr().out


class TestAlign:
    """Tests for the align command."""

    def test_aligned_prediction_has_no_scale_error(self, tmp_path, capsys):
        gt, pred = synth(tmp_path, "seq", "--scale-noise", "0.5", "--rot-jitter", "0.01")
        aligned = tmp_path / "aligned.txt"
        assert main(["align", "--gt", str(gt), "--pred", str(pred), "--out", str(aligned)]) == EXIT_OK
        seq = evaluate_json(capsys, gt, aligned)["sequences"][0]
        assert seq["se"] == pytest.approx(0.0, abs=1e-9)


class TestPlot:
    """Tests for the plot command."""

    def test_reproducible_svg(self, tmp_path):
        gt, pred = synth(tmp_path, "seq", "--shape", "circle", "--scale-noise", "0.1")
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        for out in (a, b):
            assert main(["plot", "--gt", str(gt), "--pred", str(pred), "--out", str(out)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
