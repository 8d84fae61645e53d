import json

import numpy as np
import pandas as pd
import pytest

from conftest import shifted_pair
from rigfix.camera_model import Intrinsics
from rigfix.cli import EXIT_CONFIG, EXIT_FALLBACK, EXIT_IO, EXIT_OK, main
from rigfix.correspondence import GrayImage
from rigfix.formats import solution_report, write_json
from rigfix.gating import GateDecision, GateOutcome, GateReason
from rigfix.image_io import save_gray
from rigfix.solver import RectificationSolution

K = Intrinsics(f=60.0, cx=32.0, cy=24.0)


def write_report(path, sol, decision):
    write_json(path, solution_report(sol, decision, K, K, 0 if sol is None else 200))


class TestSimulate:
    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert main(["simulate", "-d", str(tmp_path / name), "--seed", "5", "--num-points", "50"]) == EXIT_OK
        for fname in ("matches.csv", "scene.json"):
            assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()

    def test_environment_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RIGFIX_SEED", "12")
        assert main(["simulate", "-d", str(tmp_path), "--num-points", "10"]) == EXIT_OK
        assert json.loads((tmp_path / "scene.json").read_text())["config"]["seed"] == 12

    def test_batch(self, tmp_path):
        argv = ["simulate", "-d", str(tmp_path), "--batch", "3", "--num-points", "200", "--seed", "8"]
        assert main(argv) == EXIT_OK
        assert sorted(p.name for p in tmp_path.glob("scenario_*.csv")) == [
            "scenario_0001.csv", "scenario_0002.csv", "scenario_0003.csv",
        ]
        table = pd.read_csv(tmp_path / "table.csv")
        assert table["model"].tolist() == ["3-param", "4-param"]
        assert (table["total"] == 3).all()

        assert main(["compare-models", str(tmp_path), "-o", str(tmp_path / "again.csv")]) == EXIT_OK
        again = pd.read_csv(tmp_path / "again.csv")
        assert again["model"].tolist() == table["model"].tolist()
        assert (again["total"] == 3).all()


class TestSolve:
    def test_recovers_linearized_truth(self, tmp_path):
        argv = [
            "simulate", "-d", str(tmp_path), "--seed", "3", "--num-points", "300", "--linearized",
            "--d-omega-deg", "0.2", "-0.1", "0.3", "--d-f", "0.002",
        ]
        assert main(argv) == EXIT_OK
        report_path = tmp_path / "report.json"
        assert main(["solve", str(tmp_path / "matches.csv"), "-o", str(report_path)]) == EXIT_OK

        report = json.loads(report_path.read_text())
        truth = json.loads((tmp_path / "scene.json").read_text())["truth"]
        assert report["gate"] == {"outcome": "Stereo", "reasons": []}
        assert np.allclose(report["d_omega_deg"], truth["d_omega_deg"], rtol=0, atol=1e-6)
        assert report["d_f"] == pytest.approx(truth["d_f"], abs=1e-7)

    def test_below_gate_minimum(self, tmp_path):
        assert main(["simulate", "-d", str(tmp_path), "--num-points", "99", "--linearized"]) == EXIT_OK
        report_path = tmp_path / "report.json"
        assert main(["solve", str(tmp_path / "matches.csv"), "-o", str(report_path)]) == EXIT_FALLBACK
        report = json.loads(report_path.read_text())
        assert report["gate"]["outcome"] == "MonoFallback"
        assert "TooFewMatches" in report["gate"]["reasons"]

    def test_missing_csv(self, tmp_path):
        assert main(["solve", str(tmp_path / "absent.csv"), "-o", str(tmp_path / "r.json")]) == EXIT_IO


class TestMatch:
    def test_constant_images_give_no_matches(self, tmp_path):
        flat = GrayImage(np.full((40, 60), 0.5))
        save_gray(tmp_path / "l.png", flat)
        save_gray(tmp_path / "r.png", flat)
        out = tmp_path / "m.csv"
        assert main(["match", str(tmp_path / "l.png"), str(tmp_path / "r.png"), "-o", str(out)]) == EXIT_OK
        assert len(pd.read_csv(out)) == 0

    def test_empty_match_file_solves_to_fallback(self, tmp_path):
        flat = GrayImage(np.full((40, 60), 0.5))
        save_gray(tmp_path / "l.png", flat)
        save_gray(tmp_path / "r.png", flat)
        matches, report = tmp_path / "m.csv", tmp_path / "report.json"
        assert main(["match", str(tmp_path / "l.png"), str(tmp_path / "r.png"), "-o", str(matches)]) == EXIT_OK
        assert main(["solve", str(matches), "-o", str(report)]) == EXIT_FALLBACK
        gate = json.loads(report.read_text())["gate"]
        assert gate == {"outcome": "MonoFallback", "reasons": ["TooFewMatches"]}

    def test_missing_image(self, tmp_path):
        save_gray(tmp_path / "l.png", GrayImage(np.zeros((20, 20))))
        argv = ["match", str(tmp_path / "l.png"), str(tmp_path / "absent.png"), "-o", str(tmp_path / "m.csv")]
        assert main(argv) == EXIT_IO


class TestConfigErrors:
    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"solver": {"bogus": 1}}))
        assert main(["--config", str(cfg), "simulate", "-d", str(tmp_path)]) == EXIT_CONFIG

    def test_invalid_json(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert main(["--config", str(cfg), "simulate", "-d", str(tmp_path)]) == EXIT_CONFIG

    def test_empty_fixture_directory(self, tmp_path):
        assert main(["compare-models", str(tmp_path)]) == EXIT_CONFIG

    def test_fixture_path_not_a_directory(self, tmp_path):
        assert main(["compare-models", str(tmp_path / "absent")]) == EXIT_IO


class TestRectify:
    def test_fallback_report_is_not_applied(self, tmp_path):
        report = tmp_path / "report.json"
        decision = GateDecision(outcome=GateOutcome.MONO_FALLBACK, reasons=[GateReason.TOO_FEW_MATCHES])
        write_report(report, None, decision)
        argv = ["rectify", "l.png", "r.png", str(report), "-d", str(tmp_path / "out")]
        assert main(argv) == EXIT_FALLBACK
        assert not (tmp_path / "out").exists()

    def test_zero_solution_preserves_pixels(self, tmp_path):
        left, right = shifted_pair(64, 48, du=2, dv=0)
        save_gray(tmp_path / "left.pgm", left)
        save_gray(tmp_path / "right.pgm", right)
        report = tmp_path / "report.json"
        write_report(report, RectificationSolution.zero(), GateDecision(outcome=GateOutcome.STEREO, reasons=[]))
        out = tmp_path / "out"
        argv = ["rectify", str(tmp_path / "left.pgm"), str(tmp_path / "right.pgm"), str(report), "-d", str(out)]
        assert main(argv) == EXIT_OK
        assert (out / "left_rectified.pgm").read_bytes() == (tmp_path / "left.pgm").read_bytes()
        assert (out / "right_rectified.pgm").read_bytes() == (tmp_path / "right.pgm").read_bytes()
        crop = json.loads((out / "stats.json").read_text())["crop"]
        assert crop == {"top": 0, "left": 0, "bottom": 48, "right": 64}


class TestImageFlow:
    def test_simulate_match_solve_rectify(self, tmp_path):
        k = {"f": 300.0, "cx": 160.0, "cy": 120.0}
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "k0": k,
            "k1": k,
            "sim": {"width": 320, "height": 240, "focal_px": 300.0, "d_omega_deg": [0.0, 0.0, 0.5], "d_f": 0.0, "seed": 4},
        }))
        base = ["--config", str(cfg)]
        left, right = str(tmp_path / "left.png"), str(tmp_path / "right.png")
        matches, report = str(tmp_path / "matches.csv"), str(tmp_path / "report.json")

        assert main(base + ["simulate", "-d", str(tmp_path), "--images"]) == EXIT_OK
        assert main(base + ["match", left, right, "-o", matches]) == EXIT_OK
        assert main(base + ["solve", matches, "-o", report]) == EXIT_OK
        out = tmp_path / "out"
        assert main(base + ["rectify", left, right, report, "--matches", matches, "-d", str(out)]) == EXIT_OK

        stats = json.loads((out / "stats.json").read_text())
        assert stats["after"]["fraction_dy_below_1px"] >= 0.9
        n = len(pd.read_csv(matches))
        assert (out / "scatter.svg").read_text().count("<circle") == 2 * n
        assert len(pd.read_csv(out / "scatter.csv")) == 2 * n

    def test_repeated_run_same_bytes(self, tmp_path):
        k = {"f": 300.0, "cx": 160.0, "cy": 120.0}
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "k0": k,
            "k1": k,
            "sim": {"width": 320, "height": 240, "focal_px": 300.0, "d_omega_deg": [0.1, -0.2, 0.4], "d_f": 0.0, "seed": 6},
        }))
        base = ["--config", str(cfg)]
        for name in ("a", "b"):
            run = tmp_path / name
            left, right = str(run / "left.png"), str(run / "right.png")
            matches, report = str(run / "matches.csv"), str(run / "report.json")
            assert main(base + ["simulate", "-d", str(run), "--images"]) == EXIT_OK
            assert main(base + ["match", left, right, "-o", matches]) == EXIT_OK
            assert main(base + ["solve", matches, "-o", report]) == EXIT_OK
            assert main(base + ["rectify", left, right, report, "--matches", matches, "-d", str(run / "out")]) == EXIT_OK

        for fname in ("matches.csv", "report.json", "out/stats.json", "out/scatter.csv", "out/scatter.svg"):
            assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes(), fname
