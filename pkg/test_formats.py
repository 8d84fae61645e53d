import json

import numpy as np
import pytest

from rigfix.camera_model import Intrinsics
from rigfix.correspondence import MatchSet
from rigfix.errors import ErrorType, RectificationError
from rigfix.formats import (
    MATCH_COLUMNS,
    read_json,
    read_matches_csv,
    render_scatter_svg,
    scatter_frame,
    solution_from_report,
    solution_report,
    write_json,
    write_matches_csv,
)
from rigfix.gating import GateDecision, GateOutcome, GateReason, evaluate
from rigfix.simulator import SimConfig, generate_scene, render_matches
from rigfix.solver import robust_solve


@pytest.fixture
def matches():
    return render_matches(generate_scene(SimConfig(num_points=120, seed=21)))


class TestMatchesCsv:
    def test_columns_and_intrinsics(self, tmp_path, matches):
        path = tmp_path / "m.csv"
        write_matches_csv(path, matches)
        assert path.read_text().splitlines()[0] == ",".join(MATCH_COLUMNS)
        loaded = read_matches_csv(path)
        assert len(loaded) == len(matches)
        assert loaded.k0.f == pytest.approx(matches.k0.f, rel=1e-6)
        assert loaded.k1.cy == pytest.approx(matches.k1.cy, abs=1e-4)
        assert np.allclose(loaded.dy, matches.dy, rtol=0, atol=1e-7)

    def test_explicit_intrinsics_win(self, tmp_path, matches):
        path = tmp_path / "m.csv"
        write_matches_csv(path, matches)
        k = Intrinsics(f=100.0, cx=0.0, cy=0.0)
        assert read_matches_csv(path, k, k).k0 == k

    def test_missing_file(self, tmp_path):
        with pytest.raises(RectificationError) as exc:
            read_matches_csv(tmp_path / "absent.csv")
        assert exc.value.error_type == ErrorType.IO

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("u0,v0\n1,2\n")
        with pytest.raises(RectificationError) as exc:
            read_matches_csv(path)
        assert exc.value.error_type == ErrorType.IO

    def test_header_only_file(self, tmp_path):
        k = Intrinsics(f=100.0, cx=0.0, cy=0.0)
        path = tmp_path / "empty.csv"
        write_matches_csv(path, MatchSet.empty(k, k))
        loaded = read_matches_csv(path)
        assert len(loaded) == 0
        assert loaded.k0.f == 1.0
        assert read_matches_csv(path, k, None).k0 == k


class TestReport:
    def test_report_round_trip(self, tmp_path, matches):
        sol = robust_solve(matches)
        decision = evaluate(sol)
        path = tmp_path / "report.json"
        write_json(path, solution_report(sol, decision, matches.k0, matches.k1, len(matches), x_rms_px=0.1))
        loaded, loaded_decision, k0, k1 = solution_from_report(read_json(path))
        assert loaded_decision == decision
        assert k0 == matches.k0
        assert np.allclose(loaded.d_omega.as_array(), sol.d_omega.as_array(), rtol=1e-12, atol=1e-15)
        assert loaded.d_f == sol.d_f
        assert path.read_text().endswith("}\n")

    def test_failed_estimate(self, matches):
        decision = GateDecision(outcome=GateOutcome.MONO_FALLBACK, reasons=[GateReason.TOO_FEW_MATCHES])
        report = solution_report(None, decision, matches.k0, matches.k1, 7, error="Too few matches")
        assert report["d_omega_deg"] is None
        assert report["match_count"] == 7
        sol, loaded, _, _ = solution_from_report(json.loads(json.dumps(report)))
        assert sol is None
        assert loaded.reasons == [GateReason.TOO_FEW_MATCHES]

    def test_malformed_report(self):
        with pytest.raises(RectificationError) as exc:
            solution_from_report({"gate": {"outcome": "Stereo"}})
        assert exc.value.error_type == ErrorType.CONFIG

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{")
        with pytest.raises(RectificationError) as exc:
            read_json(path)
        assert exc.value.error_type == ErrorType.CONFIG


class TestScatter:
    def test_one_marker_per_match_per_stage(self, matches):
        frame = scatter_frame({"before": matches, "after": matches.subset(slice(0, 40))}, matches.k1.f)
        svg = render_scatter_svg(frame)
        assert svg.count('<circle class="before"') == len(matches)
        assert svg.count('<circle class="after"') == 40
        assert svg.startswith("<?xml")

    def test_pixel_units(self, matches):
        frame = scatter_frame({"before": matches}, matches.k1.f)
        assert np.allclose(frame["dy_px"], matches.dy * matches.k1.f)
