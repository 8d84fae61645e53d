"""
rigfix command line.

    rigfix match LEFT RIGHT -o matches.csv
    rigfix solve matches.csv -o report.json
    rigfix rectify LEFT RIGHT report.json -d out/
    rigfix simulate -d out/ [--images] [--batch N]
    rigfix compare-models fixtures/ -o table.csv
    rigfix serve

Exit codes: 0 success, 2 I/O error, 3 configuration error, 4 mono fallback.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from rigfix.config import settings
from rigfix.errors import ErrorType, RectificationError
from rigfix.formats import (
    read_json,
    read_matches_csv,
    render_scatter_svg,
    solution_from_report,
    solution_report,
    write_comparison_csv,
    write_json,
    write_matches_csv,
    write_scatter_csv,
    write_text,
)
from rigfix.image_io import load_gray, save_gray
from rigfix.pipeline import (
    Fixture,
    PipelineConfig,
    configure_logging,
    compare_models,
    detect_and_match,
    load_pipeline_config,
    rectify_pair,
    simulate_fixtures,
    solve_and_gate,
)
from rigfix.simulator import SceneTruth, SimConfig, generate_scene, render_matches, render_texture_pair
from rigfix.solver import ModelKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_FALLBACK = 4

_IO_ERRORS = {ErrorType.IO, ErrorType.INVALID_IMAGE}


def _output_dir(arg: Optional[Path], cfg: PipelineConfig) -> Path:
    return arg or cfg.output_dir or Path(".")


def _scene_report(scene: SceneTruth, sim: SimConfig) -> dict:
    """Scenario JSON: truth in degrees for people, the full scene for reloading."""
    return {
        "truth": {
            "d_omega_deg": scene.true_d_omega.degrees(),
            "omega0_deg": scene.true_omega0.degrees(),
            "omega1_deg": scene.true_omega1.degrees(),
            "d_f": scene.true_df,
        },
        "config": sim.model_dump(mode="json"),
        "scene": scene.model_dump(mode="json"),
    }


# ============================================================================
# Commands
# ============================================================================

def cmd_match(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    left, _ = load_gray(args.left)
    right, _ = load_gray(args.right)
    matches = detect_and_match(left, right, cfg)
    write_matches_csv(args.output, matches)
    print(f"{len(matches)} matches -> {args.output}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    matches = read_matches_csv(args.matches, cfg.k0, cfg.k1)
    outcome = solve_and_gate(matches, cfg.solver_config(), cfg.gate)
    report = solution_report(
        outcome.solution, outcome.decision, matches.k0, matches.k1, len(matches),
        x_rms_px=outcome.x_rms_px, error=outcome.error
    )
    write_json(args.output, report)
    reasons = ", ".join(r.value for r in outcome.decision.reasons) or "-"
    print(f"{outcome.decision.outcome.value} ({reasons}) -> {args.output}")
    return EXIT_OK if outcome.decision.is_stereo else EXIT_FALLBACK


def cmd_rectify(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    sol, decision, k0, k1 = solution_from_report(read_json(args.report))
    if sol is None or not decision.is_stereo:
        print(f"report gate is {decision.outcome.value}; not warping", file=sys.stderr)
        return EXIT_FALLBACK

    left, depth = load_gray(args.left)
    right, _ = load_gray(args.right)
    if args.matches is not None:
        matches = read_matches_csv(args.matches, k0, k1)
    else:
        matches = detect_and_match(left, right, cfg.model_copy(update={"k0": k0, "k1": k1}))
    result = rectify_pair(left, right, matches, sol)

    out = _output_dir(args.output_dir, cfg)
    suffix = Path(args.left).suffix or ".png"
    save_gray(out / f"left_rectified{suffix}", result.left, depth)
    save_gray(out / f"right_rectified{suffix}", result.right, depth)
    save_gray(out / f"left_cropped{suffix}", result.left_cropped, depth)
    save_gray(out / f"right_cropped{suffix}", result.right_cropped, depth)
    top, lft, bottom, rgt = result.crop
    write_json(out / "stats.json", {
        "before": result.before.model_dump() if result.before else None,
        "after": result.after.model_dump() if result.after else None,
        "crop": {"top": top, "left": lft, "bottom": bottom, "right": rgt},
    })
    write_scatter_csv(out / "scatter.csv", result.scatter)
    write_text(out / "scatter.svg", render_scatter_svg(result.scatter))
    if result.after is not None:
        print(
            f"|dy| <= 1 px: {result.before.fraction_dy_below_1px:.3f} -> "
            f"{result.after.fraction_dy_below_1px:.3f} ({len(matches)} matches) -> {out}"
        )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    out = _output_dir(args.output_dir, cfg)
    linearized = args.linearized
    if args.batch:
        models = [ModelKind(m) for m in args.models]
        fixtures = simulate_fixtures(cfg.sim, args.batch, linearized)
        for fixture in fixtures:
            write_matches_csv(out / f"{fixture.name}.csv", fixture.matches)
            write_json(
                out / f"{fixture.name}.json",
                _scene_report(fixture.truth, cfg.sim.model_copy(update={"seed": fixture.truth.seed}))
            )
        table = compare_models(fixtures, models, cfg.solver, cfg.gate)
        write_comparison_csv(out / "table.csv", table)
        print(table.to_string(index=False))
        return EXIT_OK

    if args.images:
        left, right, scene = render_texture_pair(cfg.sim)
        save_gray(out / "left.png", left)
        save_gray(out / "right.png", right)
    else:
        scene = generate_scene(cfg.sim)
    matches = render_matches(scene, linearized)
    write_json(out / "scene.json", _scene_report(scene, cfg.sim))
    write_matches_csv(out / "matches.csv", matches)
    print(f"{len(matches)} matches, seed {cfg.sim.seed} -> {out}")
    return EXIT_OK


def _load_fixture(path: Path, cfg: PipelineConfig) -> Fixture:
    truth = None
    truth_path = path.with_suffix(".json")
    if truth_path.exists():
        payload = read_json(truth_path)
        if isinstance(payload, dict) and "scene" in payload:
            truth = SceneTruth.model_validate(payload["scene"])
    k0 = cfg.k0 or (truth.k0 if truth else None)
    k1 = cfg.k1 or (truth.k1 if truth else None)
    return Fixture(name=path.stem, matches=read_matches_csv(path, k0, k1), truth=truth)


def cmd_compare_models(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    directory = Path(args.fixtures)
    if not directory.is_dir():
        raise RectificationError(ErrorType.IO, f"{directory} is not a directory")
    paths = sorted(p for p in directory.glob("*.csv") if p.name != "table.csv")
    if not paths:
        raise RectificationError(ErrorType.CONFIG, f"no MatchSet fixtures in {directory}")
    fixtures = [_load_fixture(p, cfg) for p in paths]
    table = compare_models(fixtures, [ModelKind(m) for m in args.models], cfg.solver, cfg.gate)
    write_comparison_csv(args.output, table)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    import uvicorn

    uvicorn.run("rigfix.main:app", host=args.host, port=args.port or settings.PORT)
    return EXIT_OK


# ============================================================================
# Argument parsing
# ============================================================================

def _overrides(args: argparse.Namespace) -> dict:
    """Flag values mapped onto PipelineConfig keys; unset flags are None and ignored."""
    d_omega = getattr(args, "d_omega_deg", None)
    return {
        "model": getattr(args, "model", None),
        "detector": {"max_corners": getattr(args, "max_corners", None)},
        "matcher": {"levels": getattr(args, "levels", None)},
        "solver": {"min_matches": getattr(args, "min_matches", None)},
        "gate": {"min_matches": getattr(args, "gate_min_matches", None)},
        "sim": {
            "seed": getattr(args, "seed", None),
            "num_points": getattr(args, "num_points", None),
            "noise_sigma_px": getattr(args, "noise_sigma", None),
            "outlier_rate": getattr(args, "outlier_rate", None),
            "d_f": getattr(args, "d_f", None),
            "d_omega_deg": list(d_omega) if d_omega else None,
        },
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rigfix",
        description="Online self-rectification for a two-camera rig",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("\n\n")[1],
    )
    parser.add_argument("--config", type=Path, help="JSON pipeline configuration")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="Detect and match corners of an image pair")
    p.add_argument("left", type=Path)
    p.add_argument("right", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("matches.csv"))
    p.add_argument("--max-corners", type=int)
    p.add_argument("--levels", type=int, help="Pyramid levels")
    p.set_defaults(handler=cmd_match)

    p = sub.add_parser("solve", help="Estimate the rig correction from a MatchSet CSV")
    p.add_argument("matches", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("report.json"))
    p.add_argument("--model", choices=[m.value for m in ModelKind])
    p.add_argument("--min-matches", type=int, help="Solver minimum")
    p.add_argument("--gate-min-matches", type=int, help="Gate minimum")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("rectify", help="Warp an image pair with a solve report")
    p.add_argument("left", type=Path)
    p.add_argument("right", type=Path)
    p.add_argument("report", type=Path)
    p.add_argument("--matches", type=Path, help="MatchSet CSV for the statistics; re-matched when absent")
    p.add_argument("-d", "--output-dir", type=Path)
    p.set_defaults(handler=cmd_rectify)

    p = sub.add_parser("simulate", help="Generate synthetic scenarios with ground truth")
    p.add_argument("-d", "--output-dir", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--num-points", type=int)
    p.add_argument("--noise-sigma", type=float, help="Pixel noise sigma")
    p.add_argument("--outlier-rate", type=float)
    p.add_argument("--d-f", type=float, help="Explicit relative focal drift")
    p.add_argument("--d-omega-deg", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--images", action="store_true", help="Also render a textured image pair")
    p.add_argument("--linearized", action="store_true", help="Render with the linearized model")
    p.add_argument("--batch", type=int, help="Emit N scenarios and a model comparison table")
    p.add_argument("--models", nargs="+", default=[ModelKind.THREE_PARAM.value, ModelKind.FOUR_PARAM.value],
                   choices=[m.value for m in ModelKind])
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("compare-models", help="Tabulate model success over a fixture directory")
    p.add_argument("fixtures", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("table.csv"))
    p.add_argument("--models", nargs="+", default=[ModelKind.THREE_PARAM.value, ModelKind.FOUR_PARAM.value],
                   choices=[m.value for m in ModelKind])
    p.set_defaults(handler=cmd_compare_models)

    p = sub.add_parser("serve", help="Run the HTTP service")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    if args.verbose:
        logging.getLogger("rigfix").setLevel(logging.DEBUG)

    try:
        cfg = load_pipeline_config(args.config, _overrides(args))
        return args.handler(args, cfg)
    except ValidationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RectificationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO if e.error_type in _IO_ERRORS else EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
