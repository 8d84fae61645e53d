"""
File Formats

MatchSet CSV, JSON reports and scenarios, the before/after scatter table and
its SVG rendering, and the model-comparison table.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from rigfix.camera_model import Intrinsics, Rotation3
from rigfix.correspondence import MatchSet
from rigfix.errors import ErrorType, RectificationError
from rigfix.gating import GateDecision
from rigfix.solver import ModelKind, RectificationSolution

logger = logging.getLogger(__name__)

MATCH_COLUMNS = ["u0", "v0", "u1", "v1", "x0", "y0", "x1", "y1", "dx", "dy", "cost"]
SCATTER_COLUMNS = ["dx_px", "dy_px", "stage"]
COMPARE_COLUMNS = ["model", "success", "total", "success_rate", "median_inlier_rate", "mean_abs_df_error"]

PathLike = Union[str, Path]

_UNIT_INTRINSICS = Intrinsics(f=1.0, cx=0.0, cy=0.0)


# ============================================================================
# MatchSet CSV
# ============================================================================

def matches_frame(matches: MatchSet) -> pd.DataFrame:
    return pd.DataFrame({
        "u0": matches.left_px[:, 0], "v0": matches.left_px[:, 1],
        "u1": matches.right_px[:, 0], "v1": matches.right_px[:, 1],
        "x0": matches.n0[:, 0], "y0": matches.n0[:, 1],
        "x1": matches.n1[:, 0], "y1": matches.n1[:, 1],
        "dx": matches.dx, "dy": matches.dy, "cost": matches.costs,
    }, columns=MATCH_COLUMNS)


def write_matches_csv(path: PathLike, matches: MatchSet) -> None:
    """One row per match, 9 significant digits."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    matches_frame(matches).to_csv(path, index=False, float_format="%.9g", lineterminator="\n")


def _fit_axis(norm: np.ndarray, pix: np.ndarray, axis: str) -> tuple[float, float]:
    if len(norm) < 2 or np.ptp(norm) <= 0:
        raise RectificationError(ErrorType.CONFIG, f"cannot infer intrinsics from the {axis} columns; pass them explicitly")
    slope, intercept = np.polyfit(norm, pix, 1)
    return float(slope), float(intercept)


def infer_intrinsics(df: pd.DataFrame, side: int) -> Intrinsics:
    """Recover f, cx, cy from the pixel and normalized columns of one camera."""
    u, v, x, y = (df[f"{c}{side}"].to_numpy(dtype=np.float64) for c in ("u", "v", "x", "y"))
    fu, cx = _fit_axis(x, u, f"u{side}/x{side}")
    fv, cy = _fit_axis(y, v, f"v{side}/y{side}")
    return Intrinsics(f=0.5 * (fu + fv), cx=cx, cy=cy)


def read_matches_csv(
    path: PathLike,
    k0: Optional[Intrinsics] = None,
    k1: Optional[Intrinsics] = None
) -> MatchSet:
    """
    Load a MatchSet; missing intrinsics are inferred from the CSV columns.

    Fewer than two rows cannot determine intrinsics, so missing ones fall back
    to f = 1 at the origin; such a set only ever gates to the mono fallback.
    """
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise RectificationError(ErrorType.IO, f"cannot read {path}: {e}")
    missing = [c for c in MATCH_COLUMNS if c not in df.columns]
    if missing:
        raise RectificationError(ErrorType.IO, f"{path}: missing columns {missing}")
    if len(df) < 2 and (k0 is None or k1 is None):
        logger.warning(f"[Formats] {path} has {len(df)} rows; using unit intrinsics where none were given")
        k0 = k0 or _UNIT_INTRINSICS
        k1 = k1 or _UNIT_INTRINSICS
    if k0 is None:
        k0 = infer_intrinsics(df, 0)
    if k1 is None:
        k1 = infer_intrinsics(df, 1)
    return MatchSet(
        df[["u0", "v0"]].to_numpy(dtype=np.float64),
        df[["u1", "v1"]].to_numpy(dtype=np.float64),
        k0, k1,
        costs=df["cost"].to_numpy(dtype=np.float64),
    )


# ============================================================================
# JSON
# ============================================================================

def write_json(path: PathLike, payload: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def read_json(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise RectificationError(ErrorType.IO, f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise RectificationError(ErrorType.CONFIG, f"{path} is not valid JSON: {e}")


def _deg(value: Optional[float]) -> Optional[float]:
    return None if value is None else math.degrees(value)


def _rad(value: Optional[float]) -> Optional[float]:
    return None if value is None else math.radians(value)


def solution_report(
    sol: Optional[RectificationSolution],
    decision: GateDecision,
    k0: Intrinsics,
    k1: Intrinsics,
    match_count: int,
    x_rms_px: Optional[float] = None,
    error: Optional[str] = None
) -> dict:
    """JSON-ready report; angles in degrees. Solution fields are null when estimation failed."""
    report: dict[str, Any] = {
        "model": sol.model.value if sol else None,
        "d_omega_deg": sol.d_omega.degrees() if sol else None,
        "omega_y1_deg": _deg(sol.omega_y1) if sol else None,
        "omega_z1_deg": _deg(sol.omega_z1) if sol else None,
        "d_f": sol.d_f if sol else None,
        "omega0_deg": sol.omega0.degrees() if sol else None,
        "omega1_deg": sol.omega1.degrees() if sol else None,
        "match_count": sol.match_count if sol else match_count,
        "inlier_count": sol.inlier_count if sol else 0,
        "inlier_rate": sol.inlier_rate if sol else 0.0,
        "rms_dy_px": sol.rms_dy_px if sol else None,
        "iterations": sol.iterations if sol else 0,
        "stage_iterations": sol.stage_iterations if sol else [],
        "theta_std": sol.theta_std if sol else None,
        "gate": {"outcome": decision.outcome.value, "reasons": [r.value for r in decision.reasons]},
        "intrinsics": {"k0": k0.model_dump(), "k1": k1.model_dump()},
        "x_rms_px": x_rms_px,
    }
    if error:
        report["error"] = error
    return report


def solution_from_report(report: dict) -> tuple[Optional[RectificationSolution], GateDecision, Intrinsics, Intrinsics]:
    """Inverse of solution_report for a report that carries a solution."""
    try:
        decision = GateDecision.model_validate(report["gate"])
        k0 = Intrinsics.model_validate(report["intrinsics"]["k0"])
        k1 = Intrinsics.model_validate(report["intrinsics"]["k1"])
        if report.get("model") is None:
            return None, decision, k0, k1
        model = ModelKind(report["model"])
        d_omega = Rotation3.from_degrees(report["d_omega_deg"])
        omega1 = Rotation3.from_degrees(report["omega1_deg"])
        # Degree round trips are inexact; ω0 is re-derived so that ω1 − ω0 = Δω holds
        omega0 = omega1 - d_omega
        sol = RectificationSolution(
            model=model,
            d_omega=d_omega,
            omega_y1=_rad(report.get("omega_y1_deg")),
            omega_z1=_rad(report.get("omega_z1_deg")),
            d_f=report["d_f"],
            omega0=omega0,
            omega1=omega1,
            inlier_count=report["inlier_count"],
            match_count=report["match_count"],
            inlier_rate=report["inlier_rate"],
            iterations=report["iterations"],
            stage_iterations=report.get("stage_iterations", []),
            focal_px=k1.f,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise RectificationError(ErrorType.CONFIG, f"malformed report: {e}")
    return sol, decision, k0, k1


# ============================================================================
# Scatter data and SVG
# ============================================================================

def scatter_frame(stages: dict[str, MatchSet], f: float) -> pd.DataFrame:
    """Rows of (dx_px, dy_px, stage) for each named stage, in insertion order."""
    frames = [
        pd.DataFrame({"dx_px": m.dx * f, "dy_px": m.dy * f, "stage": name}, columns=SCATTER_COLUMNS)
        for name, m in stages.items()
    ]
    if not frames:
        return pd.DataFrame(columns=SCATTER_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def write_scatter_csv(path: PathLike, frame: pd.DataFrame) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


_SVG_SIZE = 600
_SVG_MARGIN = 50
_STAGE_COLOURS = {"before": "#d62728", "after": "#1f77b4"}


def render_scatter_svg(frame: pd.DataFrame) -> str:
    """600x600 SVG with Δx/Δy axes and one circle per row."""
    dx = frame["dx_px"].to_numpy(dtype=np.float64)
    dy = frame["dy_px"].to_numpy(dtype=np.float64)
    x_lo, x_hi = (min(dx.min(), 0.0), max(dx.max(), 0.0)) if len(dx) else (-1.0, 1.0)
    y_ext = max(float(np.abs(dy).max()) if len(dy) else 1.0, 1.0)
    if x_hi - x_lo < 1e-9:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    plot = _SVG_SIZE - 2 * _SVG_MARGIN

    def sx(v: float) -> float:
        return _SVG_MARGIN + (v - x_lo) / (x_hi - x_lo) * plot

    def sy(v: float) -> float:
        return _SVG_MARGIN + (y_ext - v) / (2 * y_ext) * plot

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SVG_SIZE}" height="{_SVG_SIZE}" '
        f'viewBox="0 0 {_SVG_SIZE} {_SVG_SIZE}">',
        f'<rect x="0" y="0" width="{_SVG_SIZE}" height="{_SVG_SIZE}" fill="white"/>',
        f'<line x1="{_SVG_MARGIN}" y1="{sy(0):.2f}" x2="{_SVG_SIZE - _SVG_MARGIN}" y2="{sy(0):.2f}" stroke="black"/>',
        f'<line x1="{sx(0):.2f}" y1="{_SVG_MARGIN}" x2="{sx(0):.2f}" y2="{_SVG_SIZE - _SVG_MARGIN}" stroke="black"/>',
        f'<text x="{_SVG_SIZE / 2:.0f}" y="{_SVG_SIZE - 15}" text-anchor="middle" font-size="14">Δx [px] ({x_lo:.2f} to {x_hi:.2f})</text>',
        f'<text x="15" y="{_SVG_SIZE / 2:.0f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 15 {_SVG_SIZE / 2:.0f})">Δy [px] (±{y_ext:.2f})</text>',
    ]
    for x, y, stage in zip(dx, dy, frame["stage"]):
        colour = _STAGE_COLOURS.get(stage, "#7f7f7f")
        lines.append(f'<circle class="{stage}" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2" fill="{colour}" fill-opacity="0.6"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_text(path: PathLike, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


# ============================================================================
# Comparison table
# ============================================================================

def write_comparison_csv(path: PathLike, frame: pd.DataFrame) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame[COMPARE_COLUMNS].to_csv(path, index=False, float_format="%.6g", lineterminator="\n")
