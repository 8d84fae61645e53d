"""
Pipeline

Stage orchestration shared by the CLI and the HTTP service: configuration
loading, detect/match, solve/gate, rectification, and batch model comparison.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import logfire
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from rigfix.camera_model import Intrinsics
from rigfix.config import seed_override, settings
from rigfix.correspondence import (
    DetectorConfig,
    GrayImage,
    MatcherConfig,
    MatchSet,
    default_intrinsics,
    harris_corners,
    match_hierarchical,
)
from rigfix.errors import ErrorType, RectificationError
from rigfix.formats import COMPARE_COLUMNS, read_json, scatter_frame
from rigfix.gating import GateConfig, GateDecision, evaluate, fallback_for_error
from rigfix.rectifier import DisparityStats, apply_to_matches, build_maps, crop_pair, stats, warp
from rigfix.simulator import SceneTruth, SimConfig, generate_scene, render_matches
from rigfix.solver import ModelKind, RectificationSolution, SolverConfig, robust_solve, x_constraint_residuals

logger = logging.getLogger(__name__)

_logging_configured = False


def configure_logging() -> None:
    """Configure logfire and standard logging once per process."""
    global _logging_configured
    if _logging_configured:
        return
    if settings.LOG_FIRE_TOKEN:
        logfire.configure(token=settings.LOG_FIRE_TOKEN)
    else:
        logfire.configure(send_to_logfire=False)
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    _logging_configured = True


# ============================================================================
# Configuration
# ============================================================================

class PipelineConfig(BaseModel):
    """Everything a CLI run needs besides its input files."""
    k0: Optional[Intrinsics] = Field(None, description="Left intrinsics; inferred when absent")
    k1: Optional[Intrinsics] = Field(None, description="Right intrinsics; inferred when absent")
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    matcher: MatcherConfig = Field(default_factory=MatcherConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    gate: GateConfig = Field(default_factory=GateConfig)
    model: Optional[ModelKind] = Field(None, description="Overrides solver.model when set")
    sim: SimConfig = Field(default_factory=SimConfig)
    output_dir: Optional[Path] = Field(None, description="Default directory for command outputs")

    model_config = {"extra": "forbid"}

    def solver_config(self) -> SolverConfig:
        if self.model is None:
            return self.solver
        return self.solver.model_copy(update={"model": self.model})


def deep_merge(base: dict, overrides: dict) -> dict:
    """Recursive dict merge; values in ``overrides`` win, None values are ignored at every depth."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and (key not in merged or isinstance(merged[key], dict)):
            merged[key] = deep_merge(merged.get(key) or {}, value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(path: Optional[Path] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """
    File settings deep-merged with flag overrides, then validated.

    RIGFIX_SEED, when set, replaces the file's simulator seed; a --seed flag still wins.
    """
    data: dict[str, Any] = {}
    if path is not None:
        loaded = read_json(path)
        if not isinstance(loaded, dict):
            raise RectificationError(ErrorType.CONFIG, f"{path} must hold a JSON object")
        data = loaded
    seed = seed_override()
    if seed is not None:
        data = deep_merge(data, {"sim": {"seed": seed}})
    data = deep_merge(data, overrides or {})
    return PipelineConfig.model_validate(data)


# ============================================================================
# Stages
# ============================================================================

def detect_and_match(left: GrayImage, right: GrayImage, cfg: PipelineConfig) -> MatchSet:
    """Harris corners on the left image matched into the right image."""
    k0 = cfg.k0 or default_intrinsics(left)
    k1 = cfg.k1 or default_intrinsics(right)
    with logfire.span("detect corners", width=left.width, height=left.height):
        corners = harris_corners(left, cfg.detector)
    with logfire.span("match corners", corners=len(corners)):
        matches = match_hierarchical(left, right, corners, cfg.matcher, k0, k1)
    return matches


@dataclass
class SolveOutcome:
    """Solver result (absent on estimation failure) and its gate decision."""
    solution: Optional[RectificationSolution]
    decision: GateDecision
    x_rms_px: Optional[float] = None
    error: Optional[str] = None


def solve_and_gate(matches: MatchSet, solver_cfg: SolverConfig, gate_cfg: GateConfig) -> SolveOutcome:
    """Robust solve then gate; estimation failures become a mono-fallback outcome."""
    with logfire.span("solve", matches=len(matches), model=solver_cfg.model.value):
        try:
            solution = robust_solve(matches, solver_cfg)
        except RectificationError as e:
            if e.error_type not in (ErrorType.TOO_FEW_MATCHES, ErrorType.DEGENERATE_GEOMETRY):
                raise
            return SolveOutcome(solution=None, decision=fallback_for_error(e), error=str(e))

    with logfire.span("gate"):
        decision = evaluate(solution, gate_cfg, matches)
    x_resid = x_constraint_residuals(matches, solution) * solution.focal_px
    x_rms = float(np.sqrt(np.mean(x_resid ** 2))) if len(x_resid) else None
    return SolveOutcome(solution=solution, decision=decision, x_rms_px=x_rms)


@dataclass
class RectifiedPair:
    """Warped pair, validity masks, common crop and before/after statistics."""
    left: GrayImage
    right: GrayImage
    left_mask: np.ndarray
    right_mask: np.ndarray
    left_cropped: GrayImage
    right_cropped: GrayImage
    crop: tuple[int, int, int, int]
    before: Optional[DisparityStats]
    after: Optional[DisparityStats]
    scatter: pd.DataFrame


def rectify_pair(
    left: GrayImage,
    right: GrayImage,
    matches: MatchSet,
    sol: RectificationSolution
) -> RectifiedPair:
    """Warp both images and summarise the matches before and after correction."""
    m0, m1 = build_maps(matches.k0, matches.k1, sol)
    with logfire.span("warp", width=left.width, height=left.height):
        left_w, left_mask = warp(left, m0)
        right_w, right_mask = warp(right, m1)
        left_c, right_c, crop = crop_pair(left_w, right_w, left_mask, right_mask)

    rectified = apply_to_matches(matches, sol)
    before = stats(matches, matches.k1.f) if len(matches) else None
    after = stats(rectified, m1.k_out.f) if len(rectified) else None
    scatter = pd.concat([
        scatter_frame({"before": matches}, matches.k1.f),
        scatter_frame({"after": rectified}, m1.k_out.f),
    ], ignore_index=True)
    if after is not None:
        logger.info(
            f"[Rectifier] |Δy| ≤ 1 px: {before.fraction_dy_below_1px:.3f} -> {after.fraction_dy_below_1px:.3f}"
        )
    return RectifiedPair(left_w, right_w, left_mask, right_mask, left_c, right_c, crop, before, after, scatter)


# ============================================================================
# Batch comparison
# ============================================================================

@dataclass
class Fixture:
    """A MatchSet with its generating truth when known."""
    name: str
    matches: MatchSet
    truth: Optional[SceneTruth] = None


def compare_models(
    fixtures: Sequence[Fixture],
    models: Sequence[ModelKind],
    solver_cfg: SolverConfig,
    gate_cfg: GateConfig
) -> pd.DataFrame:
    """
    Run each model over every fixture; success is a Stereo gate decision.

    The Δf error column needs truth and is NaN otherwise. A model without a
    Δf parameter is scored as estimating Δf = 0.
    """
    if not fixtures:
        raise RectificationError(ErrorType.CONFIG, "no fixtures to compare")
    rows = []
    for model in models:
        cfg = solver_cfg.model_copy(update={"model": model})
        successes, rates, df_errors = 0, [], []
        with logfire.span("compare model", model=model.value, fixtures=len(fixtures)):
            for fixture in fixtures:
                outcome = solve_and_gate(fixture.matches, cfg, gate_cfg)
                successes += int(outcome.decision.is_stereo)
                if outcome.solution is not None:
                    rates.append(outcome.solution.inlier_rate)
                if fixture.truth is not None:
                    estimate = outcome.solution.d_f if outcome.solution is not None else 0.0
                    df_errors.append(abs(estimate - fixture.truth.true_df))
        rows.append({
            "model": model.value,
            "success": successes,
            "total": len(fixtures),
            "success_rate": successes / len(fixtures),
            "median_inlier_rate": float(np.median(rates)) if rates else 0.0,
            "mean_abs_df_error": float(np.mean(df_errors)) if df_errors else float("nan"),
        })
        logger.info(f"[Compare] {model.value}: {successes}/{len(fixtures)} stereo")
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


def simulate_fixtures(cfg: SimConfig, count: int, linearized: bool = False) -> list[Fixture]:
    """``count`` scenarios with consecutive seeds starting at ``cfg.seed``."""
    fixtures = []
    for i in range(count):
        scene = generate_scene(cfg.model_copy(update={"seed": cfg.seed + i}))
        fixtures.append(Fixture(name=f"scenario_{i + 1:04d}", matches=render_matches(scene, linearized), truth=scene))
    return fixtures


def run_batch(
    cfg: SimConfig,
    count: int,
    models: Sequence[ModelKind] = (ModelKind.THREE_PARAM, ModelKind.FOUR_PARAM),
    solver_cfg: Optional[SolverConfig] = None,
    gate_cfg: Optional[GateConfig] = None,
    linearized: bool = False
) -> tuple[list[Fixture], pd.DataFrame]:
    """Simulate ``count`` scenarios and tabulate per-model success."""
    fixtures = simulate_fixtures(cfg, count, linearized)
    table = compare_models(fixtures, models, solver_cfg or SolverConfig(), gate_cfg or GateConfig())
    return fixtures, table
