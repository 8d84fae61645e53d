"""
Gating

Decides whether an estimated rectification can be trusted for stereo, and
otherwise emits a mono-fallback decision with every failed criterion listed.
"""

import logging
import math
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from rigfix.correspondence import MatchSet
from rigfix.errors import ErrorType, RectificationError
from rigfix.solver import RectificationSolution, residuals

logger = logging.getLogger(__name__)


class GateOutcome(str, Enum):
    STEREO = "Stereo"
    MONO_FALLBACK = "MonoFallback"


class GateReason(str, Enum):
    """Machine-readable fallback reasons."""
    TOO_FEW_MATCHES = "TooFewMatches"
    LOW_INLIER_RATE = "LowInlierRate"
    PITCH_OUT_OF_BOUNDS = "PitchOutOfBounds"
    ROLL_OUT_OF_BOUNDS = "RollOutOfBounds"
    REL_PAN_OUT_OF_BOUNDS = "RelPanOutOfBounds"
    SOLVER_DEGENERATE = "SolverDegenerate"


class GateConfig(BaseModel):
    """Acceptance thresholds for online rectification."""
    min_matches: int = Field(100, ge=1, description="Matched features required")
    min_inlier_rate: float = Field(0.60, gt=0, le=1, description="Inlier fraction required (inclusive)")
    inlier_dy: float = Field(1.0, gt=0, description="Inlier bound on |Δy| after correction, pixels")
    max_abs_pitch_roll: float = Field(5.0, gt=0, description="Exclusive bound on per-camera pitch and roll, degrees")
    max_rel_pan: float = Field(22.0, gt=0, description="Exclusive bound on relative pan, degrees")

    model_config = {"extra": "forbid"}


class GateDecision(BaseModel):
    """Stereo when no criterion failed, MonoFallback otherwise."""
    outcome: GateOutcome
    reasons: list[GateReason] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_outcome(self):
        """Outcome is Stereo exactly when there are no reasons."""
        if (self.outcome == GateOutcome.STEREO) != (not self.reasons):
            raise ValueError("outcome must be Stereo iff reasons is empty")
        return self

    @property
    def is_stereo(self) -> bool:
        return self.outcome == GateOutcome.STEREO


def _decision(reasons: list[GateReason]) -> GateDecision:
    outcome = GateOutcome.MONO_FALLBACK if reasons else GateOutcome.STEREO
    return GateDecision(outcome=outcome, reasons=reasons)


def evaluate(
    sol: RectificationSolution,
    cfg: Optional[GateConfig] = None,
    matches: Optional[MatchSet] = None
) -> GateDecision:
    """
    Check counts, inlier rate and angle bounds; all failures are reported.

    With ``matches`` the inlier rate is recomputed as the fraction of
    residuals within ``cfg.inlier_dy`` pixels; otherwise the solver's rate is
    used.
    """
    cfg = cfg or GateConfig()
    reasons: list[GateReason] = []

    if sol.match_count < cfg.min_matches:
        reasons.append(GateReason.TOO_FEW_MATCHES)

    inlier_rate = sol.inlier_rate
    if matches is not None and len(matches):
        resid_px = np.abs(residuals(matches, sol.theta, sol.model)) * sol.focal_px
        inlier_rate = float(np.mean(resid_px <= cfg.inlier_dy))
    if inlier_rate < cfg.min_inlier_rate:
        reasons.append(GateReason.LOW_INLIER_RATE)

    bound = cfg.max_abs_pitch_roll
    pitch = max(abs(math.degrees(sol.omega0.omega_x)), abs(math.degrees(sol.omega1.omega_x)))
    roll = max(abs(math.degrees(sol.omega0.omega_z)), abs(math.degrees(sol.omega1.omega_z)))
    if not pitch < bound:
        reasons.append(GateReason.PITCH_OUT_OF_BOUNDS)
    if not roll < bound:
        reasons.append(GateReason.ROLL_OUT_OF_BOUNDS)
    if not abs(math.degrees(sol.d_omega.omega_y)) < cfg.max_rel_pan:
        reasons.append(GateReason.REL_PAN_OUT_OF_BOUNDS)

    decision = _decision(reasons)
    if decision.is_stereo:
        logger.info(f"[Gate] Stereo accepted ({sol.match_count} matches, inlier rate {inlier_rate:.3f})")
    else:
        logger.warning(f"[Gate] Mono fallback: {[r.value for r in reasons]}")
    return decision


def fallback_for_error(error: RectificationError) -> GateDecision:
    """Map an estimation failure onto a fixed mono-fallback decision."""
    if error.error_type == ErrorType.TOO_FEW_MATCHES:
        reason = GateReason.TOO_FEW_MATCHES
    elif error.error_type == ErrorType.DEGENERATE_GEOMETRY:
        reason = GateReason.SOLVER_DEGENERATE
    else:
        raise error
    logger.warning(f"[Gate] Mono fallback after solver error: {error}")
    return _decision([reason])
