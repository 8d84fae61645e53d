"""Request and response models of the HTTP service."""
import math
from typing import Optional

from pydantic import BaseModel, Field, model_validator

from rigfix.camera_model import Intrinsics
from rigfix.gating import GateConfig, GateDecision, GateOutcome, GateReason
from rigfix.solver import ModelKind, SolverConfig


class SolveRequest(BaseModel):
    """Input model for the solve endpoint."""
    k0: Intrinsics = Field(..., description="Left camera intrinsics")
    k1: Intrinsics = Field(..., description="Right camera intrinsics")
    matches: list[list[float]] = Field(..., description="Pixel quadruples [u0, v0, u1, v1]")
    solver: SolverConfig = Field(default_factory=SolverConfig)
    gate: GateConfig = Field(default_factory=GateConfig)
    model: Optional[ModelKind] = Field(None, description="Overrides solver.model when set")

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_matches(self):
        """Every match must be a finite [u0, v0, u1, v1] quadruple."""
        for i, row in enumerate(self.matches):
            if len(row) != 4:
                raise ValueError(f"match {i} has {len(row)} values, expected 4")
            if not all(math.isfinite(v) for v in row):
                raise ValueError(f"match {i} is not finite")
        return self


class SolveResponse(BaseModel):
    """Same fields as the CLI solve report; solution fields are null on estimation failure."""
    model: Optional[ModelKind] = None
    d_omega_deg: Optional[list[float]] = None
    omega_y1_deg: Optional[float] = None
    omega_z1_deg: Optional[float] = None
    d_f: Optional[float] = None
    omega0_deg: Optional[list[float]] = None
    omega1_deg: Optional[list[float]] = None
    match_count: int = Field(..., ge=0)
    inlier_count: int = Field(..., ge=0)
    inlier_rate: float = Field(..., ge=0, le=1)
    rms_dy_px: Optional[float] = None
    iterations: int = Field(..., ge=0)
    stage_iterations: list[int] = Field(default_factory=list)
    theta_std: Optional[list[float]] = None
    gate: GateDecision
    intrinsics: dict[str, Intrinsics]
    x_rms_px: Optional[float] = None
    error: Optional[str] = None


def fallback_response(match_count: int, k0: Intrinsics, k1: Intrinsics, error: str) -> SolveResponse:
    """Returned when the request cannot be processed at all."""
    return SolveResponse(
        match_count=match_count,
        inlier_count=0,
        inlier_rate=0.0,
        iterations=0,
        gate=GateDecision(outcome=GateOutcome.MONO_FALLBACK, reasons=[GateReason.SOLVER_DEGENERATE]),
        intrinsics={"k0": k0, "k1": k1},
        error=error,
    )
