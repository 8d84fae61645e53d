"""
Solver

Builds the linearized vertical-disparity constraint rows from a MatchSet and
solves them by robust least squares with a decreasing inlier threshold.

Parameter order of the full row:
    [Δωx, Δωy, Δωz, ωy1, ωz1, Δf]
with coefficients
    [1 + y0·y1, −x0·y1, −x0, −Δx·y1, −Δx, y0]   and right-hand side Δy.
Δx stands in for the inverse depth d. Absolute pitch never appears, only Δωx.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from pydantic import BaseModel, Field, model_validator

from rigfix.camera_model import Rotation3
from rigfix.correspondence import Match, MatchSet
from rigfix.errors import ErrorType, RectificationError

logger = logging.getLogger(__name__)

PARAM_NAMES = ("d_omega_x", "d_omega_y", "d_omega_z", "omega_y1", "omega_z1", "d_f")


class ModelKind(str, Enum):
    """Parameter sets of increasing size."""
    THREE_PARAM = "3-param"
    FOUR_PARAM = "4-param"
    FIVE_PARAM = "5-param"
    SIX_PARAM = "6-param"

    @property
    def columns(self) -> tuple[int, ...]:
        return _MODEL_COLUMNS[self]

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(PARAM_NAMES[c] for c in self.columns)

    @property
    def param_count(self) -> int:
        return len(self.columns)


_MODEL_COLUMNS = {
    ModelKind.THREE_PARAM: (0, 1, 2),
    ModelKind.FOUR_PARAM: (0, 1, 2, 5),
    ModelKind.FIVE_PARAM: (0, 1, 2, 3, 5),
    ModelKind.SIX_PARAM: (0, 1, 2, 3, 4, 5),
}


# ============================================================================
# Configuration and results
# ============================================================================

class SolverConfig(BaseModel):
    """Robust least-squares settings."""
    thresholds_px: list[float] = Field(
        default_factory=lambda: [4.0, 2.0, 1.0],
        description="Strictly decreasing inlier thresholds in pixels, one per iteration"
    )
    min_matches: Optional[int] = Field(None, ge=1, description="Matches required per solve; default 3x parameter count")
    max_iterations: Optional[int] = Field(None, ge=1, description="Truncates the threshold schedule")
    model: ModelKind = Field(ModelKind.FOUR_PARAM, description="Parameter set to estimate")
    min_depth_spread_px: float = Field(20.0, ge=0, description="Inlier Δx spread needed to estimate absolute pan/roll")

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_schedule(self):
        """Thresholds must be positive and strictly decreasing."""
        if not self.thresholds_px:
            raise ValueError("threshold schedule must not be empty")
        if any(t <= 0 for t in self.thresholds_px):
            raise ValueError("thresholds must be positive")
        if any(b >= a for a, b in zip(self.thresholds_px, self.thresholds_px[1:])):
            raise ValueError("thresholds must be strictly decreasing")
        return self

    def schedule(self) -> list[float]:
        if self.max_iterations is None:
            return list(self.thresholds_px)
        return list(self.thresholds_px[:self.max_iterations])

    def required_matches(self, model: ModelKind) -> int:
        return max(model.param_count, self.min_matches or 3 * model.param_count)


class RectificationSolution(BaseModel):
    """Estimated corrections and fit diagnostics."""
    model: ModelKind
    d_omega: Rotation3
    omega_y1: Optional[float] = None
    omega_z1: Optional[float] = None
    d_f: float = 0.0
    omega0: Rotation3
    omega1: Rotation3
    inlier_count: int = Field(0, ge=0)
    match_count: int = Field(0, ge=0)
    inlier_rate: float = Field(0.0, ge=0, le=1)
    rms_dy_inliers: float = Field(0.0, ge=0, description="Normalized units")
    iterations: int = Field(0, ge=0, description="Iterations of the final stage, at most the schedule length")
    theta: list[float] = Field(default_factory=list, description="Raw parameters in the model's column order")
    focal_px: float = Field(1.0, gt=0, description="Focal length used to convert thresholds and residuals")
    theta_std: list[float] = Field(default_factory=list, description="Standard errors of theta from the inlier residual scatter")
    stage_inliers: list[int] = Field(default_factory=list)
    stage_iterations: list[int] = Field(default_factory=list)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_split(self):
        """Per-camera corrections must differ by exactly Δω."""
        gap = (self.omega1 - self.omega0 - self.d_omega).as_array()
        if np.max(np.abs(gap)) > 1e-12:
            raise ValueError(f"omega1 - omega0 differs from d_omega by {gap.tolist()}")
        return self

    @classmethod
    def zero(cls, model: ModelKind = ModelKind.FOUR_PARAM) -> "RectificationSolution":
        """The no-correction solution."""
        zero = Rotation3()
        return cls(model=model, d_omega=zero, omega0=zero, omega1=zero)

    @property
    def rms_dy_px(self) -> float:
        return self.rms_dy_inliers * self.focal_px


@dataclass
class ConstraintRow:
    """One linear constraint coefficients·θ = rhs."""
    coefficients: NDArray[np.float64]
    rhs: float
    index: int = 0


# ============================================================================
# Row assembly
# ============================================================================

def row_full(m: Match, index: int = 0) -> ConstraintRow:
    x0, y0, y1 = m.n0.x, m.n0.y, m.n1.y
    dx = m.dx
    coefficients = np.array([1.0 + y0 * y1, -x0 * y1, -x0, -dx * y1, -dx, y0])
    return ConstraintRow(coefficients=coefficients, rhs=m.dy, index=index)


def row_reduced(m: Match, index: int = 0) -> ConstraintRow:
    """The depth-free row: columns Δω and Δf of row_full."""
    x0, y0, y1 = m.n0.x, m.n0.y, m.n1.y
    coefficients = np.array([1.0 + y0 * y1, -x0 * y1, -x0, y0])
    return ConstraintRow(coefficients=coefficients, rhs=m.dy, index=index)


def row_x_constraint(m: Match, index: int = 0) -> ConstraintRow:
    """
    The horizontal row of the cross-multiplied system, for diagnostics only.

    It is dominated by the unknown depth and is never solved.
    """
    x0, y0, x1 = m.n0.x, m.n0.y, m.n1.x
    dx = m.dx
    coefficients = np.array([-y0 * x1, 1.0 + x0 * x1, -y0, dx * x1, 0.0, -x1])
    return ConstraintRow(coefficients=coefficients, rhs=0.0, index=index)


def design_matrix(matches: MatchSet, model: ModelKind) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Vectorised rows of every match for ``model``: (A, b)."""
    x0, y0 = matches.n0[:, 0], matches.n0[:, 1]
    y1 = matches.n1[:, 1]
    dx = matches.dx
    full = np.column_stack((1.0 + y0 * y1, -x0 * y1, -x0, -dx * y1, -dx, y0))
    return full[:, list(model.columns)], matches.dy


def residuals(matches: MatchSet, theta: Sequence[float], model: ModelKind) -> NDArray[np.float64]:
    """coeffs·θ − Δy per match, in normalized units."""
    a, b = design_matrix(matches, model)
    return a @ np.asarray(theta, dtype=np.float64) - b


def x_constraint_residuals(matches: MatchSet, sol: RectificationSolution) -> NDArray[np.float64]:
    """Residuals of the horizontal rows at the solution's full parameter vector."""
    x0, y0 = matches.n0[:, 0], matches.n0[:, 1]
    x1 = matches.n1[:, 0]
    dx = matches.dx
    a = np.column_stack((-y0 * x1, 1.0 + x0 * x1, -y0, dx * x1, np.zeros_like(x0), -x1))
    return a @ full_theta(sol)


def full_theta(sol: RectificationSolution) -> NDArray[np.float64]:
    """Solution as a six-vector in row_full order, absent parameters zero."""
    return np.array([
        sol.d_omega.omega_x, sol.d_omega.omega_y, sol.d_omega.omega_z,
        sol.omega_y1 or 0.0, sol.omega_z1 or 0.0, sol.d_f,
    ])


# ============================================================================
# Least squares
# ============================================================================

def _solve_dense(
    a: NDArray[np.float64],
    b: NDArray[np.float64],
    names: Sequence[str]
) -> NDArray[np.float64]:
    n, p = a.shape
    if n < p:
        raise RectificationError(ErrorType.TOO_FEW_MATCHES, f"{n} rows for {p} parameters")
    q, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        missing = [names[i] for i in piv[rank:]]
        raise RectificationError(ErrorType.DEGENERATE_GEOMETRY, f"rank {rank} of {p}", detail=missing)
    theta = np.empty(p)
    theta[piv] = scipy.linalg.solve_triangular(r, q.T @ b)
    return theta


def lsq_solve(rows: Sequence[ConstraintRow], names: Optional[Sequence[str]] = None) -> NDArray[np.float64]:
    """Least-squares θ for the stacked rows via column-pivoted QR."""
    if not rows:
        raise RectificationError(ErrorType.TOO_FEW_MATCHES, "no constraint rows")
    a = np.vstack([row.coefficients for row in rows])
    b = np.array([row.rhs for row in rows])
    if names is None:
        by_width = {6: PARAM_NAMES, 4: ModelKind.FOUR_PARAM.param_names, 3: ModelKind.THREE_PARAM.param_names}
        names = by_width.get(a.shape[1], tuple(f"theta_{i}" for i in range(a.shape[1])))
    return _solve_dense(a, b, names)


def split_corrections(
    d_omega: Rotation3,
    omega_y1: Optional[float] = None,
    omega_z1: Optional[float] = None
) -> tuple[Rotation3, Rotation3]:
    """
    Per-camera corrections (ω0, ω1) with ω1 − ω0 = Δω.

    Pitch is always split evenly. Pan and roll use the absolute right-camera
    estimate when present and are otherwise split evenly too.
    """
    half = d_omega.as_array() / 2.0
    omega1 = half.copy()
    if omega_y1 is not None:
        omega1[1] = omega_y1
    if omega_z1 is not None:
        omega1[2] = omega_z1
    omega0 = omega1 - d_omega.as_array()
    if omega_y1 is None and omega_z1 is None:
        omega0 = -half
    return Rotation3.from_array(omega0), Rotation3.from_array(omega1)


def standard_errors(a: NDArray[np.float64], resid: NDArray[np.float64], mask: NDArray[np.bool_]) -> NDArray[np.float64]:
    """s·sqrt(diag((AᵀA)⁻¹)) over the masked rows, s² being their residual variance."""
    n, p = int(mask.sum()), a.shape[1]
    if n <= p:
        return np.zeros(p)
    rows = a[mask]
    s2 = float(resid[mask] @ resid[mask]) / (n - p)
    cov = s2 * scipy.linalg.pinvh(rows.T @ rows)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _robust_stage(
    a: NDArray[np.float64],
    b: NDArray[np.float64],
    thresholds: Sequence[float],
    start: NDArray[np.bool_],
    min_count: int,
    names: Sequence[str],
    tag: str
) -> tuple[NDArray[np.float64], NDArray[np.bool_], int]:
    mask = start.copy()
    theta = np.zeros(a.shape[1])
    iterations = 0
    for t in thresholds:
        count = int(mask.sum())
        if count < min_count:
            raise RectificationError(ErrorType.TOO_FEW_MATCHES, f"{count} matches, need {min_count}")
        theta = _solve_dense(a[mask], b[mask], names)
        mask = np.abs(a @ theta - b) <= t
        iterations += 1
        logger.debug(f"[Solver] {tag} iteration {iterations}: {int(mask.sum())} inliers at {t:.3g}")
    return theta, mask, iterations


def robust_solve(matches: MatchSet, cfg: Optional[SolverConfig] = None) -> RectificationSolution:
    """
    Iterated least squares over a decreasing threshold schedule.

    Stage 1 estimates Δω and Δf (Δω only for the 3-param model) from all
    matches. The 5- and 6-param models then re-solve with absolute pan/roll
    starting from the stage-1 inliers, provided those inliers span enough
    disparity to separate depth from rotation.
    """
    cfg = cfg or SolverConfig()
    focal = matches.k1.f
    thresholds = [t / focal for t in cfg.schedule()]
    n = len(matches)

    stage1 = ModelKind.THREE_PARAM if cfg.model == ModelKind.THREE_PARAM else ModelKind.FOUR_PARAM
    needed = cfg.required_matches(cfg.model)
    if n < needed:
        raise RectificationError(ErrorType.TOO_FEW_MATCHES, f"{n} matches, need {needed} for {cfg.model.value}")

    a, b = design_matrix(matches, stage1)
    theta, inliers, iterations = _robust_stage(
        a, b, thresholds, np.ones(n, dtype=bool), cfg.required_matches(stage1), stage1.param_names, "stage 1"
    )
    stage_inliers = [int(inliers.sum())]
    stage_iterations = [iterations]
    model = stage1

    if cfg.model in (ModelKind.FIVE_PARAM, ModelKind.SIX_PARAM):
        spread = float(np.ptp(matches.dx[inliers]) * focal) if inliers.any() else 0.0
        if spread < cfg.min_depth_spread_px:
            absolute = [name for name in cfg.model.param_names if name.endswith("1")]
            raise RectificationError(
                ErrorType.DEGENERATE_GEOMETRY,
                f"inlier disparity spread {spread:.2f} px < {cfg.min_depth_spread_px} px",
                detail=absolute
            )
        a, b = design_matrix(matches, cfg.model)
        theta, inliers, iterations = _robust_stage(
            a, b, thresholds, inliers, cfg.required_matches(cfg.model), cfg.model.param_names, "stage 2"
        )
        stage_inliers.append(int(inliers.sum()))
        stage_iterations.append(iterations)
        model = cfg.model

    values = dict(zip(model.param_names, theta.tolist()))
    d_omega = Rotation3(
        omega_x=values["d_omega_x"], omega_y=values["d_omega_y"], omega_z=values["d_omega_z"]
    )
    omega_y1 = values.get("omega_y1")
    omega_z1 = values.get("omega_z1")
    omega0, omega1 = split_corrections(d_omega, omega_y1, omega_z1)

    resid = a @ theta - b
    inlier_count = int(inliers.sum())
    rms = float(np.sqrt(np.mean(resid[inliers] ** 2))) if inlier_count else 0.0

    solution = RectificationSolution(
        model=model,
        d_omega=d_omega,
        omega_y1=omega_y1,
        omega_z1=omega_z1,
        d_f=values.get("d_f", 0.0),
        omega0=omega0,
        omega1=omega1,
        inlier_count=inlier_count,
        match_count=n,
        inlier_rate=inlier_count / n,
        rms_dy_inliers=rms,
        iterations=iterations,
        stage_iterations=stage_iterations,
        theta=theta.tolist(),
        theta_std=standard_errors(a, resid, inliers).tolist(),
        focal_px=focal,
        stage_inliers=stage_inliers,
    )
    logger.info(
        f"[Solver] {model.value}: {inlier_count}/{n} inliers, "
        f"Δω={[round(math.degrees(v), 4) for v in d_omega.as_array()]}°, Δf={solution.d_f:.5f}"
    )
    return solution
