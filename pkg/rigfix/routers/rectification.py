"""Rectification endpoints."""
import logging

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, Security, status
from fastapi.security import APIKeyHeader

from rigfix.config import settings
from rigfix.correspondence import MatchSet
from rigfix.errors import RectificationError
from rigfix.formats import solution_report
from rigfix.models import SolveRequest, SolveResponse, fallback_response
from rigfix.pipeline import solve_and_gate

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/v1/rectify", tags=["rectification"])

api_key_header = APIKeyHeader(name="X-API-Key", auto_error=False)


async def get_api_key(
    api_key_header: str = Security(api_key_header),
) -> str:
    """Validate the API key from the header."""
    if not settings.APP_API_KEY:
        return ""

    if api_key_header == settings.APP_API_KEY:
        return api_key_header

    raise HTTPException(
        status_code=status.HTTP_403_FORBIDDEN,
        detail="Could not validate API Key",
    )


def _match_set(request: SolveRequest) -> MatchSet:
    if not request.matches:
        return MatchSet.empty(request.k0, request.k1)
    quads = np.asarray(request.matches, dtype=np.float64)
    return MatchSet(quads[:, :2], quads[:, 2:], request.k0, request.k1)


@router.post("/solve", response_model=SolveResponse)
async def solve(
    request: SolveRequest,
    api_key: str = Depends(get_api_key)
) -> SolveResponse:
    """
    Estimate the rig correction from pixel matches and gate it.

    Estimation failures come back as a MonoFallback report, never as an HTTP error.
    """
    logger.info(f"[API] Solve request with {len(request.matches)} matches")
    solver_cfg = request.solver if request.model is None else request.solver.model_copy(update={"model": request.model})
    try:
        matches = _match_set(request)
        outcome = solve_and_gate(matches, solver_cfg, request.gate)
    except RectificationError as e:
        logger.error(f"[API] Solve failed: {e}")
        return fallback_response(len(request.matches), request.k0, request.k1, str(e))

    report = solution_report(
        outcome.solution, outcome.decision, request.k0, request.k1, len(matches),
        x_rms_px=outcome.x_rms_px, error=outcome.error
    )
    return SolveResponse.model_validate(report)
