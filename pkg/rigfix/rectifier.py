"""
Rectifier

Turns a solution into per-camera homographies, warps images and match
coordinates with them, and summarises vertical and horizontal disparity.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field
from scipy import ndimage

from rigfix.camera_model import Intrinsics, Mat3, Rotation3, rotation_exact
from rigfix.correspondence import GrayImage, MatchSet
from rigfix.errors import ErrorType, RectificationError
from rigfix.solver import RectificationSolution

logger = logging.getLogger(__name__)

_IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class RectifyMap:
    """
    Pixel homography of one camera: H = K_out · R(ω) · K_in⁻¹.

    ``k_in`` is the camera's true intrinsics (the right camera's focal length
    includes the relative scale), ``k_out`` the shared output intrinsics.
    """
    homography: Mat3
    k_in: Intrinsics
    k_out: Intrinsics
    rotation: Rotation3

    def is_identity(self) -> bool:
        return bool(np.max(np.abs(self.homography - np.eye(3))) <= _IDENTITY_TOL)

    def apply(self, pixels: NDArray[np.float64]) -> NDArray[np.float64]:
        """Map (N, 2) input pixels to output pixels."""
        pts = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
        h = np.column_stack((pts, np.ones(len(pts)))) @ self.homography.T
        return h[:, :2] / h[:, 2:3]


class DisparityStats(BaseModel):
    """Disparity summary in pixels."""
    count: int = Field(..., ge=1)
    fraction_dy_below_1px: float = Field(..., ge=0, le=1)
    median_abs_dy_px: float
    rms_dy_px: float
    dx_at_infinity_px: float = Field(..., description="Median Δx of the lowest-Δx decile")


def _map(k: Intrinsics, k_in: Intrinsics, f_out: float, omega: Rotation3) -> RectifyMap:
    k_out = Intrinsics(f=f_out, cx=k.cx, cy=k.cy)
    h = k_out.matrix() @ rotation_exact(omega) @ np.linalg.inv(k_in.matrix())
    return RectifyMap(homography=h, k_in=k_in, k_out=k_out, rotation=omega)


def build_maps(k0: Intrinsics, k1: Intrinsics, sol: RectificationSolution) -> tuple[RectifyMap, RectifyMap]:
    """
    Rectifying maps for both cameras.

    Each camera's rays are rotated by its correction; the right camera's
    focal length is taken as f1·(1 + Δf). Both outputs use the geometric
    mean of the nominal focal lengths and keep their principal points.
    """
    scale = 1.0 + sol.d_f
    if not scale > 0:
        raise RectificationError(ErrorType.INVALID_INTRINSICS, f"relative scale 1 + Δf = {scale}")
    k_in1 = Intrinsics(f=k1.f * scale, cx=k1.cx, cy=k1.cy)
    f_out = math.sqrt(k0.f * k1.f)
    return _map(k0, k0, f_out, sol.omega0), _map(k1, k_in1, f_out, sol.omega1)


def warp(img: GrayImage, rmap: RectifyMap) -> tuple[GrayImage, NDArray[np.bool_]]:
    """
    Inverse-map ``img`` through the homography with bilinear sampling.

    Returns the warped image and its validity mask; pixels whose source lies
    outside the input are 0 and invalid.
    """
    h, w = img.data.shape
    if rmap.is_identity():
        return GrayImage(img.data.copy()), np.ones((h, w), dtype=bool)

    try:
        inverse = np.linalg.inv(rmap.homography)
    except np.linalg.LinAlgError as e:
        raise RectificationError(ErrorType.INVALID_INTRINSICS, f"singular homography: {e}")

    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    src = inverse @ np.stack((u.ravel(), v.ravel(), np.ones(u.size)))
    with np.errstate(divide="ignore", invalid="ignore"):
        su = (src[0] / src[2]).reshape(h, w)
        sv = (src[1] / src[2]).reshape(h, w)
    eps = 1e-9
    valid = (src[2].reshape(h, w) > 0) & (su >= -eps) & (su <= w - 1 + eps) & (sv >= -eps) & (sv <= h - 1 + eps)
    su = np.where(valid, su, 0.0)
    sv = np.where(valid, sv, 0.0)

    out = ndimage.map_coordinates(img.data, [sv, su], order=1, mode="nearest")
    out[~valid] = 0.0
    return GrayImage(out), valid


def apply_to_matches(matches: MatchSet, sol: RectificationSolution) -> MatchSet:
    """Rectified copy of ``matches``: both points mapped, intrinsics replaced by the output ones."""
    m0, m1 = build_maps(matches.k0, matches.k1, sol)
    return MatchSet(
        m0.apply(matches.left_px), m1.apply(matches.right_px), m0.k_out, m1.k_out,
        costs=matches.costs.copy(), width=matches.width, height=matches.height
    )


def stats(matches: MatchSet, f: float) -> DisparityStats:
    """Δy and far-point Δx statistics in pixels."""
    n = len(matches)
    if n == 0:
        raise RectificationError(ErrorType.EMPTY_INPUT, "no matches to summarise")
    abs_dy = np.abs(matches.dy * f)
    dx = np.sort(matches.dx * f)
    decile = dx[:math.ceil(n / 10)]
    return DisparityStats(
        count=n,
        fraction_dy_below_1px=float(np.mean(abs_dy <= 1.0)),
        median_abs_dy_px=float(np.median(abs_dy)),
        rms_dy_px=float(np.sqrt(np.mean(abs_dy ** 2))),
        dx_at_infinity_px=float(np.median(decile)),
    )


# ============================================================================
# Cropping
# ============================================================================

def crop_valid(mask: NDArray[np.bool_]) -> tuple[int, int, int, int]:
    """
    Largest all-valid axis-aligned rectangle as (top, left, bottom, right), end-exclusive.

    Row-by-row histogram of valid run lengths with a monotone stack; ties keep
    the first rectangle found.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    heights = np.zeros(w, dtype=np.int64)
    best_area, best = 0, (0, 0, 0, 0)
    for row in range(h):
        heights = np.where(mask[row], heights + 1, 0)
        stack: list[tuple[int, int]] = []
        for col in range(w + 1):
            current = int(heights[col]) if col < w else 0
            start = col
            while stack and stack[-1][1] >= current:
                s, height = stack.pop()
                area = height * (col - s)
                if area > best_area:
                    best_area, best = area, (row - height + 1, s, row + 1, col)
                start = s
            stack.append((start, current))
    if best_area == 0:
        raise RectificationError(ErrorType.EMPTY_INPUT, "no valid pixels to crop")
    return best


def crop_pair(
    left: GrayImage,
    right: GrayImage,
    left_mask: NDArray[np.bool_],
    right_mask: NDArray[np.bool_]
) -> tuple[GrayImage, GrayImage, tuple[int, int, int, int]]:
    """Crop both images to the largest rectangle valid in both, keeping rows aligned."""
    top, lft, bottom, rgt = crop_valid(left_mask & right_mask)
    logger.debug(f"[Rectifier] Crop rows {top}:{bottom}, cols {lft}:{rgt}")
    return (
        GrayImage(left.data[top:bottom, lft:rgt].copy()),
        GrayImage(right.data[top:bottom, lft:rgt].copy()),
        (top, lft, bottom, rgt),
    )
