"""
Camera Model

Projection geometry for a two-camera rig with unit baseline: pixel <-> normalized
coordinates, linearized and exact small rotations, left-camera projection and
inverse-depth reprojection into the right camera.

Sign convention: a rotation ``ω`` attached to a camera is its *correcting*
rotation. A camera with correcting rotation ``ω`` observes the rectified world
through ``R(ω)ᵀ = R(−ω)``, and rectification applies ``R(ω)`` to its rays. This
is the convention of the Δy constraint rows in ``rigfix.solver``, so a rig is
observed with ``project_left(P, -ω0)`` and ``project_right(P, -ω1)``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field

from rigfix.errors import ErrorType, RectificationError

# 3x3 float matrix, row-major
Mat3 = NDArray[np.float64]

# Below this angle the exponential map switches to its Taylor series
_EXP_TAYLOR_LIMIT = 1e-6


# ============================================================================
# Domain Types
# ============================================================================

class Intrinsics(BaseModel):
    """Pinhole intrinsics of one camera (square pixels)."""
    f: float = Field(..., gt=0, description="Focal length in pixels")
    cx: float = Field(..., description="Principal point x in pixels")
    cy: float = Field(..., description="Principal point y in pixels")

    model_config = {"frozen": True, "allow_inf_nan": False, "extra": "forbid"}

    def matrix(self) -> Mat3:
        """The 3x3 calibration matrix K."""
        return np.array([[self.f, 0.0, self.cx],
                         [0.0, self.f, self.cy],
                         [0.0, 0.0, 1.0]])

    def scaled(self, factor: float) -> "Intrinsics":
        """Same principal point, focal length multiplied by ``factor``."""
        return Intrinsics(f=self.f * factor, cx=self.cx, cy=self.cy)


class PixelPoint(BaseModel):
    """A point in pixel coordinates."""
    u: float
    v: float

    model_config = {"frozen": True, "allow_inf_nan": False}


class NormalizedPoint(BaseModel):
    """A point in normalized image coordinates."""
    x: float
    y: float

    model_config = {"frozen": True, "allow_inf_nan": False}


class Rotation3(BaseModel):
    """Small rotation vector (radians): pitch, pan and roll about x, y, z."""
    omega_x: float = 0.0
    omega_y: float = 0.0
    omega_z: float = 0.0

    model_config = {"frozen": True, "allow_inf_nan": False}

    @classmethod
    def from_array(cls, values) -> "Rotation3":
        x, y, z = (float(v) for v in values)
        return cls(omega_x=x, omega_y=y, omega_z=z)

    @classmethod
    def from_degrees(cls, values) -> "Rotation3":
        return cls.from_array(np.radians(np.asarray(values, dtype=float)))

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.omega_x, self.omega_y, self.omega_z])

    def degrees(self) -> list[float]:
        return [math.degrees(v) for v in (self.omega_x, self.omega_y, self.omega_z)]

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def __add__(self, other: "Rotation3") -> "Rotation3":
        return Rotation3.from_array(self.as_array() + other.as_array())

    def __sub__(self, other: "Rotation3") -> "Rotation3":
        return Rotation3.from_array(self.as_array() - other.as_array())

    def __neg__(self) -> "Rotation3":
        return Rotation3.from_array(-self.as_array())

    def __mul__(self, factor: float) -> "Rotation3":
        return Rotation3.from_array(self.as_array() * factor)

    __rmul__ = __mul__


class ScenePoint(BaseModel):
    """
    A world point in the rig frame (x right along the baseline, y down, z forward).

    ``w`` is the homogeneous weight: ``w = 0`` places the point at infinity in
    direction (X, Y, Z). The right camera sees ``(X + w, Y, Z)``.
    """
    X: float
    Y: float
    Z: float
    w: float = 1.0

    model_config = {"frozen": True, "allow_inf_nan": False}

    def direction(self) -> NDArray[np.float64]:
        return np.array([self.X, self.Y, self.Z])


# ============================================================================
# Coordinate conversion
# ============================================================================

def _check_intrinsics(k: Intrinsics) -> None:
    values = (k.f, k.cx, k.cy)
    if not all(math.isfinite(v) for v in values) or k.f <= 0:
        raise RectificationError(ErrorType.INVALID_INTRINSICS, f"f={k.f}, cx={k.cx}, cy={k.cy}")


def pixel_to_normalized(p: PixelPoint, k: Intrinsics) -> NormalizedPoint:
    """x = (u - cx) / f, y = (v - cy) / f."""
    _check_intrinsics(k)
    if not (math.isfinite(p.u) and math.isfinite(p.v)):
        raise RectificationError(ErrorType.INVALID_INTRINSICS, f"non-finite pixel ({p.u}, {p.v})")
    return NormalizedPoint(x=(p.u - k.cx) / k.f, y=(p.v - k.cy) / k.f)


def normalized_to_pixel(p: NormalizedPoint, k: Intrinsics) -> PixelPoint:
    """Inverse of pixel_to_normalized."""
    _check_intrinsics(k)
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise RectificationError(ErrorType.INVALID_INTRINSICS, f"non-finite point ({p.x}, {p.y})")
    return PixelPoint(u=p.x * k.f + k.cx, v=p.y * k.f + k.cy)


def pixels_to_normalized(uv: NDArray[np.float64], k: Intrinsics) -> NDArray[np.float64]:
    """Vectorised pixel_to_normalized for an (N, 2) array."""
    _check_intrinsics(k)
    uv = np.asarray(uv, dtype=np.float64)
    return np.column_stack(((uv[:, 0] - k.cx) / k.f, (uv[:, 1] - k.cy) / k.f))


# ============================================================================
# Rotations
# ============================================================================

def skew(v) -> Mat3:
    """Cross-product matrix [v]x."""
    x, y, z = (float(c) for c in v)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def rotation_linearized(w: Rotation3) -> Mat3:
    """First-order rotation I + [ω]x."""
    return np.eye(3) + skew(w.as_array())


def rotation_exact(w: Rotation3) -> Mat3:
    """Axis-angle exponential of [ω]x (Rodrigues)."""
    k = skew(w.as_array())
    k2 = k @ k
    theta = w.norm()
    if theta < _EXP_TAYLOR_LIMIT:
        return np.eye(3) + k + 0.5 * k2
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * k2


def _dehomogenize(h: NDArray[np.float64], what: str) -> NormalizedPoint:
    if h[2] <= 0:
        raise RectificationError(ErrorType.BEHIND_CAMERA, f"{what}: third coordinate {h[2]:.6g}")
    return NormalizedPoint(x=float(h[0] / h[2]), y=float(h[1] / h[2]))


# ============================================================================
# Projection
# ============================================================================

def project_left(P: ScenePoint, w0: Rotation3, exact: bool = False) -> NormalizedPoint:
    """Project a scene point through I + [ω0]x (or R(ω0) when exact) into the left camera."""
    r = rotation_exact(w0) if exact else rotation_linearized(w0)
    return _dehomogenize(r @ P.direction(), "left projection")


def project_right(P: ScenePoint, w1: Rotation3, exact: bool = False) -> NormalizedPoint:
    """Project through the right camera: rotate (X + w, Y, Z) and dehomogenize."""
    r = rotation_exact(w1) if exact else rotation_linearized(w1)
    shifted = P.direction() + np.array([P.w, 0.0, 0.0])
    return _dehomogenize(r @ shifted, "right projection")


def reproject_left_to_right(
    p0: NormalizedPoint,
    d: float,
    w0: Rotation3,
    w1: Rotation3
) -> NormalizedPoint:
    """
    Transfer a left normalized point with inverse depth ``d`` into the right camera.

    Evaluates the linearized chain componentwise:
        x1 ~ x0 + Δωz·y0 − Δωy + d
        y1 ~ y0 − Δωz·x0 + Δωx − ωz1·d
        w  ~ 1 + Δωy·x0 − Δωx·y0 + ωy1·d
    with Δω = ω1 − ω0, i.e. (I + [Δω]x)ᵀ·[x0 y0 1]ᵀ + d·[1, −ωz1, ωy1]ᵀ.
    Only the relative orientation enters for d = 0.
    """
    dw = (w1 - w0).as_array()
    h = rotation_linearized(Rotation3.from_array(dw)).T @ np.array([p0.x, p0.y, 1.0])
    h = h + d * np.array([1.0, -w1.omega_z, w1.omega_y])
    return _dehomogenize(h, "right reprojection")
