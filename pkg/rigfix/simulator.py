"""
Simulator

Ground-truth rig scenarios: scene points, true misalignments and focal drift,
noisy and outlier-contaminated correspondences, and procedurally textured
image pairs of a fronto-parallel plane.

Random numbers come from xorshift64* so fixtures are reproducible bit for bit:
    state ^= state >> 12; state ^= state << 25; state ^= state >> 27
    output = state * 0x2545F4914F6CDD1D  (mod 2^64)
seeded through one splitmix64 step. Uniforms take the top 53 bits and normals
use the cosine branch of Box-Muller.
"""

from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

from rigfix.camera_model import (
    Intrinsics,
    NormalizedPoint,
    Rotation3,
    ScenePoint,
    project_left,
    project_right,
    reproject_left_to_right,
    rotation_exact,
)
from rigfix.correspondence import GrayImage, MatchSet
from rigfix.errors import ErrorType, RectificationError
from rigfix.solver import ModelKind, RectificationSolution

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_RENDER_SALT = 0xD1B54A32D192ED03
_TEXTURE_OCTAVES = 4
_TEXTURE_BLUR = 0.8


# ============================================================================
# Random source
# ============================================================================

def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Xorshift64Star:
    """64-bit xorshift* generator."""

    def __init__(self, seed: int):
        self._state = _splitmix64(seed & _MASK64) or _GOLDEN

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0 ** -53)

    def normal(self) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


# ============================================================================
# Configuration and truth
# ============================================================================

class SimConfig(BaseModel):
    """Scenario generator settings. Angles in degrees."""
    num_points: int = Field(500, ge=1)
    width: int = Field(640, ge=16)
    height: int = Field(480, ge=16)
    focal_px: float = Field(500.0, gt=0)
    d_min: float = Field(0.0, ge=0, description="Smallest normalized disparity (1/Z)")
    d_max: float = Field(0.1, ge=0, description="Largest normalized disparity (1/Z)")
    infinity_fraction: float = Field(0.0, ge=0, le=1, description="Share of points placed at infinity")
    d_omega_max_deg: float = Field(1.0, ge=0, description="Per-axis bound of the random relative rotation")
    omega1_pan_roll_max_deg: float = Field(0.0, ge=0, description="Bound of the right camera's absolute pan/roll")
    common_pitch_max_deg: float = Field(0.0, ge=0, description="Bound of the pitch shared by both cameras")
    df_max: float = Field(0.01, ge=0, description="Bound of the random relative focal drift")
    d_omega_deg: Optional[list[float]] = Field(None, description="Explicit relative rotation [x, y, z]")
    omega1_pan_roll_deg: Optional[list[float]] = Field(None, description="Explicit right-camera [pan, roll]")
    common_pitch_deg: Optional[float] = Field(None, description="Explicit shared pitch")
    d_f: Optional[float] = Field(None, gt=-0.5, lt=0.5, description="Explicit relative focal drift")
    noise_sigma_px: float = Field(0.0, ge=0)
    outlier_rate: float = Field(0.0, ge=0, lt=1)
    outlier_px: float = Field(20.0, ge=0, description="Half-width of the uniform vertical outlier error")
    plane_disparity: float = Field(0.02, ge=0, description="Disparity of the textured plane")
    texture_cell_px: int = Field(16, ge=2, description="Cell size of the coarsest texture octave")
    seed: int = Field(1, ge=0)

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_ranges(self):
        """Disparity range must be non-empty; explicit vectors must have the right length."""
        if self.d_max < self.d_min:
            raise ValueError(f"empty disparity range [{self.d_min}, {self.d_max}]")
        if self.d_omega_deg is not None and len(self.d_omega_deg) != 3:
            raise ValueError("d_omega_deg needs three components")
        if self.omega1_pan_roll_deg is not None and len(self.omega1_pan_roll_deg) != 2:
            raise ValueError("omega1_pan_roll_deg needs two components")
        return self

    def intrinsics(self) -> Intrinsics:
        return Intrinsics(f=self.focal_px, cx=self.width / 2.0, cy=self.height / 2.0)


class SceneTruth(BaseModel):
    """Generated scene with its true rig state, the oracle for recovery tests."""
    points: list[ScenePoint]
    outlier_flags: list[bool]
    true_omega0: Rotation3
    true_omega1: Rotation3
    true_df: float
    k0: Intrinsics
    k1: Intrinsics
    noise_sigma_px: float = 0.0
    outlier_rate: float = 0.0
    outlier_px: float = 20.0
    width: int = 640
    height: int = 480
    seed: int = 1

    @model_validator(mode="after")
    def validate_outliers(self):
        if len(self.outlier_flags) != len(self.points):
            raise ValueError("one outlier flag per point required")
        if not 0 <= self.outlier_rate < 1:
            raise ValueError("outlier_rate must lie in [0, 1)")
        return self

    @property
    def true_d_omega(self) -> Rotation3:
        return self.true_omega1 - self.true_omega0

    @property
    def true_theta(self) -> NDArray[np.float64]:
        """Truth in row_full order [Δωx, Δωy, Δωz, ωy1, ωz1, Δf]."""
        d = self.true_d_omega
        return np.array([d.omega_x, d.omega_y, d.omega_z,
                         self.true_omega1.omega_y, self.true_omega1.omega_z, self.true_df])

    def left_rays(self) -> NDArray[np.float64]:
        """Left-camera normalized rays [x0, y0, 1] of every point."""
        r0 = rotation_exact(self.true_omega0)
        pts = np.array([p.direction() for p in self.points]).reshape(-1, 3)
        rays = pts @ r0  # rows of R0ᵀ·P
        return rays / rays[:, 2:3]

    def scaled(self, factor: float) -> "SceneTruth":
        """Same left rays and disparities, misalignment and drift multiplied by ``factor``."""
        rays = self.left_rays()
        weights = self._disparities()
        omega1 = Rotation3(
            omega_x=self.true_omega1.omega_x - self.true_d_omega.omega_x / 2.0 + factor * self.true_d_omega.omega_x / 2.0,
            omega_y=factor * self.true_omega1.omega_y,
            omega_z=factor * self.true_omega1.omega_z,
        )
        omega0 = omega1 - self.true_d_omega * factor
        points = _place_points(rays, weights, omega0)
        return self.model_copy(update={
            "points": points, "true_omega0": omega0, "true_omega1": omega1, "true_df": self.true_df * factor,
        })

    def _disparities(self) -> NDArray[np.float64]:
        r0 = rotation_exact(self.true_omega0)
        pts = np.array([p.direction() for p in self.points]).reshape(-1, 3)
        depth = (pts @ r0)[:, 2]
        return np.array([p.w for p in self.points]) / depth


def _place_points(rays: NDArray[np.float64], disparities: NDArray[np.float64], omega0: Rotation3) -> list[ScenePoint]:
    """World points on the given left rays at unit left depth, weight = disparity."""
    world = rays @ rotation_exact(omega0).T  # rows of R0·ray
    return [ScenePoint(X=x, Y=y, Z=z, w=float(d)) for (x, y, z), d in zip(world.tolist(), disparities)]


def _truth_rotations(cfg: SimConfig, rng: Xorshift64Star) -> tuple[Rotation3, Rotation3, float]:
    # Every draw happens regardless of overrides so the point stream stays fixed
    rel = np.array([rng.uniform(-cfg.d_omega_max_deg, cfg.d_omega_max_deg) for _ in range(3)])
    abs_pan_roll = np.array([rng.uniform(-cfg.omega1_pan_roll_max_deg, cfg.omega1_pan_roll_max_deg) for _ in range(2)])
    pitch = rng.uniform(-cfg.common_pitch_max_deg, cfg.common_pitch_max_deg)
    d_f = rng.uniform(-cfg.df_max, cfg.df_max)

    if cfg.d_omega_deg is not None:
        rel = np.asarray(cfg.d_omega_deg, dtype=float)
    if cfg.omega1_pan_roll_deg is not None:
        abs_pan_roll = np.asarray(cfg.omega1_pan_roll_deg, dtype=float)
    if cfg.common_pitch_deg is not None:
        pitch = cfg.common_pitch_deg
    if cfg.d_f is not None:
        d_f = cfg.d_f

    d_omega = Rotation3.from_degrees(rel)
    omega1 = Rotation3(
        omega_x=math.radians(pitch) + d_omega.omega_x / 2.0,
        omega_y=math.radians(abs_pan_roll[0]),
        omega_z=math.radians(abs_pan_roll[1]),
    )
    return omega1 - d_omega, omega1, float(d_f)


# ============================================================================
# Scene generation and rendering
# ============================================================================

def generate_scene(cfg: SimConfig) -> SceneTruth:
    """
    Sample points uniformly over the left image and the disparity range.

    A point is stored on its left ray at unit depth with weight equal to its
    disparity, so the right camera sees it shifted by exactly ``d`` in x.
    """
    rng = Xorshift64Star(cfg.seed)
    omega0, omega1, d_f = _truth_rotations(cfg, rng)
    k = cfg.intrinsics()

    rays = np.empty((cfg.num_points, 3))
    disparities = np.empty(cfg.num_points)
    flags: list[bool] = []
    for i in range(cfg.num_points):
        u = rng.uniform(0.0, float(cfg.width))
        v = rng.uniform(0.0, float(cfg.height))
        at_infinity = rng.uniform() < cfg.infinity_fraction
        d = rng.uniform(cfg.d_min, cfg.d_max)
        flags.append(rng.uniform() < cfg.outlier_rate)
        rays[i] = ((u - k.cx) / k.f, (v - k.cy) / k.f, 1.0)
        disparities[i] = 0.0 if at_infinity else d

    scene = SceneTruth(
        points=_place_points(rays, disparities, omega0),
        outlier_flags=flags,
        true_omega0=omega0,
        true_omega1=omega1,
        true_df=d_f,
        k0=k,
        k1=k,
        noise_sigma_px=cfg.noise_sigma_px,
        outlier_rate=cfg.outlier_rate,
        outlier_px=cfg.outlier_px,
        width=cfg.width,
        height=cfg.height,
        seed=cfg.seed,
    )
    logger.debug(f"[Simulator] Scene seed={cfg.seed}: {cfg.num_points} points, {sum(flags)} outliers")
    return scene


def _linearized_right(x0: float, y0: float, d: float, scene: SceneTruth) -> tuple[float, float]:
    """
    Right measurement that satisfies the full constraint row exactly.

    x1 comes from the linearized reprojection scaled by 1 + Δf; y1 solves
    the row for the resulting Δx.
    """
    dw = scene.true_d_omega
    wy1, wz1 = scene.true_omega1.omega_y, scene.true_omega1.omega_z
    df = scene.true_df
    n1 = reproject_left_to_right(NormalizedPoint(x=x0, y=y0), d, scene.true_omega0, scene.true_omega1)
    x1 = (1.0 + df) * n1.x
    ddx = x1 - x0
    numerator = y0 + dw.omega_x - x0 * dw.omega_z - ddx * wz1 + y0 * df
    denominator = 1.0 - y0 * dw.omega_x + x0 * dw.omega_y + ddx * wy1
    return x1, numerator / denominator


def render_matches(scene: SceneTruth, linearized: bool = True) -> MatchSet:
    """
    Correspondences of every scene point as measured by the misaligned rig.

    ``linearized`` produces data consistent with the linear constraint model;
    otherwise the exact rotations are applied. Gaussian noise of
    ``noise_sigma_px`` perturbs all four pixel coordinates and outliers get a
    uniform vertical error of up to ``outlier_px`` in the right image.
    Points behind either camera are skipped.
    """
    rng = Xorshift64Star(scene.seed ^ _RENDER_SALT)
    k0, k1 = scene.k0, scene.k1
    scale = 1.0 + scene.true_df
    neg0, neg1 = -scene.true_omega0, -scene.true_omega1

    lefts, rights = [], []
    skipped = 0
    for point, is_outlier in zip(scene.points, scene.outlier_flags):
        noise = [rng.normal() * scene.noise_sigma_px for _ in range(4)]
        gross = rng.uniform(-scene.outlier_px, scene.outlier_px)
        try:
            n0 = project_left(point, neg0, exact=True)
            if linearized:
                depth = float(rotation_exact(scene.true_omega0)[:, 2] @ point.direction())
                x1, y1 = _linearized_right(n0.x, n0.y, point.w / depth, scene)
            else:
                n1 = project_right(point, neg1, exact=True)
                x1, y1 = scale * n1.x, scale * n1.y
        except RectificationError as e:
            if e.error_type != ErrorType.BEHIND_CAMERA:
                raise
            skipped += 1
            continue
        u0, v0 = n0.x * k0.f + k0.cx + noise[0], n0.y * k0.f + k0.cy + noise[1]
        u1, v1 = x1 * k1.f + k1.cx + noise[2], y1 * k1.f + k1.cy + noise[3]
        if is_outlier:
            v1 += gross
        lefts.append((u0, v0))
        rights.append((u1, v1))

    if skipped:
        logger.warning(f"[Simulator] Skipped {skipped} points behind a camera")
    if not lefts:
        return MatchSet.empty(k0, k1, scene.width, scene.height)
    return MatchSet(np.array(lefts), np.array(rights), k0, k1, width=scene.width, height=scene.height)


def solution_from_truth(scene: SceneTruth, model: ModelKind = ModelKind.SIX_PARAM) -> RectificationSolution:
    """The exact correcting solution of a scene, including its shared pitch."""
    n = len(scene.points)
    theta = scene.true_theta[list(model.columns)]
    has_abs = model in (ModelKind.FIVE_PARAM, ModelKind.SIX_PARAM)
    return RectificationSolution(
        model=model,
        d_omega=scene.true_d_omega,
        omega_y1=scene.true_omega1.omega_y if has_abs else None,
        omega_z1=scene.true_omega1.omega_z if model == ModelKind.SIX_PARAM else None,
        d_f=scene.true_df,
        omega0=scene.true_omega0,
        omega1=scene.true_omega1,
        inlier_count=n,
        match_count=n,
        inlier_rate=1.0 if n else 0.0,
        theta=theta.tolist(),
        focal_px=scene.k1.f,
    )


# ============================================================================
# Texture
# ============================================================================

def _lattice_values(ix: NDArray[np.int64], iy: NDArray[np.int64], salt: int) -> NDArray[np.float64]:
    """Uniform [0, 1) value per integer lattice point, independent of the sampled window."""
    z = ix.astype(np.uint64) * np.uint64(_GOLDEN)
    z ^= iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    z ^= np.uint64(salt & _MASK64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def sample_value_noise(
    s: NDArray[np.float64],
    t: NDArray[np.float64],
    seed: int,
    cell: int = 16
) -> NDArray[np.float64]:
    """Texture value at continuous texture coordinates (s, t): 4 octaves of bilinear value noise."""
    total = np.zeros(np.broadcast(s, t).shape)
    amplitude, norm = 1.0, 0.0
    size = float(cell)
    for octave in range(_TEXTURE_OCTAVES):
        salt = _splitmix64(seed * _TEXTURE_OCTAVES + octave)
        gs, gt = s / size, t / size
        i0, j0 = np.floor(gs).astype(np.int64), np.floor(gt).astype(np.int64)
        fs, ft = gs - i0, gt - j0
        # Smoothstep weights keep the texture C1 across cells
        ws, wt = fs * fs * (3 - 2 * fs), ft * ft * (3 - 2 * ft)
        v00 = _lattice_values(i0, j0, salt)
        v10 = _lattice_values(i0 + 1, j0, salt)
        v01 = _lattice_values(i0, j0 + 1, salt)
        v11 = _lattice_values(i0 + 1, j0 + 1, salt)
        top = v00 + (v10 - v00) * ws
        bottom = v01 + (v11 - v01) * ws
        total += amplitude * (top + (bottom - top) * wt)
        norm += amplitude
        amplitude /= 2.0
        size /= 2.0
    return total / norm


def render_value_noise(
    width: int,
    height: int,
    seed: int,
    cell: int = 16,
    offset: tuple[float, float] = (0.0, 0.0)
) -> GrayImage:
    """Stand-alone texture image; pixel (u, v) samples the texture at (u - du, v - dv)."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    values = sample_value_noise(u - offset[0], v - offset[1], seed, cell)
    return GrayImage(ndimage.gaussian_filter(values, _TEXTURE_BLUR, mode="nearest"))


def _plane_view(
    k: Intrinsics,
    texture_k: Intrinsics,
    omega: Rotation3,
    scale: float,
    shift: float,
    width: int,
    height: int,
    seed: int,
    cell: int
) -> GrayImage:
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    rays = np.stack(((u - k.cx) / (k.f * scale), (v - k.cy) / (k.f * scale), np.ones_like(u)), axis=-1)
    world = rays @ rotation_exact(omega).T
    s = texture_k.f * (world[..., 0] / world[..., 2] - shift) + texture_k.cx
    t = texture_k.f * (world[..., 1] / world[..., 2]) + texture_k.cy
    values = sample_value_noise(s, t, seed, cell)
    return GrayImage(ndimage.gaussian_filter(values, _TEXTURE_BLUR, mode="nearest"))


def render_texture_pair(cfg: SimConfig) -> tuple[GrayImage, GrayImage, SceneTruth]:
    """
    Left and right views of a textured fronto-parallel plane at ``plane_disparity``.

    A pixel's ray is corrected into the rig frame and intersected with the
    plane; the right camera sits one baseline to the right, so its
    intersection is shifted by the plane disparity in texture space.
    """
    if cfg.width < 16 or cfg.height < 16:
        raise RectificationError(ErrorType.CONFIG, f"image {cfg.width}x{cfg.height} too small")
    plane_cfg = cfg.model_copy(update={
        "d_min": cfg.plane_disparity, "d_max": cfg.plane_disparity, "infinity_fraction": 0.0,
    })
    scene = generate_scene(plane_cfg)
    k = cfg.intrinsics()
    common = dict(width=cfg.width, height=cfg.height, seed=cfg.seed, cell=cfg.texture_cell_px)
    left = _plane_view(scene.k0, k, scene.true_omega0, 1.0, 0.0, **common)
    right = _plane_view(scene.k1, k, scene.true_omega1, 1.0 + scene.true_df, cfg.plane_disparity, **common)
    logger.info(f"[Simulator] Rendered {cfg.width}x{cfg.height} texture pair, seed={cfg.seed}")
    return left, right, scene
