"""
Correspondence

Subpixel feature correspondences for a grayscale image pair: Harris corners,
coarse-to-fine ZSSD matching with per-axis parabola refinement, and a
left-right consistency filter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from pydantic import BaseModel, Field
from scipy import ndimage
from scipy.spatial import cKDTree

from rigfix.camera_model import Intrinsics, NormalizedPoint, PixelPoint, pixels_to_normalized
from rigfix.errors import ErrorType, RectificationError

logger = logging.getLogger(__name__)

MIN_IMAGE_SIZE = 16

# Costs at or below this are exact matches and are not refined
_EXACT_COST = 1e-12

# Reverse matches keep their seed as the left point
_SEED_TOL = 1e-6

# Final-level cost samples: the minimum, then its left/right and upper/lower neighbours
_NEIGHBOURS = np.array([(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)], dtype=np.intp)

# Seeds per gathered block of candidate patches
_CHUNK = 512


# ============================================================================
# Images
# ============================================================================

@dataclass
class GrayImage:
    """Single-channel image, luminance in [0, 1], indexed ``data[v, u]``."""
    data: NDArray[np.float64]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise RectificationError(ErrorType.INVALID_IMAGE, f"expected 2-D samples, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise RectificationError(ErrorType.INVALID_IMAGE, "non-finite samples")
        self.data = data

    @classmethod
    def from_samples(cls, width: int, height: int, samples: Sequence[float]) -> "GrayImage":
        values = np.asarray(samples, dtype=np.float64)
        if values.size != width * height:
            raise RectificationError(
                ErrorType.INVALID_IMAGE,
                f"{values.size} samples for a {width}x{height} image"
            )
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> NDArray[np.float64]:
        return self.data.ravel()


def default_intrinsics(img: GrayImage) -> Intrinsics:
    """Nominal intrinsics for an image without calibration: f = width, centred principal point."""
    return Intrinsics(f=float(img.width), cx=img.width / 2.0, cy=img.height / 2.0)


# ============================================================================
# Matches
# ============================================================================

@dataclass(frozen=True)
class Corner:
    """A Harris corner with subpixel position."""
    u: float
    v: float
    score: float


@dataclass(frozen=True)
class Match:
    """One left/right correspondence."""
    left: PixelPoint
    right: PixelPoint
    n0: NormalizedPoint
    n1: NormalizedPoint
    dx: float
    dy: float
    zssd_cost: float


@dataclass
class MatchSet:
    """
    Ordered correspondences stored column-wise.

    Pixel positions are authoritative; normalized coordinates, ``dx`` and
    ``dy`` are derived through ``k0`` (left) and ``k1`` (right).
    """
    left_px: NDArray[np.float64]
    right_px: NDArray[np.float64]
    k0: Intrinsics
    k1: Intrinsics
    costs: Optional[NDArray[np.float64]] = None
    width: int = 0
    height: int = 0
    n0: NDArray[np.float64] = field(init=False, repr=False)
    n1: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self):
        self.left_px = np.asarray(self.left_px, dtype=np.float64).reshape(-1, 2)
        self.right_px = np.asarray(self.right_px, dtype=np.float64).reshape(-1, 2)
        if self.left_px.shape != self.right_px.shape:
            raise ValueError(f"left/right shapes differ: {self.left_px.shape} vs {self.right_px.shape}")
        if self.costs is None:
            self.costs = np.zeros(len(self.left_px))
        self.costs = np.asarray(self.costs, dtype=np.float64).reshape(-1)
        if len(self.costs) != len(self.left_px):
            raise ValueError("one cost per match required")
        self.n0 = pixels_to_normalized(self.left_px, self.k0)
        self.n1 = pixels_to_normalized(self.right_px, self.k1)

    @classmethod
    def empty(cls, k0: Intrinsics, k1: Intrinsics, width: int = 0, height: int = 0) -> "MatchSet":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), k0, k1, width=width, height=height)

    @property
    def dx(self) -> NDArray[np.float64]:
        return self.n1[:, 0] - self.n0[:, 0]

    @property
    def dy(self) -> NDArray[np.float64]:
        return self.n1[:, 1] - self.n0[:, 1]

    def __len__(self) -> int:
        return len(self.left_px)

    def __getitem__(self, i: int) -> Match:
        return Match(
            left=PixelPoint(u=self.left_px[i, 0], v=self.left_px[i, 1]),
            right=PixelPoint(u=self.right_px[i, 0], v=self.right_px[i, 1]),
            n0=NormalizedPoint(x=self.n0[i, 0], y=self.n0[i, 1]),
            n1=NormalizedPoint(x=self.n1[i, 0], y=self.n1[i, 1]),
            dx=float(self.n1[i, 0] - self.n0[i, 0]),
            dy=float(self.n1[i, 1] - self.n0[i, 1]),
            zssd_cost=float(self.costs[i]),
        )

    def __iter__(self) -> Iterator[Match]:
        return (self[i] for i in range(len(self)))

    def subset(self, index) -> "MatchSet":
        """Matches selected by a boolean mask or an index array, order preserved."""
        return MatchSet(
            self.left_px[index], self.right_px[index], self.k0, self.k1,
            costs=self.costs[index], width=self.width, height=self.height
        )


def dedupe_left(matches: MatchSet, tol: float = 0.5) -> MatchSet:
    """Drop later matches whose left point lies within ``tol`` px of an earlier one."""
    if len(matches) < 2:
        return matches
    pairs = cKDTree(matches.left_px).query_pairs(r=tol, output_type="ndarray")
    if len(pairs) == 0:
        return matches
    keep = np.ones(len(matches), dtype=bool)
    keep[pairs.max(axis=1)] = False
    return matches.subset(keep)


# ============================================================================
# Harris detection
# ============================================================================

class DetectorConfig(BaseModel):
    """Harris detector parameters."""
    sigma: float = Field(1.0, gt=0, description="Gaussian weight of the structure tensor (2-sigma support)")
    k: float = Field(0.04, gt=0, lt=0.25, description="Harris trace weight")
    nms_radius: int = Field(5, ge=1, description="Non-maximum suppression radius in pixels")
    max_corners: int = Field(2000, ge=1, description="Maximum number of corners returned")
    threshold_rel: float = Field(0.01, gt=0, lt=1, description="Response threshold relative to the strongest corner")
    border_margin: int = Field(4, ge=1, description="Corners closer than this to the border are ignored")

    model_config = {"extra": "forbid"}


def harris_response(data: NDArray[np.float64], cfg: DetectorConfig) -> NDArray[np.float64]:
    """det(M) - k·trace(M)² of the Gaussian-weighted structure tensor of Sobel gradients."""
    gx = ndimage.sobel(data, axis=1, mode="nearest")
    gy = ndimage.sobel(data, axis=0, mode="nearest")
    smooth = dict(sigma=cfg.sigma, truncate=2.0, mode="nearest")
    sxx = ndimage.gaussian_filter(gx * gx, **smooth)
    syy = ndimage.gaussian_filter(gy * gy, **smooth)
    sxy = ndimage.gaussian_filter(gx * gy, **smooth)
    return sxx * syy - sxy * sxy - cfg.k * (sxx + syy) ** 2


def _peak_offset(before: float, centre: float, after: float) -> float:
    """Vertex of the parabola through three samples of a maximum, clamped to ±0.5."""
    denom = before - 2.0 * centre + after
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (before - after) / denom, -0.5, 0.5))


def harris_corners(img: GrayImage, cfg: Optional[DetectorConfig] = None) -> list[Corner]:
    """Corners sorted by descending score after radius NMS, at most ``cfg.max_corners``."""
    cfg = cfg or DetectorConfig()
    if img.width < MIN_IMAGE_SIZE or img.height < MIN_IMAGE_SIZE:
        raise RectificationError(
            ErrorType.INVALID_IMAGE,
            f"{img.width}x{img.height} is below the {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE} minimum"
        )

    response = harris_response(img.data, cfg)
    peak = float(response.max())
    if not peak > 0:
        logger.debug("[Detector] No positive Harris response")
        return []

    candidates = (response == ndimage.maximum_filter(response, size=3, mode="nearest"))
    candidates &= response > cfg.threshold_rel * peak
    m = cfg.border_margin
    candidates[:m, :] = False
    candidates[-m:, :] = False
    candidates[:, :m] = False
    candidates[:, -m:] = False

    vs, us = np.nonzero(candidates)
    scores = response[vs, us]
    # Primary key score (descending), ties broken by row then column
    order = np.lexsort((us, vs, -scores))

    r = cfg.nms_radius
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = yy * yy + xx * xx <= r * r
    suppressed = np.zeros(response.shape, dtype=bool)
    h, w = response.shape

    corners: list[Corner] = []
    for idx in order:
        v, u = int(vs[idx]), int(us[idx])
        if suppressed[v, u]:
            continue
        du = _peak_offset(response[v, u - 1], response[v, u], response[v, u + 1])
        dv = _peak_offset(response[v - 1, u], response[v, u], response[v + 1, u])
        corners.append(Corner(u=u + du, v=v + dv, score=float(response[v, u])))
        if len(corners) >= cfg.max_corners:
            break
        v0, v1 = max(v - r, 0), min(v + r + 1, h)
        u0, u1 = max(u - r, 0), min(u + r + 1, w)
        suppressed[v0:v1, u0:u1] |= disk[v0 - (v - r):v1 - (v - r), u0 - (u - r):u1 - (u - r)]

    logger.debug(f"[Detector] {len(corners)} corners from {len(order)} candidates")
    return corners


# ============================================================================
# Pyramid and ZSSD
# ============================================================================

class MatcherConfig(BaseModel):
    """Hierarchical ZSSD matcher parameters."""
    patch_radius: int = Field(3, ge=1, description="Patch radius; 3 gives 7x7 patches")
    levels: int = Field(3, ge=1, description="Pyramid levels including full resolution")
    vertical_slack: int = Field(2, ge=0, description="Vertical search half-range in pixels at every level")
    refine_radius: int = Field(2, ge=1, description="Horizontal search half-range at finer levels")
    lr_tol: float = Field(1.0, gt=0, description="Left-right consistency tolerance in pixels")
    subpixel: bool = Field(True, description="Refine the integer minimum with per-axis parabolas")

    model_config = {"extra": "forbid"}


def build_pyramid(img: GrayImage, levels: int) -> list[GrayImage]:
    """Level 0 is ``img``; each further level is a 2x2 box-filtered half-resolution copy."""
    if levels < 1:
        raise RectificationError(ErrorType.CONFIG, f"pyramid needs at least one level, got {levels}")
    if levels > 1:
        scale = 2 ** (levels - 1)
        if min(img.width, img.height) // scale < MIN_IMAGE_SIZE:
            raise RectificationError(
                ErrorType.CONFIG,
                f"{levels} levels shrink {img.width}x{img.height} below {MIN_IMAGE_SIZE} px"
            )
    pyramid = [img]
    for _ in range(levels - 1):
        data = pyramid[-1].data
        h, w = data.shape[0] // 2, data.shape[1] // 2
        pyramid.append(GrayImage(data[:2 * h, :2 * w].reshape(h, 2, w, 2).mean(axis=(1, 3))))
    return pyramid


def usable_levels(img: GrayImage, requested: int) -> int:
    """Largest level count not above ``requested`` that keeps the coarsest level valid."""
    levels = 1
    while levels < requested and min(img.width, img.height) // 2 ** levels >= MIN_IMAGE_SIZE:
        levels += 1
    return levels


def _fits(data: NDArray[np.float64], u: int, v: int, r: int) -> bool:
    return r <= u < data.shape[1] - r and r <= v < data.shape[0] - r


def _patch(data: NDArray[np.float64], u: int, v: int, r: int) -> NDArray[np.float64]:
    if not _fits(data, u, v, r):
        raise RectificationError(ErrorType.BOUNDARY, f"patch radius {r} at ({u}, {v}) in {data.shape[1]}x{data.shape[0]}")
    return data[v - r:v + r + 1, u - r:u + r + 1]


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


def zssd_cost(left: GrayImage, right: GrayImage, pL: PixelPoint, pR: PixelPoint, patch: int) -> float:
    """Zero-mean SSD between the patches centred at the rounded positions."""
    a = _patch(left.data, _round(pL.u), _round(pL.v), patch)
    b = _patch(right.data, _round(pR.u), _round(pR.v), patch)
    diff = (a - a.mean()) - (b - b.mean())
    return float(np.sum(diff * diff))


def _round_half_up(x: NDArray[np.float64]) -> NDArray[np.intp]:
    return np.floor(x + 0.5).astype(np.intp)


def _templates(data: NDArray[np.float64], u: NDArray[np.intp], v: NDArray[np.intp], r: int) -> NDArray[np.float64]:
    """Zero-mean patches centred at integer positions, shape ``(n, 2r+1, 2r+1)``."""
    p = 2 * r + 1
    patches = sliding_window_view(data, (p, p))[v - r, u - r]
    return patches - patches.mean(axis=(1, 2), keepdims=True)


def _candidate_costs(
    templates: NDArray[np.float64],
    data: NDArray[np.float64],
    cu: NDArray[np.intp],
    cv: NDArray[np.intp],
    r: int
) -> NDArray[np.float64]:
    """
    ZSSD of each template against its own row of candidate centres.

    ``cu`` and ``cv`` have one row per template. Centres whose patch leaves
    the image cost ``inf``.
    """
    h, w = data.shape
    p = 2 * r + 1
    windows = sliding_window_view(data, (p, p))
    valid = (cu >= r) & (cu <= w - 1 - r) & (cv >= r) & (cv <= h - 1 - r)
    iu = np.clip(cu, r, w - 1 - r) - r
    iv = np.clip(cv, r, h - 1 - r) - r
    costs = np.empty(cu.shape)
    for first in range(0, len(cu), _CHUNK):
        block = slice(first, first + _CHUNK)
        patches = windows[iv[block], iu[block]]
        centred = patches - patches.mean(axis=(2, 3), keepdims=True)
        costs[block] = np.sum((centred - templates[block, None]) ** 2, axis=(2, 3))
    costs[~valid] = np.inf
    return costs


def _row_search(
    templates: NDArray[np.float64],
    data: NDArray[np.float64],
    rows: NDArray[np.intp],
    r: int,
    slack: int
) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """
    Integer ZSSD minimum of each template over the full width of its row band.

    Templates on the same row share one band, so their costs come from a
    single product: |c - t|² = |c|² - 2·c·t + |t|².
    """
    h, w = data.shape
    p = 2 * r + 1
    flat = templates.reshape(len(rows), p * p)
    best_u = np.empty(len(rows), dtype=np.intp)
    best_v = np.empty(len(rows), dtype=np.intp)
    for row in np.unique(rows):
        group = np.flatnonzero(rows == row)
        v_lo, v_hi = max(int(row) - slack, r), min(int(row) + slack, h - 1 - r)
        windows = sliding_window_view(data[v_lo - r:v_hi + r + 1], (p, p))
        n_u = windows.shape[1]
        centred = (windows - windows.mean(axis=(2, 3), keepdims=True)).reshape(-1, p * p)
        t = flat[group]
        costs = np.sum(centred * centred, axis=1)[None, :] - 2.0 * (t @ centred.T)
        costs += np.sum(t * t, axis=1)[:, None]
        k = np.argmin(costs, axis=1)
        best_v[group] = v_lo + k // n_u
        best_u[group] = r + k % n_u
    return best_u, best_v


def _parabola_offsets(
    before: NDArray[np.float64],
    centre: NDArray[np.float64],
    after: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Vertex of the parabola through three cost samples around each minimum, clamped to ±0.5."""
    denom = before - 2.0 * centre + after
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.clip(0.5 * (before - after) / denom, -0.5, 0.5)
    return np.where((centre <= _EXACT_COST) | ~(denom > 0), 0.0, offset)


def _on_edge(offset: NDArray[np.intp], half: int) -> NDArray[np.bool_]:
    """Offsets at either end of a ±``half`` window; a zero-width window has no edge."""
    return (np.abs(offset) == half) if half > 0 else np.zeros(offset.shape, dtype=bool)


def _match_pyramids(
    left_pyr: list[GrayImage],
    right_pyr: list[GrayImage],
    seeds: NDArray[np.float64],
    cfg: MatcherConfig,
    k0: Intrinsics,
    k1: Intrinsics
) -> MatchSet:
    """
    Match every seed, one pyramid level at a time.

    A seed starts at the coarsest level where its left patch fits, with a
    full-width search of its row band. Each finer level searches
    ±refine_radius by ±vertical_slack around twice the coarser minimum.
    Seeds are dropped when a minimum sits on a ±refine_radius or
    ±vertical_slack edge of its window, or when the full-resolution minimum
    lacks any of its four neighbours inside the image: the true match may
    lie past the border.
    """
    r = cfg.patch_radius
    base = left_pyr[0]
    seeds = np.asarray(seeds, dtype=np.float64).reshape(-1, 2)
    seed_px = _round_half_up(seeds)
    n = len(seeds)
    top = len(left_pyr) - 1

    def at_level(level: int) -> NDArray[np.intp]:
        return _round_half_up(seed_px / 2 ** level)

    def fits(level: int, px: NDArray[np.intp]) -> NDArray[np.bool_]:
        h, w = left_pyr[level].data.shape
        return (px[:, 0] >= r) & (px[:, 0] <= w - 1 - r) & (px[:, 1] >= r) & (px[:, 1] <= h - 1 - r)

    start = np.full(n, -1)
    for level in range(top, -1, -1):
        start[(start < 0) & fits(level, at_level(level))] = level
    alive = start >= 0

    du, dv = (g.ravel() for g in np.meshgrid(
        np.arange(-cfg.refine_radius, cfg.refine_radius + 1),
        np.arange(-cfg.vertical_slack, cfg.vertical_slack + 1)
    ))
    pred = np.zeros((n, 2), dtype=np.intp)
    best = np.zeros((n, 2), dtype=np.intp)
    for level in range(top, -1, -1):
        ldata, rdata = left_pyr[level].data, right_pyr[level].data
        px = at_level(level)
        inside = fits(level, px)
        fresh = alive & (start == level)
        follow = alive & (start > level)
        # Coarser estimate carries over where the left patch leaves this level
        carry = follow & ~inside

        if fresh.any():
            idx = np.flatnonzero(fresh)
            templates = _templates(ldata, px[idx, 0], px[idx, 1], r)
            best[idx, 0], best[idx, 1] = _row_search(templates, rdata, px[idx, 1], r, cfg.vertical_slack)
            alive[idx[_on_edge(best[idx, 1] - px[idx, 1], cfg.vertical_slack)]] = False

        refine = follow & inside
        if refine.any():
            idx = np.flatnonzero(refine)
            templates = _templates(ldata, px[idx, 0], px[idx, 1], r)
            cu = pred[idx, 0][:, None] + du[None, :]
            cv = pred[idx, 1][:, None] + dv[None, :]
            costs = _candidate_costs(templates, rdata, cu, cv, r)
            rows = np.arange(len(idx))
            k = np.argmin(costs, axis=1)
            best[idx, 0], best[idx, 1] = cu[rows, k], cv[rows, k]
            # A minimum on the window edge may have a lower neighbour outside it
            lost = ~np.isfinite(costs[rows, k])
            lost |= _on_edge(best[idx, 0] - pred[idx, 0], cfg.refine_radius)
            lost |= _on_edge(best[idx, 1] - pred[idx, 1], cfg.vertical_slack)
            alive[idx[lost]] = False

        if level > 0:
            searched = (fresh | refine) & alive
            pred[searched] = 2 * best[searched]
            pred[carry] *= 2
        else:
            alive &= ~carry

    h, w = base.data.shape
    alive &= (best[:, 0] > r) & (best[:, 0] < w - 1 - r) & (best[:, 1] > r) & (best[:, 1] < h - 1 - r)
    idx = np.flatnonzero(alive)
    if len(idx) == 0:
        return MatchSet.empty(k0, k1, base.width, base.height)

    templates = _templates(base.data, seed_px[idx, 0], seed_px[idx, 1], r)
    cu = best[idx, 0][:, None] + _NEIGHBOURS[None, :, 0]
    cv = best[idx, 1][:, None] + _NEIGHBOURS[None, :, 1]
    costs = _candidate_costs(templates, right_pyr[0].data, cu, cv, r)
    found = best[idx].astype(np.float64)
    if cfg.subpixel:
        found[:, 0] += _parabola_offsets(costs[:, 1], costs[:, 0], costs[:, 2])
        found[:, 1] += _parabola_offsets(costs[:, 3], costs[:, 0], costs[:, 4])
    # The left point keeps its subpixel position and the right point moves with it
    right = found + (seeds[idx] - seed_px[idx])
    return MatchSet(seeds[idx], right, k0, k1, costs=costs[:, 0], width=base.width, height=base.height)


def _pyramids(left: GrayImage, right: GrayImage, cfg: MatcherConfig) -> tuple[list[GrayImage], list[GrayImage]]:
    if left.data.shape != right.data.shape:
        raise RectificationError(
            ErrorType.INVALID_IMAGE,
            f"image sizes differ: {left.width}x{left.height} vs {right.width}x{right.height}"
        )
    levels = usable_levels(left, cfg.levels)
    if levels < cfg.levels:
        logger.debug(f"[Matcher] Using {levels} of {cfg.levels} pyramid levels for {left.width}x{left.height}")
    return build_pyramid(left, levels), build_pyramid(right, levels)


def match_one_way(
    left: GrayImage,
    right: GrayImage,
    seeds: NDArray[np.float64],
    cfg: Optional[MatcherConfig] = None,
    k0: Optional[Intrinsics] = None,
    k1: Optional[Intrinsics] = None
) -> MatchSet:
    """
    Match each seed from ``left`` into ``right``.

    Patches are centred at the seed rounded to the pixel grid; the returned
    left point is the seed itself and the right point carries the same
    subpixel offset. The search starts at the coarsest level where the seed's
    patch fits, over the full row band, then follows the estimate down the
    pyramid within ±refine_radius horizontally and ±vertical_slack
    vertically. Seeds that cannot be matched are dropped; output order
    follows seed order.
    """
    cfg = cfg or MatcherConfig()
    left_pyr, right_pyr = _pyramids(left, right, cfg)
    return _match_pyramids(left_pyr, right_pyr, seeds, cfg,
                           k0 or default_intrinsics(left), k1 or default_intrinsics(right))


def left_right_filter(forward: MatchSet, reverse: MatchSet, tol: float) -> MatchSet:
    """
    Keep forward matches whose reverse match lands within ``tol`` px of the left point.

    ``reverse`` is the right-to-left matching seeded at the forward right
    positions, so its left points are exactly those positions.
    """
    if len(forward) == 0:
        return forward
    if len(reverse) == 0:
        return forward.subset(np.zeros(len(forward), dtype=bool))

    tree = cKDTree(reverse.left_px)
    dist, idx = tree.query(forward.right_px, k=1, p=np.inf, distance_upper_bound=_SEED_TOL)
    found = np.isfinite(dist)
    back = np.full(forward.left_px.shape, np.inf)
    back[found] = reverse.right_px[idx[found]]
    err = np.hypot(back[:, 0] - forward.left_px[:, 0], back[:, 1] - forward.left_px[:, 1])
    keep = found & (err <= tol)
    return forward.subset(keep)


def match_hierarchical(
    left: GrayImage,
    right: GrayImage,
    corners: Sequence[Corner],
    cfg: Optional[MatcherConfig] = None,
    k0: Optional[Intrinsics] = None,
    k1: Optional[Intrinsics] = None
) -> MatchSet:
    """Forward match every corner, match back from the right image, keep the consistent ones."""
    cfg = cfg or MatcherConfig()
    k0 = k0 or default_intrinsics(left)
    k1 = k1 or default_intrinsics(right)
    left_pyr, right_pyr = _pyramids(left, right, cfg)

    seeds = np.array([(c.u, c.v) for c in corners], dtype=np.float64).reshape(-1, 2)
    forward = dedupe_left(_match_pyramids(left_pyr, right_pyr, seeds, cfg, k0, k1))
    reverse = _match_pyramids(right_pyr, left_pyr, forward.right_px, cfg, k1, k0)
    kept = left_right_filter(forward, reverse, cfg.lr_tol)

    logger.info(f"[Matcher] {len(corners)} corners -> {len(forward)} forward -> {len(kept)} consistent matches")
    return kept
