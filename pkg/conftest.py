"""Shared fixtures for the rigfix test suite."""
import logfire
import numpy as np
import pytest

from rigfix.camera_model import Intrinsics
from rigfix.correspondence import GrayImage, MatchSet
from rigfix.simulator import SimConfig, render_value_noise

# Spans stay local during tests
logfire.configure(send_to_logfire=False, console=False)


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    """RIGFIX_SEED from a developer shell must not leak into tests."""
    monkeypatch.delenv("RIGFIX_SEED", raising=False)


@pytest.fixture
def unit_k() -> Intrinsics:
    """Pixels equal normalized coordinates."""
    return Intrinsics(f=1.0, cx=0.0, cy=0.0)


@pytest.fixture
def clean_sim() -> SimConfig:
    """Noise-free, outlier-free scenario with a fixed seed."""
    return SimConfig(num_points=300, seed=7)


def normalized_matches(left, right, k: Intrinsics) -> MatchSet:
    """MatchSet whose pixel columns are given in normalized units of ``k``."""
    left = np.asarray(left, dtype=np.float64).reshape(-1, 2)
    right = np.asarray(right, dtype=np.float64).reshape(-1, 2)
    centre = np.array([k.cx, k.cy])
    return MatchSet(left * k.f + centre, right * k.f + centre, k, k)


def shifted_pair(width: int, height: int, du: int, dv: int, seed: int = 3) -> tuple[GrayImage, GrayImage]:
    """
    Textured pair where a left pixel (u, v) appears at (u + du, v + dv) on the right.

    Both images are crops of one larger texture, so the shift is exact.
    """
    pad = 8
    big = render_value_noise(width + 2 * pad, height + 2 * pad, seed, cell=8).data
    left = big[pad:pad + height, pad:pad + width]
    right = big[pad - dv:pad - dv + height, pad - du:pad - du + width]
    return GrayImage(left.copy()), GrayImage(right.copy())
