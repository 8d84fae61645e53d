import math

import numpy as np
import pytest
from pydantic import ValidationError

from rigfix.correspondence import harris_corners, match_hierarchical
from rigfix.simulator import (
    SceneTruth,
    SimConfig,
    Xorshift64Star,
    generate_scene,
    render_matches,
    render_texture_pair,
    render_value_noise,
    solution_from_truth,
)
from rigfix.solver import ModelKind, residuals


class TestGenerator:
    def test_repeatable(self):
        a, b = Xorshift64Star(42), Xorshift64Star(42)
        assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]

    def test_seeds_differ(self):
        assert Xorshift64Star(1).next_u64() != Xorshift64Star(2).next_u64()

    def test_uniform_range(self):
        rng = Xorshift64Star(0)
        values = [rng.uniform(-2.0, 3.0) for _ in range(1000)]
        assert min(values) >= -2.0 and max(values) < 3.0

    def test_normal_moments(self):
        rng = Xorshift64Star(9)
        values = np.array([rng.normal() for _ in range(20000)])
        assert abs(values.mean()) < 0.03
        assert abs(values.std() - 1.0) < 0.03


class TestSceneGeneration:
    def test_same_seed_same_scene(self, clean_sim):
        assert generate_scene(clean_sim).model_dump() == generate_scene(clean_sim).model_dump()

    def test_points_at_infinity(self):
        scene = generate_scene(SimConfig(num_points=100, d_min=0.0, d_max=0.0))
        assert all(p.w == 0.0 for p in scene.points)

    def test_infinity_fraction(self):
        scene = generate_scene(SimConfig(num_points=1000, infinity_fraction=0.25, d_min=0.05))
        share = np.mean([p.w == 0.0 for p in scene.points])
        assert 0.2 < share < 0.3

    def test_empty_disparity_range(self):
        with pytest.raises(ValidationError):
            SimConfig(d_min=0.2, d_max=0.1)

    def test_explicit_truth(self):
        scene = generate_scene(SimConfig(d_omega_deg=[0.1, -0.2, 0.3], d_f=0.004, omega1_pan_roll_deg=[0.5, 0.6]))
        assert np.allclose(scene.true_d_omega.degrees(), [0.1, -0.2, 0.3])
        assert scene.true_df == 0.004
        assert math.degrees(scene.true_omega1.omega_y) == pytest.approx(0.5)

    def test_outlier_flags(self):
        scene = generate_scene(SimConfig(num_points=1000, outlier_rate=0.3))
        assert len(scene.outlier_flags) == 1000
        assert 0.25 < np.mean(scene.outlier_flags) < 0.35

    def test_wide_disparity_points_visible(self):
        scene = generate_scene(SimConfig(num_points=500, d_min=0.0, d_max=0.5, seed=12))
        assert len(render_matches(scene, linearized=False)) == 500

    def test_json_round_trip_of_truth(self, clean_sim):
        scene = generate_scene(clean_sim)
        again = SceneTruth.model_validate(scene.model_dump(mode="json"))
        assert again.true_theta.tolist() == scene.true_theta.tolist()


class TestRender:
    def test_aligned_rig(self):
        scene = generate_scene(SimConfig(num_points=200, d_omega_deg=[0, 0, 0], d_f=0.0, seed=2))
        matches = render_matches(scene)
        assert np.max(np.abs(matches.dy)) <= 1e-12
        assert np.allclose(matches.dx, [p.w for p in scene.points], rtol=0, atol=1e-12)

    def test_linearized_render_satisfies_rows(self):
        cfg = SimConfig(num_points=300, omega1_pan_roll_deg=[0.4, -0.3], common_pitch_deg=1.0, seed=8)
        scene = generate_scene(cfg)
        matches = render_matches(scene, linearized=True)
        assert np.max(np.abs(residuals(matches, scene.true_theta, ModelKind.SIX_PARAM))) <= 1e-12

    def test_render_is_repeatable(self):
        scene = generate_scene(SimConfig(num_points=100, noise_sigma_px=0.3, outlier_rate=0.2, seed=6))
        a, b = render_matches(scene), render_matches(scene)
        assert np.array_equal(a.right_px, b.right_px)

    def test_noise_level(self):
        base = generate_scene(SimConfig(num_points=2000, seed=3))
        noisy = base.model_copy(update={"noise_sigma_px": 0.5})
        diff = render_matches(noisy).left_px - render_matches(base).left_px
        assert diff.std() == pytest.approx(0.5, rel=0.1)

    def test_scaled_scene(self, clean_sim):
        scene = generate_scene(clean_sim)
        half = scene.scaled(0.5)
        assert np.allclose(half.true_d_omega.as_array(), scene.true_d_omega.as_array() / 2, rtol=0, atol=1e-15)
        assert half.true_df == pytest.approx(scene.true_df / 2)
        assert np.allclose(half.left_rays(), scene.left_rays(), rtol=0, atol=1e-12)

    def test_solution_from_truth_models(self, clean_sim):
        scene = generate_scene(clean_sim)
        sol = solution_from_truth(scene, ModelKind.FOUR_PARAM)
        assert len(sol.theta) == 4
        assert sol.omega_y1 is None
        assert sol.d_f == scene.true_df


class TestTexture:
    def test_value_noise_range_and_determinism(self):
        a = render_value_noise(64, 48, seed=4)
        assert np.array_equal(a.data, render_value_noise(64, 48, seed=4).data)
        assert a.data.min() >= 0.0 and a.data.max() <= 1.0
        assert a.data.std() > 0.02

    def test_offset_shifts_content(self):
        big = render_value_noise(80, 40, seed=4)
        shifted = render_value_noise(80, 40, seed=4, offset=(5.0, 0.0))
        assert np.allclose(shifted.data[10:30, 15:70], big.data[10:30, 10:65], rtol=0, atol=1e-12)

    def test_identity_rig_renders_identical_views(self):
        cfg = SimConfig(width=96, height=64, d_omega_deg=[0, 0, 0], d_f=0.0, plane_disparity=0.0)
        left, right, _ = render_texture_pair(cfg)
        assert np.array_equal(left.data, right.data)

    def test_plane_disparity_is_recovered(self):
        cfg = SimConfig(width=192, height=144, focal_px=200.0, d_omega_deg=[0, 0, 0], d_f=0.0, plane_disparity=0.02)
        left, right, scene = render_texture_pair(cfg)
        matches = match_hierarchical(left, right, harris_corners(left), k0=scene.k0, k1=scene.k1)
        du = matches.right_px[:, 0] - matches.left_px[:, 0]
        assert len(matches) > 30
        assert abs(np.median(du) - 4.0) <= 0.25
        assert np.mean(np.abs(du - 4.0) <= 0.25) >= 0.9
