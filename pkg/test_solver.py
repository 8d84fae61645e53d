import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import normalized_matches
from rigfix.camera_model import Rotation3
from rigfix.errors import ErrorType, RectificationError
from rigfix.simulator import SimConfig, generate_scene, render_matches
from rigfix.solver import (
    ConstraintRow,
    ModelKind,
    RectificationSolution,
    SolverConfig,
    design_matrix,
    lsq_solve,
    residuals,
    robust_solve,
    row_full,
    row_reduced,
    split_corrections,
)

TRUE_D_OMEGA = (0.005, -0.01, 0.002)
TRUE_DF = 0.003


def linear_scene_config(**overrides) -> SimConfig:
    params = dict(
        num_points=500,
        d_omega_deg=[math.degrees(v) for v in TRUE_D_OMEGA],
        d_f=TRUE_DF,
        seed=3,
    )
    params.update(overrides)
    return SimConfig(**params)


def four_param_error(sol: RectificationSolution, d_omega, d_f) -> float:
    return float(np.max(np.abs(np.append(sol.d_omega.as_array() - np.asarray(d_omega), sol.d_f - d_f))))


class TestRows:
    def test_principal_point_row(self, unit_k):
        m = normalized_matches([(0, 0)], [(0, 0)], unit_k)[0]
        row = row_full(m)
        assert row.coefficients.tolist() == [1, 0, 0, 0, 0, 0]
        assert row.rhs == 0

    def test_disparity_row(self, unit_k):
        m = normalized_matches([(0, 0)], [(0.1, 0)], unit_k)[0]
        assert np.allclose(row_full(m).coefficients, [1, 0, 0, 0, -0.1, 0])

    def test_symmetric_row(self, unit_k):
        t = 0.3
        m = normalized_matches([(0, t)], [(0, t)], unit_k)[0]
        assert np.allclose(row_full(m).coefficients, [1 + t * t, 0, 0, 0, 0, t])

    def test_reduced_row(self, unit_k):
        m = normalized_matches([(0.3, 0.1)], [(0.3, 0.2)], unit_k)[0]
        row = row_reduced(m)
        assert np.allclose(row.coefficients, [1.02, -0.06, -0.3, 0.1])
        assert row.rhs == pytest.approx(0.1)

    def test_design_matrix_matches_rows(self, clean_sim):
        matches = render_matches(generate_scene(clean_sim))
        a, b = design_matrix(matches, ModelKind.SIX_PARAM)
        for i in (0, 17, 101):
            row = row_full(matches[i])
            assert np.allclose(a[i], row.coefficients, rtol=0, atol=1e-15)
            assert b[i] == pytest.approx(row.rhs, abs=1e-15)


class TestLeastSquares:
    def test_exact_system(self):
        rng = np.random.default_rng(0)
        theta = np.array([0.01, -0.02, 0.003, 0.004])
        a = rng.normal(size=(40, 4))
        rows = [ConstraintRow(coefficients=r, rhs=float(r @ theta)) for r in a]
        assert np.allclose(lsq_solve(rows), theta, rtol=0, atol=1e-10)

    def test_repeated_row_is_degenerate(self):
        rows = [ConstraintRow(coefficients=np.array([1.0, 0.5, 0.25, 0.125]), rhs=1.0) for _ in range(10)]
        with pytest.raises(RectificationError) as exc:
            lsq_solve(rows)
        assert exc.value.error_type == ErrorType.DEGENERATE_GEOMETRY
        assert len(exc.value.detail) == 3

    def test_matches_pseudo_inverse(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(200, 6))
        b = a @ rng.normal(size=6) + rng.normal(scale=0.1, size=200)
        rows = [ConstraintRow(coefficients=r, rhs=float(v)) for r, v in zip(a, b)]
        assert np.allclose(lsq_solve(rows), np.linalg.pinv(a) @ b, rtol=0, atol=1e-8)

    def test_underdetermined(self):
        rows = [ConstraintRow(coefficients=np.ones(4), rhs=0.0)]
        with pytest.raises(RectificationError) as exc:
            lsq_solve(rows)
        assert exc.value.error_type == ErrorType.TOO_FEW_MATCHES


class TestSplit:
    def test_even_split(self):
        w0, w1 = split_corrections(Rotation3(omega_x=0.01, omega_y=0.02, omega_z=-0.004))
        assert np.allclose(w1.as_array(), [0.005, 0.01, -0.002])
        assert np.allclose(w0.as_array(), [-0.005, -0.01, 0.002])

    def test_absolute_pan(self):
        w0, w1 = split_corrections(Rotation3(omega_y=0.02), omega_y1=0.015)
        assert w1.omega_y == 0.015
        assert w0.omega_y == pytest.approx(-0.005)

    def test_zero(self):
        w0, w1 = split_corrections(Rotation3())
        assert w0.norm() == 0 and w1.norm() == 0

    def test_solution_rejects_inconsistent_split(self):
        with pytest.raises(ValidationError):
            RectificationSolution(
                model=ModelKind.FOUR_PARAM,
                d_omega=Rotation3(omega_x=0.01),
                omega0=Rotation3(),
                omega1=Rotation3(),
            )


class TestResiduals:
    def test_zero_theta(self, clean_sim):
        matches = render_matches(generate_scene(clean_sim))
        assert np.array_equal(residuals(matches, np.zeros(4), ModelKind.FOUR_PARAM), -matches.dy)

    def test_model_consistent_data(self):
        scene = generate_scene(linear_scene_config(omega1_pan_roll_deg=[0.3, -0.2]))
        matches = render_matches(scene, linearized=True)
        assert np.max(np.abs(residuals(matches, scene.true_theta, ModelKind.SIX_PARAM))) <= 1e-12


class TestRobustSolve:
    def test_exact_recovery(self):
        matches = render_matches(generate_scene(linear_scene_config()), linearized=True)
        sol = robust_solve(matches)
        assert sol.model == ModelKind.FOUR_PARAM
        assert four_param_error(sol, TRUE_D_OMEGA, TRUE_DF) <= 1e-9
        assert sol.inlier_count == len(matches)
        assert sol.iterations == 3

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_outliers_and_noise(self, seed):
        cfg = linear_scene_config(noise_sigma_px=0.2, outlier_rate=0.3, outlier_px=20.0, seed=seed)
        sol = robust_solve(render_matches(generate_scene(cfg), linearized=True))
        err = np.abs(np.asarray(sol.theta) - np.append(TRUE_D_OMEGA, TRUE_DF))
        assert np.all(err <= 4.0 * np.asarray(sol.theta_std))
        assert np.max(err[:3]) <= math.radians(0.05)
        assert err[3] <= 5e-4
        assert 0.6 < sol.inlier_rate < 0.9

    def test_standard_errors_are_calibrated(self):
        z = []
        for seed in range(30):
            cfg = linear_scene_config(noise_sigma_px=0.2, outlier_rate=0.3, outlier_px=20.0, seed=seed)
            sol = robust_solve(render_matches(generate_scene(cfg), linearized=True))
            err = np.asarray(sol.theta) - np.append(TRUE_D_OMEGA, TRUE_DF)
            z.extend(err / np.asarray(sol.theta_std))
        z = np.asarray(z)
        assert np.mean(z ** 2) < 2.0
        assert np.max(np.abs(z)) < 5.0

    def test_noise_free_standard_errors_vanish(self):
        sol = robust_solve(render_matches(generate_scene(linear_scene_config()), linearized=True))
        assert len(sol.theta_std) == 4
        assert max(sol.theta_std) < 1e-12

    def test_three_param_model(self):
        matches = render_matches(generate_scene(linear_scene_config(d_f=0.0)), linearized=True)
        sol = robust_solve(matches, SolverConfig(model=ModelKind.THREE_PARAM))
        assert sol.d_f == 0.0
        assert np.allclose(sol.d_omega.as_array(), TRUE_D_OMEGA, rtol=0, atol=1e-9)

    def test_six_param_recovers_absolute_pan_and_roll(self):
        cfg = linear_scene_config(omega1_pan_roll_deg=[0.4, -0.3], d_min=0.0, d_max=0.2)
        scene = generate_scene(cfg)
        sol = robust_solve(render_matches(scene, linearized=True), SolverConfig(model=ModelKind.SIX_PARAM))
        assert sol.omega_y1 == pytest.approx(scene.true_omega1.omega_y, abs=1e-9)
        assert sol.omega_z1 == pytest.approx(scene.true_omega1.omega_z, abs=1e-9)
        assert sol.omega1.omega_y == sol.omega_y1
        assert len(sol.stage_inliers) == 2
        assert sol.stage_iterations == [3, 3]
        assert sol.iterations == len(SolverConfig().schedule())
        assert len(sol.theta_std) == 6

    def test_absolute_angles_need_depth_range(self):
        cfg = linear_scene_config(d_min=0.0, d_max=0.0, d_omega_deg=[0.1, 0.1, 0.1], d_f=0.001)
        matches = render_matches(generate_scene(cfg), linearized=True)
        with pytest.raises(RectificationError) as exc:
            robust_solve(matches, SolverConfig(model=ModelKind.SIX_PARAM))
        assert exc.value.error_type == ErrorType.DEGENERATE_GEOMETRY
        assert "omega_y1" in exc.value.detail

    def test_too_few_matches(self):
        matches = render_matches(generate_scene(linear_scene_config(num_points=11)), linearized=True)
        with pytest.raises(RectificationError) as exc:
            robust_solve(matches)
        assert exc.value.error_type == ErrorType.TOO_FEW_MATCHES

    def test_deterministic(self):
        cfg = linear_scene_config(noise_sigma_px=0.2, outlier_rate=0.1)
        matches = render_matches(generate_scene(cfg), linearized=True)
        assert robust_solve(matches).theta == robust_solve(matches).theta

    def test_common_pitch_is_invisible(self):
        a = render_matches(generate_scene(linear_scene_config(common_pitch_deg=0.0)), linearized=True)
        b = render_matches(generate_scene(linear_scene_config(common_pitch_deg=2.0)), linearized=True)
        assert np.allclose(robust_solve(a).theta, robust_solve(b).theta, rtol=0, atol=1e-12)

    def test_linearization_error_is_second_order(self):
        scene = generate_scene(linear_scene_config(d_omega_deg=[0.6, -0.5, 0.6], d_f=0.01))

        def error(scale):
            s = scene.scaled(scale)
            sol = robust_solve(render_matches(s, linearized=False))
            truth = s.true_theta
            return four_param_error(sol, truth[:3], truth[5])

        errors = [error(scale) for scale in (1.0, 0.5, 0.25)]
        assert errors[0] / errors[1] >= 3.5
        assert errors[1] / errors[2] >= 3.5


class TestSolverConfig:
    @pytest.mark.parametrize("thresholds", [[], [1.0, 2.0], [2.0, 2.0], [1.0, -1.0]])
    def test_invalid_schedules(self, thresholds):
        with pytest.raises(ValidationError):
            SolverConfig(thresholds_px=thresholds)

    def test_required_matches(self):
        cfg = SolverConfig()
        assert cfg.required_matches(ModelKind.FOUR_PARAM) == 12
        assert SolverConfig(min_matches=2).required_matches(ModelKind.SIX_PARAM) == 6

    def test_schedule_truncation(self):
        assert SolverConfig(max_iterations=2).schedule() == [4.0, 2.0]
