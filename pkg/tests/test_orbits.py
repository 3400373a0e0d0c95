import logging
from types import SimpleNamespace

import numpy as np
import pytest

from families import ALPHA, BETA, MichelsonParams, michelson_rhs
from hamiltonian import first_integral_4d
import orbits
from numerics import PreconditionError, SingularJacobian, ToleranceConfig
from orbits import (
    P_EXACT,
    KuramotoOrbit,
    continuation_in_P,
    exact_homoclinic,
    homoclinic_rhs_residual,
    kuramoto_p,
    kuramoto_p_dot,
    linearization_4d,
    shoot_homoclinic_4d,
    stable_decay_rate,
    unstable_left_subspace,
)


class TestKuramoto:
    def test_value_at_zero(self):
        np.testing.assert_allclose(kuramoto_p(0.0), [0.0, -9.0 * ALPHA * BETA, 0.0], atol=1e-15)
        assert -9.0 * ALPHA * BETA == pytest.approx(-2.0567970, abs=1e-6)

    def test_limits(self):
        lo, hi = KuramotoOrbit().limits()
        np.testing.assert_allclose(kuramoto_p(60.0), hi, atol=1e-12)
        np.testing.assert_allclose(kuramoto_p(-60.0), lo, atol=1e-12)
        assert hi[0] == pytest.approx(np.sqrt(2.0) * MichelsonParams.kuramoto().c)

    def test_solves_michelson(self):
        params = MichelsonParams.kuramoto()
        for t in np.arange(-10.0, 10.5, 0.5):
            np.testing.assert_allclose(kuramoto_p_dot(t), michelson_rhs(kuramoto_p(t), params), atol=1e-12)

    def test_reversibility(self):
        t = np.linspace(0.0, 12.0, 49)
        p, q = kuramoto_p(t), kuramoto_p(-t)
        np.testing.assert_allclose(q, p * np.array([-1.0, 1.0, -1.0]), atol=1e-15)

    def test_vectorised_shape(self):
        assert kuramoto_p(np.zeros((3, 2))).shape == (3, 2, 3)

    def test_p_dot_matches_difference(self):
        h = 1e-5
        for t in (-2.0, 0.3, 4.0):
            fd = (kuramoto_p(t + h) - kuramoto_p(t - h)) / (2 * h)
            np.testing.assert_allclose(kuramoto_p_dot(t), fd, atol=1e-8)

    def test_trajectory(self):
        grid = np.linspace(-5.0, 5.0, 11)
        traj = KuramotoOrbit().trajectory(grid)
        np.testing.assert_allclose(traj(0.25), kuramoto_p(0.25), atol=1e-15)


class TestLinearization:
    def test_double_eigenvalues_at_minus_two(self):
        eig = np.linalg.eigvals(linearization_4d(-2.0))
        np.testing.assert_allclose(np.sort(eig.real), [-1.0, -1.0, 1.0, 1.0], atol=1e-6)
        assert stable_decay_rate(-2.0) == pytest.approx(1.0, abs=1e-6)

    def test_unstable_left_subspace(self):
        A = linearization_4d(-2.0)
        W = unstable_left_subspace(A)
        assert W.shape == (4, 2)
        # 稳定特征向量 (1, -1, 1, -1) 在 W 的正交补中
        np.testing.assert_allclose(W.T @ np.array([1.0, -1.0, 1.0, -1.0]), 0.0, atol=1e-10)


class TestHomoclinic:
    def test_exact_solution(self, profile_exact):
        assert profile_exact.u0 == pytest.approx(35.0 / 24.0, abs=1e-6)
        assert profile_exact.u2_0 == pytest.approx(-35.0 / 144.0, abs=1e-6)
        t = profile_exact.trajectory.t
        np.testing.assert_allclose(profile_exact.trajectory.x, exact_homoclinic(t).T, atol=1e-6)
        assert P_EXACT == pytest.approx(-13.0 / 6.0)

    def test_profile_at_minus_two(self, profile_p2):
        x = profile_p2.trajectory.x
        t = profile_p2.trajectory.t
        assert abs(x[0, 1]) < 1e-10
        assert abs(x[0, 3]) < 1e-10
        u, du, d2u, d3u = x[t > 0].T
        assert np.all(u > 0)
        assert np.all(du < 0)
        # P = -2 时 (P/2)u′ + u‴ 与 p₄ − p₂ 相同
        assert np.all(d3u - du > 0)
        assert profile_p2.boundary_residual <= 1e-8
        assert homoclinic_rhs_residual(profile_p2) <= 1e-6

    def test_stable_under_halved_tolerance(self):
        tol = ToleranceConfig()
        coarse = shoot_homoclinic_4d(-2.0, 25.0, tol)
        fine = shoot_homoclinic_4d(-2.0, 25.0, tol.refined(0.5))
        assert abs(fine.boundary_residual - coarse.boundary_residual) < 10 * tol.abs_tol
        assert fine.u0 == pytest.approx(coarse.u0, abs=1e-7)

    def test_first_integral_vanishes(self):
        profile = shoot_homoclinic_4d(-2.5, 25.0)
        values = first_integral_4d(profile.trajectory.x.T, 2.5)
        assert np.max(np.abs(values)) <= 1e-6

    def test_full_orbit_is_even(self, profile_p2):
        full = profile_p2.full_orbit()
        np.testing.assert_allclose(full(-3.0), full(3.0) * np.array([1.0, -1.0, 1.0, -1.0]), atol=1e-12)

    def test_to_frame(self, profile_p2):
        frame = profile_p2.to_frame()
        assert list(frame.columns) == ["t", "u", "du", "d2u", "d3u"]

    @pytest.mark.parametrize("P", [-3.5, -1.0])
    def test_parameter_window(self, P):
        with pytest.raises(PreconditionError):
            shoot_homoclinic_4d(P)

    def test_short_truncation(self):
        with pytest.raises(PreconditionError):
            shoot_homoclinic_4d(-2.0, T=5.0)


class TestContinuation:
    def test_single_step_matches_direct(self, profile_p2):
        profiles = continuation_in_P(-2.0, -2.0, 1)
        assert len(profiles) == 1
        assert profiles[0].u0 == pytest.approx(profile_p2.u0, abs=1e-10)

    def test_short_branch(self):
        profiles = continuation_in_P(-2.2, -2.0, 4)
        assert [p.P for p in profiles] == pytest.approx([-2.2, -2.15, -2.1, -2.05, -2.0])
        u0 = np.array([p.u0 for p in profiles])
        assert np.all(u0 > 0)

    def test_persistence_beyond_minus_two(self, profile_p2):
        seed = lambda s: profile_p2.trajectory(s).T  # noqa: E731
        profile = shoot_homoclinic_4d(-1.9, 25.0, seed=seed)
        assert profile.u0 > 0
        assert profile.boundary_residual <= 1e-8

    def test_steps_validated(self):
        with pytest.raises(PreconditionError):
            continuation_in_P(-2.0, -2.1, 0)

    def test_full_window(self):
        profiles = continuation_in_P(-3.0, -2.0, 10)
        assert len(profiles) == 11
        u0 = np.array([p.u0 for p in profiles])
        assert u0[0] == pytest.approx(1.472517, abs=1e-5)
        assert np.all(np.diff(u0) < 0)

    def test_stops_at_fold(self, monkeypatch, caplog):
        calls = []

        def failing_after_two(P, T=25.0, tol=None, seed=None):
            calls.append(P)
            if len(calls) == 3:
                raise SingularJacobian(f"P={P} 时配置法 Jacobian 奇异")
            return SimpleNamespace(P=P, trajectory=lambda s: np.zeros((np.size(s), 4)))

        monkeypatch.setattr(orbits, "shoot_homoclinic_4d", failing_after_two)
        with caplog.at_level(logging.WARNING, logger="orbits"):
            profiles = continuation_in_P(-2.2, -2.0, 4)
        assert [p.P for p in profiles] == pytest.approx([-2.2, -2.15])
        assert len(calls) == 3
        assert "-2.1" in caplog.text

    def test_failure_at_start_propagates(self, monkeypatch):
        def failing(P, T=25.0, tol=None, seed=None):
            raise SingularJacobian("奇异")

        monkeypatch.setattr(orbits, "shoot_homoclinic_4d", failing)
        with pytest.raises(SingularJacobian):
            continuation_in_P(-2.2, -2.0, 4)
