import numpy as np
import pytest

from dichotomy import (
    PHI_PARITY,
    PSI_PARITY,
    DaeSystem,
    adjoint_basis_michelson,
    adjoint_psi_4d,
    adjoint_residual,
    bounded_solution_count_4d,
    bounded_solution_count_michelson,
    count_bounded_solutions,
    dae_solve_reduced,
    four_d_jacobian_along,
    manifold_dimensions,
    michelson_initial_conditions,
    michelson_jacobian_along,
    orthogonality_defect,
    q_eigenvalues,
    r_norm,
    r_norm_monotone,
    variational_phi_4d,
)
from numerics import PreconditionError
from orbits import kuramoto_p


class TestMichelsonAdjoint:
    def test_initial_conditions(self):
        phi0, psi0 = michelson_initial_conditions()
        np.testing.assert_array_equal(phi0, [0.0, -1.0, 0.0])
        assert psi0[0] == pytest.approx(77.0 / 57.0, abs=1e-12)
        assert psi0[1] == 0.0 and psi0[2] == 1.0

    def test_basis_shape(self, michelson_basis):
        assert michelson_basis.d == 2
        assert michelson_basis["psi"].span == pytest.approx((-20.0, 20.0))
        assert michelson_basis["psi"](0.0)[0] == pytest.approx(77.0 / 57.0, abs=1e-12)

    @pytest.mark.parametrize("label,parity", [("phi", PHI_PARITY), ("psi", PSI_PARITY)])
    def test_parity(self, michelson_basis, label, parity):
        traj = michelson_basis[label]
        for t in (0.5, 2.0, 7.5, 15.0):
            np.testing.assert_allclose(traj(-t), np.asarray(parity) * traj(t), atol=1e-6)

    @pytest.mark.parametrize("label", ["phi", "psi"])
    def test_orthogonal_to_flow(self, michelson_basis, label):
        assert orthogonality_defect(michelson_basis[label]) <= 1e-8

    @pytest.mark.parametrize("label", ["phi", "psi"])
    def test_solves_adjoint_equation(self, michelson_basis, label):
        assert adjoint_residual(michelson_basis[label], michelson_jacobian_along()) <= 1e-4

    def test_solutions_decay(self, michelson_basis):
        for label in ("phi", "psi"):
            traj = michelson_basis[label]
            assert np.linalg.norm(traj(20.0)) < 1e-2 * np.max(np.linalg.norm(traj.x, axis=1))

    def test_short_window(self):
        with pytest.raises(PreconditionError):
            adjoint_basis_michelson(10.0)


class TestBoundedCounts:
    def test_michelson(self):
        assert bounded_solution_count_michelson() == 2

    def test_four_dimensional(self):
        assert bounded_solution_count_4d(-2.0) == 1
        assert bounded_solution_count_4d(-2.5) == 1

    def test_formula(self):
        assert count_bounded_solutions(3, 1, 1) == 2
        assert count_bounded_solutions(4, 2, 2) == 1

    def test_impossible_dimensions(self):
        with pytest.raises(PreconditionError):
            count_bounded_solutions(3, 2, 3)

    def test_non_hyperbolic(self):
        with pytest.raises(PreconditionError):
            manifold_dimensions(np.diag([1.0, 0.0, -1.0]))


class TestDae:
    def test_singular_times(self, dae):
        t_hat = dae.singular_times[1]
        assert dae.singular_times[0] == -t_hat
        assert t_hat == pytest.approx(1.5230, abs=1e-3)
        assert kuramoto_p(t_hat)[1] == pytest.approx(0.0, abs=1e-12)

    def test_asymptotic_matrix(self, dae):
        np.testing.assert_allclose(dae.Q, [[0.0, 1.0], [-30.0 / 19.0, -np.sqrt(11.0 / 19.0)]], atol=1e-15)
        eig = np.sort_complex(np.linalg.eigvals(dae.Q))
        np.testing.assert_allclose(eig, np.sort_complex(q_eigenvalues()), atol=1e-12)
        assert dae.a == pytest.approx(-np.sqrt(209.0) / 38.0, abs=1e-15)
        assert dae.a == pytest.approx(-dae.orbit.beta, abs=1e-14)
        np.testing.assert_allclose(eig.real, dae.a, atol=1e-12)

    def test_eigenvector_matrix(self, dae):
        diag = np.linalg.inv(dae.P_eig) @ dae.Q @ dae.P_eig
        np.testing.assert_allclose(diag - np.diag(np.diag(diag)), 0.0, atol=1e-12)

    def test_reduced_matrix_matches_definition(self, dae):
        for t in (-3.0, 0.0, 0.7, 4.0):
            direct = np.linalg.solve(dae.A(t), dae.B(t))
            np.testing.assert_allclose(dae.reduced_matrix(t), direct, rtol=1e-9, atol=1e-12)

    def test_remainder(self, dae):
        for t in (-4.0, 2.5, 6.0):
            np.testing.assert_allclose(dae.r_matrix(t), dae.reduced_matrix(t) - dae.Q, atol=1e-12)
        np.testing.assert_allclose(dae.reduced_matrix(30.0), dae.Q, atol=1e-8)
        assert r_norm(30.0) <= 1e-8
        assert r_norm(40.0) > 0.0

    def test_remainder_monotone(self):
        assert r_norm_monotone(20.0, 40.0)

    def test_singular_time_rejected(self, dae):
        with pytest.raises(PreconditionError):
            dae.reduced_matrix(dae.singular_times[1])

    def test_lift_recovers_psi(self, dae):
        w = dae.lift(0.0, np.array([1.0, 0.0]))
        assert w[0] == pytest.approx(77.0 / 57.0, abs=1e-12)
        np.testing.assert_array_equal(DaeSystem.drop(w), [1.0, 0.0])

    def test_reduced_solution_crosses_singularity(self, dae, michelson_basis, tight):
        sol = dae_solve_reduced([1.0, 0.0], (0.0, 5.0), tight, dae)
        psi = michelson_basis["psi"]
        np.testing.assert_allclose(sol(5.0), DaeSystem.drop(psi(5.0)), atol=1e-6)
        np.testing.assert_allclose(dae.lift(5.0, sol(5.0)), psi(5.0), atol=1e-6)

    def test_start_near_singularity(self, dae):
        with pytest.raises(PreconditionError):
            dae_solve_reduced([1.0, 0.0], (dae.singular_times[1] + 0.1, 5.0), dae=dae)


class TestFourDimensionalAdjoint:
    def test_initial_value(self, profile_p2):
        psi = adjoint_psi_4d(profile_p2)
        u0, u2 = profile_p2.u0, profile_p2.u2_0
        np.testing.assert_allclose(psi(0.0), [u0 - u0**2, 0.0, -u2, 0.0], atol=1e-9)

    def test_orthogonal_to_flow(self, profile_p2):
        psi = adjoint_psi_4d(profile_p2)
        phi = variational_phi_4d(profile_p2)
        assert np.max(np.abs(np.sum(psi.x * phi.x, axis=1))) <= 1e-8

    def test_solves_adjoint_equation(self, profile_p2):
        psi = adjoint_psi_4d(profile_p2)
        assert adjoint_residual(psi, four_d_jacobian_along(profile_p2)) <= 1e-4

    def test_parity(self, profile_p2):
        psi = adjoint_psi_4d(profile_p2)
        np.testing.assert_allclose(psi(-2.0), psi(2.0) * np.array([1.0, -1.0, 1.0, -1.0]), atol=1e-10)
