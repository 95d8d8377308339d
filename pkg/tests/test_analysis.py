import math

import numpy as np
import pytest
from scipy.special import jv

from dynamo_forge.analysis import (
    ControlSelectionError,
    adjoint_functional,
    alpha_const,
    analytic_control_eigen,
    analytic_control_matrix,
    analytic_shear_matrix_x,
    analytic_shear_matrix_y,
    averaged_elements,
    bessel_j_quadrature,
    bessel_j_series,
    beta_const,
    eigen3,
    kappa0_scan,
    matrix_element,
    matrix_row_tensor,
    select_control,
    translation_residual,
    worst_case_projection,
)
from dynamo_forge.flows import control_block, piecewise_shear_x, shear_flow_x, shear_flow_y
from dynamo_forge.solver import SolverParams, solve
from dynamo_forge.spectral import E_Z, WaveVector, field_from_modes, single_mode_field

# frozen 30-digit references for the shear constants
ALPHA_REF = 0.472001215768234767
BETA_REF = 3.56146078716884277
TOP_EIG_REF = 13.1257918832372  # control block at strength 1
BOT_EIG_REF = 0.0037813506774526


class TestBesselRoutes:
    def test_series_against_scipy(self):
        # near z = 10 the alternating terms peak near 1e3, so cancellation
        # leaves a few hundred ulp of roundoff; truncation itself is < 1e-14
        for n in (0, 1, 2, 5):
            for z in np.linspace(0.0, 10.0, 41):
                assert bessel_j_series(n, float(z)) == pytest.approx(
                    float(jv(n, z)), abs=2e-13
                )
        assert bessel_j_series(0, math.pi / 2) == pytest.approx(
            float(jv(0, math.pi / 2)), abs=1e-16
        )

    def test_series_against_quadrature(self):
        for n in (0, 1, 3):
            for z in (0.3, math.pi / 2, 4.7, 9.9):
                q = bessel_j_quadrature(n, z)
                assert abs(q.imag) < 1e-14
                assert abs(q.real - bessel_j_series(n, z)) < 1e-13

    def test_series_radius_enforced(self):
        with pytest.raises(ValueError):
            bessel_j_series(0, 15.0)

    def test_frozen_constants(self):
        assert alpha_const() == pytest.approx(ALPHA_REF, rel=1e-15)
        assert beta_const() == pytest.approx(2 * math.pi * 0.566824088905873938, rel=1e-15)
        assert beta_const() == pytest.approx(BETA_REF, rel=1e-14)


class TestClosedForms:
    def test_control_matrix_is_product_of_shears(self):
        for lam in (0.5, 1.0, 2.0):
            prod = analytic_shear_matrix_y(-lam) @ analytic_shear_matrix_x(lam)
            np.testing.assert_allclose(analytic_control_matrix(lam), prod, atol=1e-15)

    def test_control_matrix_hermitian_positive(self):
        a = analytic_control_matrix(1.3)
        np.testing.assert_allclose(a, a.conj().T, atol=1e-15)
        assert np.all(np.linalg.eigvalsh(a) > 0)

    def test_eigen_closed_form_satisfies_matrix(self):
        for lam in (0.5, 1.0, 2.0, -1.0):
            a = analytic_control_matrix(lam)
            values, vecs = analytic_control_eigen(lam)
            for i in range(3):
                resid = a @ vecs[:, i] - values[i] * vecs[:, i]
                assert np.linalg.norm(resid) < 1e-13 * np.linalg.norm(a)

    def test_eigen_frozen_values_and_product(self):
        values, _ = analytic_control_eigen(1.0)
        assert values[0].real == pytest.approx(TOP_EIG_REF, rel=1e-12)
        assert values[2].real == pytest.approx(BOT_EIG_REF, rel=1e-10)
        assert values[0].real * values[2].real == pytest.approx(
            alpha_const() ** 4, rel=1e-12
        )
        assert values[1].real == pytest.approx(alpha_const() ** 2, rel=1e-14)


class TestEigen3:
    def test_hermitian_matches_closed_form(self):
        eig = eigen3(analytic_control_matrix(1.0))
        assert eig.hermitian
        values, vecs = analytic_control_eigen(1.0)
        np.testing.assert_allclose(eig.values, values, rtol=1e-12)
        for i in range(3):
            # columns agree up to phase
            overlap = abs(np.vdot(eig.right[:, i], vecs[:, i]))
            assert overlap == pytest.approx(1.0, abs=1e-10)

    def test_left_eigenvectors_general(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        eig = eigen3(a)
        assert not eig.hermitian
        assert abs(eig.values[0]) >= abs(eig.values[1]) >= abs(eig.values[2])
        for i in range(3):
            eta = eig.left[:, i]
            resid = np.conj(eta) @ a - eig.values[i] * np.conj(eta)
            assert np.linalg.norm(resid) < 1e-10 * np.linalg.norm(a)
            assert np.linalg.norm(eta) == pytest.approx(1.0, rel=1e-12)


class TestMeasuredElements:
    def test_shear_block_matches_closed_form(self):
        params = SolverParams(dt=5e-4)
        got = matrix_element(shear_flow_x(1.0), 0.0, E_Z, E_Z, 6, params)
        np.testing.assert_allclose(got, analytic_shear_matrix_x(1.0), atol=5e-6)
        got_y = matrix_element(shear_flow_y(0.5), 0.0, E_Z, E_Z, 6, params)
        np.testing.assert_allclose(got_y, analytic_shear_matrix_y(0.5), atol=5e-6)

    def test_row_tensor_matches_column_solves(self):
        params = SolverParams(dt=2e-3)
        flow = shear_flow_x(1.0)
        N = 3
        row = matrix_row_tensor(flow, 1e-3, E_Z, N, params)
        for j in (E_Z, WaveVector(1, 0, 1), WaveVector(-2, 0, 1)):
            direct = matrix_element(flow, 1e-3, E_Z, j, N, params)
            idx = (j.kx + N, j.ky + N, j.kz + N)
            np.testing.assert_allclose(row[idx], direct, atol=1e-12)

    def test_adjoint_functional_pairs_with_solve(self):
        params = SolverParams(dt=2e-3)
        flow = shear_flow_x(0.7)
        N = 3
        eta = np.array([0.3, -1.0j, 0.8])
        g = adjoint_functional(flow, 1e-3, E_Z, eta, N, params)
        rng = np.random.default_rng(8)
        n = 2 * N + 1
        probe_coeffs = rng.standard_normal((n, n, n, 3)) + 1j * rng.standard_normal((n, n, n, 3))
        from dynamo_forge.spectral import FourierField

        probe = FourierField(N, np.ascontiguousarray(probe_coeffs))
        advanced, _ = solve(probe, flow, 1e-3, params)
        lhs = np.vdot(eta, advanced.coefficient(E_Z))
        rhs = np.sum(np.conj(g.coeffs) * probe.coeffs)
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))

    def test_translation_identity(self):
        params = SolverParams(dt=1e-3)
        rng = np.random.default_rng(3)
        for _ in range(3):
            y = rng.uniform(0, 1, size=3)
            resid = translation_residual(
                shear_flow_x(1.0), 1e-3, y, WaveVector(1, 0, 1), E_Z, 4, params
            )
            assert resid < 1e-10


class TestAveragedElements:
    def test_average_isolates_diagonal_block(self):
        # probes carry junk off the target mode; the translation average
        # cancels all of it and leaves T(e_z, e_z) acting on the e_z part
        N, M = 1, 3
        params = SolverParams(dt=5e-3)
        flow = piecewise_shear_x(1.0)
        kappa = 1e-3
        probes = []
        for c in range(3):
            amp = [0.0, 0.0, 0.0]
            amp[c] = 1.0
            probes.append(
                field_from_modes(
                    N,
                    {
                        E_Z: tuple(amp),
                        WaveVector(1, 0, 0): (0.4, 0.1j, 0.2),
                        WaveVector(0, -1, 1): (0.3, 0.0, 0.1),
                    },
                )
            )
        got = averaged_elements(flow, kappa, E_Z, M, tuple(probes), params)
        want = matrix_element(flow, kappa, E_Z, E_Z, N, params)
        np.testing.assert_allclose(got.T, want, atol=1e-10)


class TestControlSelection:
    def test_prefers_aligned_sign(self):
        ep = eigen3(analytic_control_matrix(1.0))
        em = eigen3(analytic_control_matrix(-1.0))
        pick = select_control(ep.left[:, 0], ep, em)
        assert pick.sign == 1
        assert pick.projection == pytest.approx(1.0, abs=1e-12)
        assert pick.growth_factor == pytest.approx(TOP_EIG_REF, rel=1e-10)
        pick2 = select_control(em.left[:, 0], ep, em)
        assert pick2.sign == -1

    def test_rejects_z_direction(self):
        ep = eigen3(analytic_control_matrix(1.0))
        em = eigen3(analytic_control_matrix(-1.0))
        with pytest.raises(ControlSelectionError):
            select_control(np.array([0.0, 0.0, 1.0]), ep, em)

    def test_worst_case_projection_value(self):
        # worst direction is the pure-y coefficient; both top eigenvectors
        # have the same |y| component there
        ep = eigen3(analytic_control_matrix(1.0))
        em = eigen3(analytic_control_matrix(-1.0))
        worst = worst_case_projection(ep, em)
        assert 0.12 < worst < 0.14
        assert worst == pytest.approx(abs(ep.left[1, 0]), abs=1e-3)


class TestKappaScan:
    def test_scan_separates_small_and_large_kappa(self):
        rows = kappa0_scan([0.0, 1.0], R=1.0, N=2, params=SolverParams(dt=4e-3))
        assert rows[0].certified
        assert rows[0].growth_factor > math.e
        assert not rows[1].certified
        assert rows[1].growth_factor < 1.0
