"""Fast self-checks wired to the `verify` command and reused by the tests.

Each check exercises one exact identity or closed form end to end and is
sized to keep the whole battery under a minute on one core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import (
    alpha_const,
    analytic_control_eigen,
    analytic_control_matrix,
    analytic_shear_matrix_x,
    bessel_j_quadrature,
    bessel_j_series,
    beta_const,
    eigen3,
    matrix_element,
    translation_residual,
)
from .flows import control_block, shear_flow_x, shear_flow_y
from .solver import SolverParams, adjoint_apply, heat_multiply, solve
from .spectral import (
    E_Z,
    FourierField,
    WaveVector,
    field_from_modes,
    norm_sq_grid,
    solenoidal_project,
)

__all__ = ["CheckResult", "run_verification"]

_ALPHA_REF = 0.472001215768234767
_BETA_REF = 3.56146078716884277


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.name}: {self.detail}"


def _check_bessel_routes() -> CheckResult:
    worst = 0.0
    for n in range(4):
        for z in (0.3, 1.0, math.pi / 2, 2.0, 4.0):
            a = bessel_j_series(n, z)
            b = bessel_j_quadrature(n, z)
            worst = max(worst, abs(a - b.real), abs(b.imag))
    return CheckResult(
        "bessel dual route",
        worst < 1e-12,
        f"max series-vs-quadrature deviation {worst:.3e}",
    )


def _check_bessel_references() -> CheckResult:
    da = abs(alpha_const() - _ALPHA_REF)
    db = abs(beta_const() - _BETA_REF)
    return CheckResult(
        "bessel constants",
        da < 1e-14 and db < 1e-13,
        f"alpha off {da:.3e}, beta off {db:.3e}",
    )


def _check_eigen_closed_form() -> CheckResult:
    a = analytic_control_matrix(1.0)
    eig = eigen3(a)
    values, vecs = analytic_control_eigen(1.0)
    dv = float(np.max(np.abs(eig.values - values)))
    overlaps = [abs(np.vdot(vecs[:, i], eig.right[:, i])) for i in range(3)]
    do = 1.0 - min(overlaps)
    ok = dv < 1e-10 * abs(values[0]) and do < 1e-10
    return CheckResult(
        "control eigensystem",
        ok,
        f"eigenvalue deviation {dv:.3e}, eigenvector misalignment {do:.3e}",
    )


def _check_shear_matrix() -> CheckResult:
    params = SolverParams(dt=5e-4)
    got = matrix_element(shear_flow_x(1.0), 0.0, E_Z, E_Z, 6, params)
    want = analytic_shear_matrix_x(1.0)
    err = float(np.linalg.norm(got - want))
    return CheckResult(
        "shear matrix element",
        err < 2e-5,
        f"Frobenius deviation {err:.3e} at N=6, dt=5e-4",
    )


def _check_translation_identity() -> CheckResult:
    rng = np.random.default_rng(7)
    params = SolverParams(dt=1e-3)
    worst = 0.0
    for _ in range(2):
        y = rng.random(3)
        k_out = WaveVector(1, 0, 1)
        k_in = E_Z
        r = translation_residual(control_block(1.0), 1e-3, y, k_out, k_in, 3, params)
        worst = max(worst, r)
    return CheckResult(
        "translation identity",
        worst < 1e-10,
        f"max residual {worst:.3e}",
    )


def _check_selection_rules() -> CheckResult:
    params = SolverParams(dt=1e-3)
    N = 3
    worst = 0.0
    # Column of the x-shear at e_z: must vanish off the plane k_y = 1's
    # complement, i.e. whenever (k - e_z) . e_y != 0.
    cols = []
    for c in range(3):
        amp = [0j, 0j, 0j]
        amp[c] = 1.0 + 0j
        seed = field_from_modes(N, {E_Z: tuple(amp)})
        out, _ = solve(seed, shear_flow_x(1.0), 0.0, params)
        cols.append(out)
    for ky in (-2, -1, 1, 2):
        for kx in (-2, -1, 0, 1, 2):
            for kz in (-2, -1, 0, 1, 2):
                k = WaveVector(kx, ky, kz)
                block = np.stack([c.coefficient(k) for c in cols], axis=1)
                worst = max(worst, float(np.linalg.norm(block)))
    return CheckResult(
        "selection rule zeros",
        worst < 1e-10,
        f"largest forbidden element {worst:.3e}",
    )


def _check_heat_exactness() -> CheckResult:
    N = 4
    modes = {
        WaveVector(1, 0, 0): (0.0, 0.3 + 0.1j, -0.2j),
        WaveVector(2, -1, 3): (0.1, 0.2, 0.05 - 0.04j),
    }
    b = field_from_modes(N, modes)
    kappa, t = 1e-1, 3.0
    got = heat_multiply(b, kappa, t)
    worst = 0.0
    for k, amp in modes.items():
        factor = math.exp(-4.0 * math.pi**2 * kappa * t * float(k.norm_sq()))
        want = np.array(amp, dtype=np.complex128) * factor
        err = float(np.max(np.abs(got.coefficient(k) - want)))
        worst = max(worst, err / max(np.max(np.abs(want)), 1e-300))
    return CheckResult(
        "heat exactness",
        worst < 1e-12,
        f"max relative deviation {worst:.3e}",
    )


def _check_adjoint_pairing() -> CheckResult:
    rng = np.random.default_rng(11)
    N = 3
    n = 2 * N + 1
    params = SolverParams(dt=1e-3)
    flow = control_block(1.0)
    a = FourierField(
        N, (rng.standard_normal((n, n, n, 3)) + 1j * rng.standard_normal((n, n, n, 3)))
    )
    b = FourierField(
        N, (rng.standard_normal((n, n, n, 3)) + 1j * rng.standard_normal((n, n, n, 3)))
    )
    a = solenoidal_project(a)
    fwd, _ = solve(a, flow, 1e-3, params)
    adj = adjoint_apply(b, flow, 1e-3, params)
    lhs = complex(np.sum(np.conj(b.coeffs) * fwd.coeffs))
    rhs = complex(np.sum(np.conj(adj.coeffs) * a.coeffs))
    scale = math.sqrt(float(a.l2_norm_sq()) * float(b.l2_norm_sq()))
    err = abs(lhs - rhs) / scale
    return CheckResult(
        "adjoint pairing",
        err < 1e-11,
        f"relative pairing defect {err:.3e}",
    )


def _check_grid_weights() -> CheckResult:
    g = norm_sq_grid(2)
    ok = g.shape == (5, 5, 5) and g[2, 2, 2] == 0 and g[4, 2, 2] == 4 and g[2, 1, 2] == 1
    return CheckResult(
        "wavevector grid weights",
        bool(ok),
        "|k|^2 lattice spot checks",
    )


def run_verification() -> list[CheckResult]:
    checks = [
        _check_bessel_references,
        _check_bessel_routes,
        _check_eigen_closed_form,
        _check_grid_weights,
        _check_heat_exactness,
        _check_shear_matrix,
        _check_selection_rules,
        _check_adjoint_pairing,
        _check_translation_identity,
    ]
    return [c() for c in checks]
