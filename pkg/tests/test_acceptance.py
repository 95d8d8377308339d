"""End-to-end acceptance battery.

Eleven numbered checks covering the package's quantitative commitments:
closed-form matrix reproduction, eigensystem formulas, exact discrete
identities (translation, averaging, selection rules, heat decay), growth
scheduling with per-block guarantees, energy certificates, dt convergence,
and replay determinism.  Each test prints one PASS/FAIL line with the
measured numbers.
"""

import math
import os
import time

import numpy as np
import pytest

from dynamo_forge.analysis import (
    alpha_const,
    analytic_control_eigen,
    analytic_control_matrix,
    analytic_shear_matrix_x,
    analytic_shear_matrix_y,
    bessel_j_quadrature,
    bessel_j_series,
    beta_const,
    eigen3,
    matrix_element,
    matrix_row_tensor,
    averaged_elements,
)
from dynamo_forge.config import RunConfig
from dynamo_forge.controller import GROWTH_THRESHOLD, run_schedule
from dynamo_forge.flows import (
    control_block,
    idle_flow,
    shear_flow_x,
    shear_flow_y,
    translate_flow,
)
from dynamo_forge.reports import replay_flow, write_run_reports
from dynamo_forge.solver import SolverParams, solve
from dynamo_forge.spectral import (
    E_Z,
    WaveVector,
    field_from_modes,
    single_mode_field,
)

MATRIX_N = 32
MATRIX_DT = 2.5e-4

FLOW_FAMILIES = {
    "x-shear": (shear_flow_x, analytic_shear_matrix_x),
    "y-shear": (shear_flow_y, analytic_shear_matrix_y),
    "block": (control_block, analytic_control_matrix),
}


def report(num: int, ok: bool, detail: str) -> None:
    print(f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def explicit_matrices():
    """Numeric matrix elements at the z unit mode for all nine flow/amplitude
    pairs, with per-pair wall time and deviation from the closed forms."""
    params = SolverParams(dt=MATRIX_DT)
    out = {}
    for lam in (0.5, 1.0, 2.0):
        for name, (make_flow, make_exact) in FLOW_FAMILIES.items():
            t0 = time.perf_counter()
            numeric = matrix_element(make_flow(lam), 0.0, E_Z, E_Z, MATRIX_N, params)
            seconds = time.perf_counter() - t0
            exact = make_exact(lam)
            err = float(np.linalg.norm(numeric - exact))
            out[(name, lam)] = {"err": err, "seconds": seconds}
    return out


@pytest.fixture(scope="module")
def schedule_run(tmp_path_factory):
    """The three-diffusivity schedule driven to two threshold events each,
    with its reports exported once for the downstream checks."""
    config = RunConfig(stop_after_crossings=2)
    t0 = time.perf_counter()
    result = run_schedule(config)
    wall = time.perf_counter() - t0
    outdir = str(tmp_path_factory.mktemp("schedule"))
    write_run_reports(result, outdir)
    return result, wall, outdir


def test_criterion_01_explicit_matrices(explicit_matrices):
    dual = abs(
        bessel_j_series(0, math.pi / 2) - bessel_j_quadrature(0, math.pi / 2)
    ) + abs(bessel_j_series(1, math.pi / 2) - bessel_j_quadrature(1, math.pi / 2))
    assert dual < 1e-12
    assert abs(alpha_const() - bessel_j_series(0, math.pi / 2)) < 1e-15
    assert abs(beta_const() - 2 * math.pi * bessel_j_series(1, math.pi / 2)) < 1e-14

    worst = max(v["err"] for v in explicit_matrices.values())
    per_lam = {
        lam: sum(v["seconds"] for (n, l), v in explicit_matrices.items() if l == lam)
        for lam in (0.5, 1.0, 2.0)
    }
    ok = worst < 1e-5 and all(s < 60.0 for s in per_lam.values())
    report(
        1,
        ok,
        f"9 matrix elements at N={MATRIX_N}, dt={MATRIX_DT}: worst deviation "
        f"{worst:.3e} (tol 1e-5), per-amplitude seconds "
        f"{ {k: round(v, 1) for k, v in per_lam.items()} } (limit 60)",
    )


def test_criterion_02_eigen_closed_forms():
    mat = analytic_control_matrix(1.0)
    eig = eigen3(mat)
    vals, vecs = analytic_control_eigen(1.0)
    dval = float(np.max(np.abs(eig.values - vals)))
    dvec = 0.0
    for i in range(3):
        a = eig.right[:, i]
        b = vecs[:, i]
        phase = np.vdot(a, b)
        phase = phase / abs(phase)
        dvec = max(dvec, float(np.max(np.abs(a * phase - b))))
    top = abs(eig.values[0])
    ok = (
        dval < 1e-10
        and dvec < 1e-10
        and top > math.e
        and eig.simplicity_gap > 0.1
    )
    report(
        2,
        ok,
        f"eigenvalue dev {dval:.2e}, eigenvector dev {dvec:.2e} (tol 1e-10); "
        f"top |value| {top:.6f} > e; simplicity gap {eig.simplicity_gap:.3f} > 0.1",
    )


def test_criterion_03_translation_identity():
    rng = np.random.default_rng(2026)
    N = 3
    params = SolverParams(dt=1e-3)
    flow = control_block(1.0)
    worst = 0.0
    tuples = 0
    for kappa in (0.0, 1e-3):
        for _ in range(4):
            j = WaveVector(*(int(v) for v in rng.integers(-2, 3, size=3)))
            while not j.as_array().any():
                j = WaveVector(*(int(v) for v in rng.integers(-2, 3, size=3)))
            y = rng.random(3)
            shifted = translate_flow(flow, y)
            base_cols = []
            shift_cols = []
            for c in range(3):
                amp = [0.0, 0.0, 0.0]
                amp[c] = 1.0
                seed = single_mode_field(N, j, amp)
                fb, _ = solve(seed, flow, kappa, params)
                fs, _ = solve(seed, shifted, kappa, params)
                base_cols.append(fb)
                shift_cols.append(fs)
            for _ in range(5):
                k = WaveVector(*(int(v) for v in rng.integers(-2, 3, size=3)))
                phase = np.exp(
                    2j * np.pi * float((j.as_array() - k.as_array()) @ y)
                )
                base = np.stack([f.coefficient(k) for f in base_cols], axis=1)
                shift = np.stack([f.coefficient(k) for f in shift_cols], axis=1)
                worst = max(worst, float(np.linalg.norm(shift - phase * base)))
                tuples += 1
    ok = worst < 1e-10 and tuples == 40
    report(
        3,
        ok,
        f"{tuples} random (y, k, j) tuples at kappa in {{0, 1e-3}}: "
        f"worst residual {worst:.3e} (tol 1e-10)",
    )


def test_criterion_04_averaged_matrix_cancellation():
    N, M = 1, 3
    params = SolverParams(dt=5e-3)
    flow = control_block(1.0)
    rng = np.random.default_rng(7)

    basis = [single_mode_field(N, E_Z, np.eye(3)[c]) for c in range(3)]
    junk_modes = [
        WaveVector(0, 0, 1),
        WaveVector(1, 0, 0),
        WaveVector(0, 1, -1),
        WaveVector(1, 1, 1),
        WaveVector(-1, 0, 1),
    ]
    junk = []
    for _ in range(2):
        modes = {
            k: rng.standard_normal(3) + 1j * rng.standard_normal(3)
            for k in junk_modes
        }
        junk.append(field_from_modes(N, modes))

    worst = 0.0
    for kappa in (0.0, 1e-3):
        diag = matrix_element(flow, kappa, E_Z, E_Z, N, params)
        avg = averaged_elements(flow, kappa, E_Z, M, tuple(basis + junk), params)
        avg_matrix = np.stack(avg[:3], axis=1)
        worst = max(worst, float(np.linalg.norm(avg_matrix - diag)))
        for p, probe in enumerate(junk, start=3):
            want = diag @ probe.coefficient(E_Z)
            worst = max(worst, float(np.linalg.norm(avg[p] - want)))
    ok = worst < 1e-10
    report(
        4,
        ok,
        f"M={M} translation average vs diagonal block at N={N}, "
        f"kappa in {{0, 1e-3}}, basis and junk probes: worst deviation "
        f"{worst:.3e} (tol 1e-10)",
    )


def test_criterion_05_selection_rule_zeros():
    N = 3
    params = SolverParams(dt=1e-3)

    # Column of the x-shear at the z unit mode: rows with a y offset vanish.
    cols = []
    for c in range(3):
        seed = single_mode_field(N, E_Z, np.eye(3)[c])
        out, _ = solve(seed, shear_flow_x(1.0), 0.0, params)
        cols.append(out)
    worst_u = 0.0
    live_u = 0.0
    for kx in range(-2, 3):
        for ky in range(-2, 3):
            for kz in range(-2, 3):
                k = WaveVector(kx, ky, kz)
                block = np.stack([f.coefficient(k) for f in cols], axis=1)
                mag = float(np.max(np.abs(block)))
                if ky != 0:
                    worst_u = max(worst_u, mag)
                else:
                    live_u = max(live_u, mag)

    # Row of the y-shear at the z unit mode: columns off the x=0, z=1 line
    # vanish.
    row = matrix_row_tensor(shear_flow_y(1.0), 0.0, E_Z, N, params)
    worst_v = 0.0
    live_v = 0.0
    for kx in range(-2, 3):
        for ky in range(-2, 3):
            for kz in range(-2, 3):
                block = row[N + kx, N + ky, N + kz]
                mag = float(np.max(np.abs(block)))
                if kx != 0 or kz != 1:
                    worst_v = max(worst_v, mag)
                else:
                    live_v = max(live_v, mag)

    ok = worst_u < 1e-10 and worst_v < 1e-10 and live_u > 1e-3 and live_v > 1e-3
    report(
        5,
        ok,
        f"off-target elements over |k|_inf <= 2: x-shear column worst "
        f"{worst_u:.3e}, y-shear row worst {worst_v:.3e} (tol 1e-10); "
        f"allowed elements reach {live_u:.3f} / {live_v:.3f}",
    )


def test_criterion_06_heat_exactness():
    N = 3
    t_end = 3.0
    params = SolverParams(dt=5e-3)
    modes = {
        WaveVector(1, 0, 0): (0.0, 1.0, 2.0j),
        WaveVector(1, 1, 0): (1.0, -1.0, 0.5),
        WaveVector(0, 2, 1): (3.0, 1.0, -2.0),
        WaveVector(2, 2, 1): (1.0, 1.0, -4.0),
        WaveVector(0, 0, 3): (1.0j, 2.0, 0.0),
    }
    worst = 0.0
    for kappa in (1e-3, 1e-1):
        seed = field_from_modes(N, modes)
        out, _ = solve(seed, idle_flow(0.0, t_end), kappa, params)
        for k, amp in modes.items():
            k2 = float(k.as_array() @ k.as_array())
            want = np.asarray(amp, dtype=np.complex128) * math.exp(
                -4.0 * math.pi**2 * k2 * kappa * t_end
            )
            got = out.coefficient(k)
            worst = max(
                worst,
                float(np.max(np.abs(got - want)) / np.max(np.abs(want))),
            )
    ok = worst < 1e-12
    report(
        6,
        ok,
        f"u = 0 decay over t={t_end} at kappa in {{1e-3, 1e-1}}: worst "
        f"per-mode relative error {worst:.3e} (tol 1e-12)",
    )


def test_criterion_07_growth_threshold():
    t0 = time.perf_counter()
    details = []
    ok = True
    for kappa in (0.0, 1e-3):
        config = RunConfig(kappas=(kappa,), horizon=60.0, stop_after_crossings=1)
        res = run_schedule(config)
        blocks = [s for s in res.segments if s["kind"] == "growth_block"]
        cross = res.crossings[0] if res.crossings else None
        ok = ok and res.status == "complete" and cross is not None
        ok = ok and cross["t"] <= 60.0 and cross["stat"] >= GROWTH_THRESHOLD
        ok = ok and len(blocks) > 0
        slack = 1e-6
        ok = ok and all(
            b["realized_factor"] >= b["top_eigenvalue_abs"] - slack for b in blocks
        )
        if kappa == 0.0 and blocks:
            # closed-form top eigenvalue at unit amplitude
            lam_plus = float(np.abs(analytic_control_eigen(1.0)[0][0]))
            ok = ok and abs(blocks[0]["top_eigenvalue_abs"] - lam_plus) < 1e-4
        margin = (
            min(b["realized_factor"] - b["top_eigenvalue_abs"] for b in blocks)
            if blocks
            else math.nan
        )
        details.append(
            f"kappa={kappa!r}: threshold at t={cross['t'] if cross else None}, "
            f"{len(blocks)} blocks, min factor margin {margin:.2e}"
        )
    wall = time.perf_counter() - t0
    ok = ok and wall < 300.0
    report(7, ok, "; ".join(details) + f"; wall {wall:.1f}s (limit 300)")


def test_criterion_08_multi_kappa_schedule(schedule_run):
    result, wall, _ = schedule_run
    ok = result.status == "complete" and result.end_time <= 300.0 and wall < 900.0
    details = []
    for kappa in result.config.kappas:
        times = [c["t"] for c in result.crossings if c["kappa"] == kappa]
        distinct = len(set(times))
        ok = ok and distinct >= 2
        details.append(f"kappa={kappa!r}: {distinct} distinct threshold times")
    report(
        8,
        ok,
        "; ".join(details)
        + f"; end time {result.end_time}, status {result.status}, wall {wall:.1f}s",
    )


def test_criterion_09_energy_certificates(schedule_run):
    result, _, _ = schedule_run
    lower = min(c["lower_margin"] for c in result.certificates)
    proj = min(c["projective_margin"] for c in result.certificates)
    all_hold = all(c["holds"] for c in result.certificates)
    ok = all_hold and lower >= -1e-9 and proj >= -1e-9
    report(
        9,
        ok,
        f"{len(result.certificates)} segment certificates: min lower margin "
        f"{lower:.2e}, min projective margin {proj:.2e}, all hold: {all_hold}",
    )


def test_criterion_10_dt_convergence(explicit_matrices):
    # The 2x amplitude is excluded: there the stability cap already reduces
    # the step below dt, so halving dt does not halve the actual step.
    half = SolverParams(dt=MATRIX_DT / 2.0)
    ratios = {}
    ok = True
    for lam in (0.5, 1.0):
        for name, (make_flow, make_exact) in FLOW_FAMILIES.items():
            numeric = matrix_element(make_flow(lam), 0.0, E_Z, E_Z, MATRIX_N, half)
            err_half = float(np.linalg.norm(numeric - make_exact(lam)))
            ratio = explicit_matrices[(name, lam)]["err"] / err_half
            ratios[(name, lam)] = round(ratio, 2)
            ok = ok and 3.5 <= ratio <= 4.5
    report(
        10,
        ok,
        f"error ratios after halving dt from {MATRIX_DT}: {ratios} "
        f"(required range [3.5, 4.5])",
    )


def test_criterion_11_replay_determinism(schedule_run, tmp_path):
    result, _, outdir = schedule_run
    rep = replay_flow(outdir, tolerance=1e-8)
    ok = rep.passed and rep.max_error < 1e-8

    second = str(tmp_path / "second")
    write_run_reports(run_schedule(result.config), second)
    identical = True
    count = 0
    for root, _, names in os.walk(outdir):
        for name in names:
            pa = os.path.join(root, name)
            pb = os.path.join(second, os.path.relpath(pa, outdir))
            count += 1
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                if fa.read() != fb.read():
                    identical = False
    ok = ok and identical and count >= 10
    report(
        11,
        ok,
        f"replay max relative error {rep.max_error:.3e} (tol 1e-8); "
        f"{count} report files byte-identical on rerun: {identical}",
    )
