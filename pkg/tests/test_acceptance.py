"""Acceptance suite: one printed PASS/FAIL line per criterion, then the assertion.

Fixtures: T3 (torus, three plane waves, positive-type potential) and G3
(three-point trapped grid).  Particle numbers N = 10, 20, 40, 80 and
lambda = 1/(N-1) throughout.
"""

import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from _util import gaussian_vector, random_map, string_values
from bogoexp.bogoliubov import all_strings, wick_evaluate_many
from bogoexp.core import taylor_c
from bogoexp.dynamics import (RK_TOL, FrameOperators, apply_string, fock_two_point, integrate_propagator,
                              propagate_two_point, richardson_estimate, route_agreement)
from bogoexp.fixtures import get_fixture
from bogoexp.fock import FockBasis
from bogoexp.hartree import solve_hartree_dynamics
from bogoexp.pipeline import DynamicModel, dynamic_sweep, model_from_fixture, static_sweep

PARTICLES = (10, 20, 40, 80)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number:2d} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def torus_sweep():
    start = time.perf_counter()
    model = model_from_fixture(get_fixture("T3"), 2)
    sweep = static_sweep(model, PARTICLES)
    return model, sweep, time.perf_counter() - start


@pytest.fixture(scope="module")
def trapped_dynamics():
    start = time.perf_counter()
    model = DynamicModel(get_fixture("G3"), 1, t_max=1.0)
    sweep = dynamic_sweep(model, PARTICLES)
    return model, sweep, time.perf_counter() - start


def test_criterion_01_energy_expansion(torus_sweep, capsys):
    _, sweep, seconds = torus_sweep
    fit = sweep.fit("energy_residuals", 1)
    ok = fit.slope >= 1.7 and fit.r2 >= 0.98 and seconds <= 120
    report(capsys, 1, ok, f"T3 energy slope {fit.slope:.3f} (>= 1.7), R^2 {fit.r2:.4f}, {seconds:.1f} s")
    assert ok


def test_criterion_02_wave_function_expansion(torus_sweep, capsys):
    _, sweep, _ = torus_sweep
    slopes = [sweep.fit("wave_residuals", a).slope for a in (0, 1, 2)]
    ok = all(s >= (a + 1) / 2 - 0.3 for a, s in enumerate(slopes))
    report(capsys, 2, ok, "T3 wave slopes " + ", ".join(
        f"a={a}: {s:.3f} (>= {(a + 1) / 2 - 0.3:.1f})" for a, s in enumerate(slopes)))
    assert ok


def test_criterion_03_static_density(torus_sweep, capsys):
    model, sweep, _ = torus_sweep
    slopes = [sweep.fit("density_residuals", a).slope for a in (0, 1)]
    first, _ = model.expansion.density_lines(1, model.phi, model.kernels.B)
    first_line = float(np.max(np.abs(first)))
    ok = all(s >= a + 0.7 for a, s in enumerate(slopes)) and first_line <= 1e-12
    report(capsys, 3, ok, "T3 density slopes " + ", ".join(
        f"a={a}: {s:.3f} (>= {a + 0.7:.1f})" for a, s in enumerate(slopes))
        + f"; first line of gamma_11 {first_line:.1e} (<= 1e-12)")
    assert ok


def test_criterion_04_dynamics(trapped_dynamics, capsys):
    _, sweep, seconds = trapped_dynamics
    slopes = [sweep.fit("wave_residuals", a).slope for a in (0, 1)]
    ok = all(s >= (a + 1) / 2 - 0.3 for a, s in enumerate(slopes)) and seconds <= 600
    report(capsys, 4, ok, "G3 wave slopes at t=1 " + ", ".join(
        f"a={a}: {s:.3f} (>= {(a + 1) / 2 - 0.3:.1f})" for a, s in enumerate(slopes)) + f"; {seconds:.1f} s")
    assert ok


def test_criterion_05_dynamic_density(trapped_dynamics, capsys):
    _, sweep, _ = trapped_dynamics
    slopes = [sweep.fit("density_residuals", a).slope for a in (0, 1)]
    ok = all(s >= a + 0.7 for a, s in enumerate(slopes))
    report(capsys, 5, ok, "G3 density slopes at t=1 " + ", ".join(
        f"a={a}: {s:.3f} (>= {a + 0.7:.1f})" for a, s in enumerate(slopes)))
    assert ok


def test_criterion_06_wick_suite(capsys):
    rng = np.random.default_rng(6)
    fock = FockBasis(2, 28)
    strings = {n: all_strings(2, n) for n in range(1, 7)}
    worst_even = worst_odd = dense_odd = 0.0
    for _ in range(100):
        bmap = random_map(rng, 2, 0.25)
        x = gaussian_vector(fock, bmap)
        state = bmap.quasi_free()
        for n, codes in strings.items():
            wick = wick_evaluate_many(state, codes)
            dense = string_values(fock, codes, x)
            if n % 2:
                worst_odd = max(worst_odd, float(np.max(np.abs(wick))))
                dense_odd = max(dense_odd, float(np.max(np.abs(dense))))
            else:
                worst_even = max(worst_even, float(np.max(np.abs(wick - dense))))
    ok = worst_odd == 0 and dense_odd <= 1e-10 and worst_even <= 1e-10
    report(capsys, 6, ok, f"100 random quasi-free states, odd strings max {worst_odd:.1e} (== 0; "
           f"dense Fock {dense_odd:.1e}), "
           f"even strings up to length 6 vs dense Fock {worst_even:.1e} (<= 1e-10)")
    assert ok


def test_criterion_07_generalized_wick_odd(capsys):
    model = DynamicModel(get_fixture("G3"), 2, t_max=1.0)
    h = model.hierarchy
    fock = h.frame.fock
    strings = [[]] + [[(c >= 3, c % 3) for c in row] for n in (1, 2, 3) for row in all_strings(3, n)]
    worst, count = 0.0, 0
    for t in (0.0, 0.5, 1.0):
        chis = h.at(t)
        for ell in range(3):
            for k in range(3 - ell):
                for ops in strings:
                    if (ell + k + len(ops)) % 2:
                        worst = max(worst, abs(np.vdot(chis[ell], apply_string(fock, ops, chis[k]))))
                        count += 1
    ok = worst <= 1e-9
    report(capsys, 7, ok, f"G3 hierarchy through order 2, {count} odd correlations at t in (0, 0.5, 1): "
           f"max {worst:.1e} (<= 1e-9)")
    assert ok


def test_criterion_08_coefficients_and_first_energy(capsys):
    worst = 0.0
    for ell in (Fraction(0), Fraction(1, 2), Fraction(1), Fraction(3, 2)):
        power = mpmath.mpf(1) / 2 - mpmath.mpf(ell.numerator) / ell.denominator
        series = mpmath.taylor(lambda x: (1 - x) ** power, 0, 12)
        worst = max(worst, max(abs(float(taylor_c(ell, j)) - float(series[j])) for j in range(13)))
    gaps = []
    for name in ("T3", "G3"):
        ex = model_from_fixture(get_fixture(name), 1).expansion
        gaps.append(abs(ex.energy(1) - ex.energy_first_closed_form()))
    ok = worst <= 1e-12 and max(gaps) <= 1e-10
    report(capsys, 8, ok, f"Taylor tables max error {worst:.1e} (<= 1e-12); "
           f"E_1 trace formula vs closed form T3 {gaps[0]:.1e}, G3 {gaps[1]:.1e} (<= 1e-10)")
    assert ok


def test_criterion_09_structure_preservation(trapped_dynamics, torus_sweep, capsys):
    model = trapped_dynamics[0]
    static_defect = max(model.static.bmap.defect, torus_sweep[0].bmap.defect)
    blocks = integrate_propagator(model.frame, 1.0)
    state0 = fock_two_point(model.frame.fock, model.initial[0])
    agreement = route_agreement(blocks, state0, propagate_two_point(model.frame, state0, 1.0))
    fx = get_fixture("G3")
    coarse_traj = solve_hartree_dynamics(model.static.phi, fx.basis, fx.potential, 1.0, 2 * fx.dt)
    coarse = integrate_propagator(FrameOperators(coarse_traj, 2), 1.0)
    richardson = max(richardson_estimate(coarse.U[-1], blocks.U[-1]),
                     richardson_estimate(coarse.V[-1], blocks.V[-1]))
    ok = (static_defect <= 1e-10 and blocks.max_defect <= 1e-8 and agreement <= 10 * RK_TOL
          and richardson <= RK_TOL)
    report(capsys, 9, ok, f"static defect {static_defect:.1e} (<= 1e-10), propagator defect "
           f"{blocks.max_defect:.1e} (<= 1e-8), route A vs B {agreement:.1e} (<= {10 * RK_TOL:.0e}), "
           f"step-halving error {richardson:.1e} (<= rk_tol {RK_TOL:.0e})")
    assert ok


def test_criterion_10_truncation_robustness(capsys):
    fx = get_fixture("T3")
    models = [model_from_fixture(fx, 2, n_max=n) for n in (fx.n_max, 2 * fx.n_max)]
    e = [m.energies()[:2] for m in models]
    g = [m.expansion.density(1, m.phi, m.kernels.B) for m in models]
    de = max(abs(a - b) for a, b in zip(*e))
    dg = float(np.max(np.abs(g[0] - g[1])))
    ok = de <= 1e-8 and dg <= 1e-8
    report(capsys, 10, ok, f"T3 n_max {fx.n_max} -> {2 * fx.n_max}: E_0, E_1 change {de:.1e}, "
           f"gamma_11 entries change {dg:.1e} (<= 1e-8)")
    assert ok
