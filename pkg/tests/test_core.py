from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bogoexp.core import (GRID, TORUS, InteractionPotential, ScalingParameters, TrapPotential,
                          build_basis, coefficient_tables, taylor_c, torus_wavenumbers)


def test_torus_wavenumbers_order_by_modulus_positive_first():
    assert list(torus_wavenumbers(5)) == [0, 1, -1, 2, -2]
    assert list(torus_wavenumbers(4)) == [0, 1, -1, 2]


def test_torus_momenta_and_kinetic():
    b = build_basis(TORUS, 3, 1.0)
    np.testing.assert_allclose(b.momenta, [0, 2 * np.pi, -2 * np.pi])
    np.testing.assert_allclose(np.diag(b.kinetic()).real, [0, 4 * np.pi**2, 4 * np.pi**2])


@pytest.mark.parametrize("kind,m,length", [(TORUS, 5, 2.0), (GRID, 7, 3.0)])
def test_modes_are_orthonormal(kind, m, length):
    np.testing.assert_allclose(build_basis(kind, m, length).gram(), np.eye(m), atol=1e-12)


def test_grid_points_are_cell_centred():
    b = build_basis(GRID, 3, 3.0)
    np.testing.assert_allclose(b.points, [-1.0, 0.0, 1.0])
    assert b.spacing == 1.0
    lap = b.kinetic().real
    np.testing.assert_allclose(lap, [[2, -1, 0], [-1, 2, -1], [0, -1, 2]])


@pytest.mark.parametrize("args", [(TORUS, 1, 1.0), (TORUS, 3, 0.0), ("sphere", 3, 1.0), (GRID, 2.5, 1.0)])
def test_build_basis_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_basis(*args)


def test_positive_type_rejects_negative_coefficients():
    with pytest.raises(ValueError):
        InteractionPotential(np.array([1.0, -0.5, -0.5]))
    InteractionPotential(np.array([1.0, -0.5, -0.5]), positive_type=False)


def test_uneven_potential_rejected():
    b = build_basis(TORUS, 3, 1.0)
    with pytest.raises(ValueError):
        InteractionPotential(np.array([1.0, 0.5, 0.2])).tensor(b)


def test_fourier_lookup_extends_evenly_and_pads_with_zero():
    b = build_basis(TORUS, 2, 1.0)
    table = InteractionPotential(np.array([1.0, 0.3])).fourier_lookup(b)
    assert table == {0: 1.0, 1: 0.3, -1: 0.3}
    v = InteractionPotential(np.array([1.0, 0.3])).tensor(b)
    # k_p - k_r = 2 is not listed: zero
    assert v[1, 1, 1, 1] == pytest.approx(1.0)
    assert v[1, 0, 0, 1] == pytest.approx(0.3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 3), min_size=2, max_size=3), st.floats(0.5, 3))
def test_torus_tensor_symmetries(half, length):
    m = 2 * len(half) - 1
    vhat = [half[0]] + [x for x in half[1:] for _ in range(2)]
    b = build_basis(TORUS, m, length)
    v = InteractionPotential(np.array(vhat)).tensor(b)
    k = b.wavenumbers
    np.testing.assert_allclose(v, v.transpose(1, 0, 3, 2))
    np.testing.assert_allclose(v, v.transpose(2, 3, 0, 1).conj())
    mask = (k[:, None, None, None] + k[None, :, None, None]
            != k[None, None, :, None] + k[None, None, None, :])
    assert np.all(v[mask] == 0)


def test_grid_tensor_samples_profile():
    b = build_basis(GRID, 3, 3.0)
    pot = InteractionPotential(strength=3.0, width=1.0)
    v = pot.tensor(b)
    assert v[0, 2, 0, 2] == pytest.approx(3.0 * np.exp(-2.0))
    assert v[1, 1, 1, 1] == pytest.approx(3.0)
    assert v[0, 1, 1, 0] == 0


def test_real_space_torus_matches_trigonometric_sum():
    b = build_basis(TORUS, 3, 1.0)
    pot = InteractionPotential(np.array([1.0, 0.5, 0.5]))
    x = np.array([0.0, 0.25])
    np.testing.assert_allclose(pot.real_space(b, x).real, 1 + np.cos(2 * np.pi * x), atol=1e-12)


def test_trap_potential():
    b = build_basis(GRID, 5, 5.0)
    trap = TrapPotential.harmonic(b, 2.0)
    np.testing.assert_allclose(trap.values, 2 * b.points**2)
    assert trap.is_confining(b)
    with pytest.raises(ValueError):
        TrapPotential(np.array([-1.0, 0.0]))
    with pytest.raises(ValueError):
        TrapPotential.harmonic(build_basis(TORUS, 3, 1.0))


def test_scaling_parameters():
    s = ScalingParameters(11, 2)
    assert s.coupling == pytest.approx(0.1)
    with pytest.raises(ValueError):
        ScalingParameters(1)
    with pytest.raises(ValueError):
        ScalingParameters(10, -1)
    with pytest.raises(ValueError):
        s.check_cutoff(12)


@pytest.mark.parametrize("ell", [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(3, 2)])
def test_taylor_coefficients_match_series(ell):
    # coefficient of x^j in (1 - x)^(1/2 - ell)
    series = mpmath.taylor(lambda x: (1 - x) ** (mpmath.mpf(1) / 2 - mpmath.mpf(ell.numerator) / ell.denominator),
                           0, 12)
    for j in range(13):
        assert abs(float(taylor_c(ell, j)) - float(series[j])) <= 1e-12
        assert abs(float(taylor_c(ell, j)) - (-1) ** j * float(mpmath.binomial(0.5 - float(ell), j))) <= 1e-12


def test_coefficient_table_entries():
    t = coefficient_tables(6)
    assert t.d[1][1] == -1
    assert t.d[1][0] == Fraction(-1, 2)
    assert [t.ctilde[l] for l in range(4)] == [1, -1, 1, -1]
    assert t.ctilde2[1] == (-1, Fraction(-1, 2))
    with pytest.raises(ValueError):
        coefficient_tables(4, ell_max=1)


def test_pair_coefficients_expand_square_root():
    # sqrt((1 - (n-1) lam)(1 - n lam)) = sum_j lam^j sum_nu d[j][nu] (n-1)^nu
    t = coefficient_tables(8)
    for n in (0, 1, 3):
        f = lambda lam: mpmath.sqrt((1 - (n - 1) * lam) * (1 - n * lam))
        series = mpmath.taylor(f, 0, 8)
        for j in range(9):
            ours = sum(float(t.d[j][nu]) * (n - 1) ** nu for nu in range(j + 1))
            assert abs(ours - float(series[j])) <= 1e-12
