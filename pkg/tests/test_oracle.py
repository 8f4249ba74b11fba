import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from bogoexp.core import NumericalFailure
from bogoexp.fixtures import get_fixture
from bogoexp.oracle import (DENSE_LIMIT, SymmetricSector, build_nbody_hamiltonian, exact_eigenpairs,
                            exact_ground_state, exact_propagate, fit_convergence_rate, reduced_density,
                            reduced_density_occupation, trace_norm)


def onsite_tensor(m, g):
    t = np.zeros((m, m, m, m))
    for p in range(m):
        t[p, p, p, p] = g
    return t


def test_two_particles_two_modes_by_hand():
    g = 0.7
    H = build_nbody_hamiltonian(2, np.diag([0.0, 1.0]), onsite_tensor(2, g)).toarray()
    # occupations (0,2), (1,1), (2,0)
    np.testing.assert_allclose(H, np.diag([2 + g, 1, g]), atol=1e-14)


def test_hamiltonian_is_hermitian_for_fixture():
    fx = get_fixture("G3")
    from bogoexp.hartree import one_body_matrix

    H = build_nbody_hamiltonian(6, one_body_matrix(fx.basis, fx.trap), fx.potential.tensor(fx.basis))
    assert abs(H - H.conj().T).max() < 1e-13
    assert H.shape == (SymmetricSector(6, 3).dim,) * 2


def test_dimension_cap():
    with pytest.raises(NumericalFailure):
        build_nbody_hamiltonian(40, np.eye(3), onsite_tensor(3, 1.0), cap=100)


def test_condensate_vector_is_normalized_product_state(rng):
    phi = rng.normal(size=3) + 1j * rng.normal(size=3)
    phi /= np.linalg.norm(phi)
    psi = SymmetricSector(7, 3).condensate_vector(phi)
    assert np.linalg.norm(psi) == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(reduced_density(psi, 3, 7), np.outer(phi, phi.conj()), atol=1e-12)


def test_two_density_implementations_agree(rng):
    sec = SymmetricSector(5, 3)
    psi = rng.normal(size=sec.dim) + 1j * rng.normal(size=sec.dim)
    psi /= np.linalg.norm(psi)
    a = reduced_density(psi, 3, 5)
    np.testing.assert_allclose(a, reduced_density_occupation(psi, 3, 5), atol=1e-13)
    assert np.trace(a) == pytest.approx(1)
    assert trace_norm(a) == pytest.approx(1)


def test_sparse_eigensolver_matches_dense():
    N = 62
    assert SymmetricSector(N, 3).dim > DENSE_LIMIT
    T = np.array([[1.0, -0.3, 0], [-0.3, 0.5, -0.3], [0, -0.3, 1.0]])
    H = build_nbody_hamiltonian(N, T, onsite_tensor(3, 1.0))
    sparse = exact_eigenpairs(H, 2)
    dense = np.linalg.eigvalsh(H.toarray())[:2]
    np.testing.assert_allclose(sparse.energies, dense, atol=1e-9)
    assert sparse.residual < 1e-8


def test_ground_state_overlap_tends_to_one_without_interaction():
    T = np.array([[0.0, -1.0], [-1.0, 0.0]])
    phi = np.array([1, 1]) / np.sqrt(2)
    overlaps = []
    for g in (0.5, 0.05, 0.0):
        res = exact_ground_state(build_nbody_hamiltonian(8, T, onsite_tensor(2, g)), phi, 8)
        overlaps.append(abs(np.vdot(SymmetricSector(8, 2).condensate_vector(phi), res.ground)))
    assert overlaps[0] < overlaps[1] < overlaps[2]
    assert overlaps[2] == pytest.approx(1, abs=1e-12)
    # phase fixed: overlap with the reference is real and positive
    assert np.vdot(SymmetricSector(8, 2).condensate_vector(phi), res.ground).real > 0


def test_propagation_matches_matrix_exponential(rng):
    H = build_nbody_hamiltonian(4, np.diag([0.0, 1.0, 2.0]), onsite_tensor(3, 0.8))
    psi0 = rng.normal(size=H.shape[0]) + 0j
    psi0 /= np.linalg.norm(psi0)
    times = np.linspace(0, 1, 5)
    states = exact_propagate(psi0, H, times)
    for t, psi in zip(times, states):
        np.testing.assert_allclose(psi, expm(-1j * t * H.toarray()) @ psi0, atol=1e-10)
    np.testing.assert_allclose(exact_propagate(psi0, H, [0.7])[0], expm(-0.7j * H.toarray()) @ psi0, atol=1e-10)
    with pytest.raises(ValueError):
        exact_propagate(psi0, H, [0.0, 0.1, 0.5])


def test_fit_recovers_synthetic_power_law():
    pts = [(lam, 3 * lam**1.5) for lam in (0.1, 0.05, 0.025, 0.0125)]
    fit = fit_convergence_rate(pts)
    assert fit.slope == pytest.approx(1.5)
    assert fit.intercept == pytest.approx(np.log(3))
    assert fit.r2 == pytest.approx(1)
    assert fit.dropped == ()


def test_fit_drops_zero_residuals_with_warning():
    pts = [(0.1, 0.0), (0.05, 0.05**2), (0.025, 0.025**2), (0.0125, 0.0125**2)]
    with pytest.warns(UserWarning):
        fit = fit_convergence_rate(pts)
    assert fit.slope == pytest.approx(2)
    assert (0.1, 0.0) in fit.dropped


def test_fit_excludes_preasymptotic_point():
    pts = [(0.2, 1e-6), (0.1, 0.1**2), (0.05, 0.05**2), (0.025, 0.025**2)]
    fit = fit_convergence_rate(pts)
    assert fit.slope == pytest.approx(2)
    assert fit.dropped == ((0.2, 1e-6),)
    assert len(fit.used) == 3


def test_fit_needs_two_points():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            fit_convergence_rate([(0.1, 0.0), (0.05, 1e-3)])
