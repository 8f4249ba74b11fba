import numpy as np
import pytest

from bogoexp.core import NumericalFailure
from bogoexp.fixtures import get_fixture
from bogoexp.hartree import (hartree_energy, mean_field, minimize_hartree, one_body_matrix,
                             solve_hartree_dynamics, trajectory_energy)


def _solve(name, **kw):
    fx = get_fixture(name)
    return fx, minimize_hartree(fx.basis, fx.potential, fx.trap, **kw)


def test_free_torus_condenses_in_zero_momentum():
    _, sol = _solve("FREE3")
    np.testing.assert_allclose(sol.phi, [1, 0, 0])
    assert sol.energy == 0 and sol.chemical_potential == 0


def test_torus_minimizer_is_constant_mode():
    # constant condensate: e_H = vhat_0 / (2L), mu_H = vhat_0 / L
    _, sol = _solve("T3")
    np.testing.assert_allclose(sol.phi, [1, 0, 0], atol=1e-14)
    assert sol.energy == pytest.approx(0.5, abs=1e-14)
    assert sol.chemical_potential == pytest.approx(1.0, abs=1e-14)


def test_trapped_minimizer_reference_values():
    _, sol = _solve("G3")
    assert sol.energy == pytest.approx(2.1193888520271265, abs=1e-10)
    assert sol.chemical_potential == pytest.approx(3.1973660767615546, abs=1e-10)
    np.testing.assert_allclose(sol.phi.real, [0.47325362, 0.74300877, 0.47325362], atol=1e-8)


@pytest.mark.parametrize("name", ["G3", "G64"])
def test_minimizer_invariants(name):
    fx, sol = _solve(name)
    assert np.linalg.norm(sol.phi) == pytest.approx(1, abs=1e-13)
    assert np.linalg.norm(sol.h @ sol.phi) < 1e-9
    np.testing.assert_allclose(sol.p + sol.q, np.eye(len(sol.phi)), atol=1e-15)
    assert np.all(sol.phi.real > 0) and np.max(np.abs(sol.phi.imag)) < 1e-14
    # reflection symmetry of a symmetric trap
    np.testing.assert_allclose(sol.phi, sol.phi[::-1], atol=1e-9)


def test_minimizer_independent_of_descent_step():
    _, a = _solve("G64", step=0.5)
    _, b = _solve("G64", step=0.25)
    assert np.max(np.abs(a.phi - b.phi)) < 1e-8


def test_minimizer_lowers_energy_against_perturbations(rng):
    fx, sol = _solve("G3")
    for _ in range(20):
        trial = sol.phi + 0.05 * rng.normal(size=3)
        trial = trial / np.linalg.norm(trial)
        assert hartree_energy(sol.one_body, sol.tensor, trial) >= sol.energy - 1e-12


def test_negative_type_warns():
    from bogoexp.core import InteractionPotential, build_basis

    b = build_basis("torus", 3, 1.0)
    with pytest.warns(UserWarning):
        minimize_hartree(b, InteractionPotential(np.array([0.0, -0.1, -0.1]), positive_type=False))


def test_trap_retained_is_stationary_up_to_phase():
    fx, sol = _solve("G3")
    traj = solve_hartree_dynamics(sol.phi, fx.basis, fx.potential, 1.0, 0.005, trap=fx.trap)
    for phi in traj.phis[::20]:
        np.testing.assert_allclose(np.outer(phi, phi.conj()), sol.p, atol=1e-10)
    # the phase rotates with frequency mu_H - mu(t)
    mu_dyn = 0.5 * np.real(sol.phi.conj() @ mean_field(sol.tensor, sol.phi) @ sol.phi)
    expected = np.exp(-1j * (sol.chemical_potential - mu_dyn)) * sol.phi
    np.testing.assert_allclose(traj.phis[-1], expected, atol=1e-8)


def test_released_trajectory_conserves_norm_and_energy():
    fx, sol = _solve("G3")
    traj = solve_hartree_dynamics(sol.phi, fx.basis, fx.potential, 1.0, 0.005)
    assert traj.norm_drift < 1e-10
    e = [trajectory_energy(traj, n) for n in range(0, len(traj.times), 20)]
    assert max(e) - min(e) < 1e-9
    assert np.allclose(traj.one_body, one_body_matrix(fx.basis))
    # the condensate actually moves once the trap is released
    assert np.linalg.norm(np.abs(traj.phis[-1]) - np.abs(sol.phi)) > 1e-2


def test_fourth_order_self_convergence():
    fx, sol = _solve("G3")
    ends = [solve_hartree_dynamics(sol.phi, fx.basis, fx.potential, 1.0, dt, tol=1e-6).phis[-1]
            for dt in (0.04, 0.02, 0.01)]
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert 13 < ratio < 19


def test_dynamics_input_validation():
    fx, sol = _solve("G3")
    with pytest.raises(ValueError):
        solve_hartree_dynamics(2 * sol.phi, fx.basis, fx.potential, 1.0, 0.01)
    with pytest.raises(ValueError):
        solve_hartree_dynamics(sol.phi, fx.basis, fx.potential, 1.0, 0.0)
    with pytest.raises(ValueError):
        solve_hartree_dynamics(sol.phi, fx.basis, fx.potential, 1.0, 0.3)


def test_norm_drift_aborts():
    fx, sol = _solve("G3")
    with pytest.raises(NumericalFailure) as err:
        solve_hartree_dynamics(sol.phi, fx.basis, fx.potential, 1.0, 0.25, tol=1e-14)
    assert err.value.stage == "hartree-dynamics"


def test_trajectory_grid_lookup():
    fx, sol = _solve("G3")
    traj = solve_hartree_dynamics(sol.phi, fx.basis, fx.potential, 0.1, 0.01)
    assert traj.index(0.05) == 5
    with pytest.raises(ValueError):
        traj.index(0.055)
    np.testing.assert_allclose(traj.h(0) @ traj.phis[0] + 0j, traj.h(0) @ sol.phi)
