"""Hartree condensate: static minimizer and time-dependent propagation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, expm

from .core import GRID, NumericalFailure


def mean_field(tensor, phi):
    """Matrix of the multiplication operator ``v * |phi|^2``."""
    return np.einsum("pqrs,q,s->pr", tensor, phi.conj(), phi)


def exchange(tensor, phi):
    """Kernel ``v(x-y) phi(x) conj(phi(y))`` as a matrix."""
    return np.einsum("pqsr,s,q->pr", tensor, phi, phi.conj())


def pair_function(tensor, phi):
    """Two-body function ``v(x-y) phi(x) phi(y)`` as an ``M x M`` array."""
    return np.einsum("pqrs,r,s->pq", tensor, phi, phi)


def hartree_energy(one_body, tensor, phi):
    mf = mean_field(tensor, phi)
    return float(np.real(phi.conj() @ one_body @ phi + 0.5 * phi.conj() @ mf @ phi))


def fix_phase(phi):
    """Rotate so that the largest-modulus entry is real and positive."""
    i = np.argmax(np.abs(phi))
    return phi * (abs(phi[i]) / phi[i])


@dataclass(frozen=True)
class HartreeSolution:
    phi: np.ndarray
    energy: float
    chemical_potential: float
    h: np.ndarray
    one_body: np.ndarray
    tensor: np.ndarray
    residual: float
    unique: bool = True

    @property
    def p(self):
        return np.outer(self.phi, self.phi.conj())

    @property
    def q(self):
        return np.eye(len(self.phi)) - self.p

    @property
    def mode_count(self):
        return len(self.phi)


def solution_from_phi(phi, one_body, tensor, unique=True):
    """Assemble the static Hartree data for a given normalized condensate."""
    mf = mean_field(tensor, phi)
    mu = float(np.real(phi.conj() @ (one_body + mf) @ phi))
    h = one_body + mf - mu * np.eye(len(phi))
    h = 0.5 * (h + h.conj().T)
    res = float(np.linalg.norm(h @ phi))
    return HartreeSolution(phi, hartree_energy(one_body, tensor, phi), mu, h,
                           one_body, tensor, res, unique)


def one_body_matrix(basis, trap=None):
    t = basis.kinetic()
    if trap is not None:
        t = t + trap.matrix(basis)
    return t


def minimize_hartree(basis, v, trap=None, tol=1e-11, step=0.5, max_iter=20000):
    """Imaginary-time descent ``phi <- exp(-step H[phi]) phi / norm``.

    Starts from the ground state of the one-body operator and stops once the
    residual ``||(H[phi] - mu) phi||`` drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    unique = bool(v.positive_type)
    if not unique:
        warnings.warn("interaction is not of positive type: the Hartree minimizer may not be unique")
    one_body = one_body_matrix(basis, trap)
    tensor = v.tensor(basis)
    _, vecs = eigh(one_body)
    phi = fix_phase(vecs[:, 0].astype(complex))
    res = np.inf
    for _ in range(max_iter):
        hmf = one_body + mean_field(tensor, phi)
        mu = np.real(phi.conj() @ hmf @ phi)
        res = np.linalg.norm(hmf @ phi - mu * phi)
        if res <= tol:
            break
        phi = expm(-step * hmf) @ phi
        phi /= np.linalg.norm(phi)
    else:
        raise NumericalFailure("hartree", f"imaginary-time descent did not converge, residual {res:.3e}")
    phi = fix_phase(phi)
    if basis.kind == GRID and np.min(phi.real) <= 0:
        warnings.warn("Hartree minimizer is not strictly positive on the grid")
    return solution_from_phi(phi, one_body, tensor, unique)


@dataclass(frozen=True)
class HartreeTrajectory:
    times: np.ndarray
    phis: np.ndarray
    phases: np.ndarray
    one_body: np.ndarray
    tensor: np.ndarray
    norm_drift: float

    @property
    def dt(self):
        return self.times[1] - self.times[0]

    def h(self, n):
        """Mean-field operator ``h(t_n)`` including the ``-mu(t_n)`` shift."""
        phi = self.phis[n]
        mf = mean_field(self.tensor, phi)
        return self.one_body + mf - self.phases[n] * np.eye(len(phi))

    def index(self, t):
        n = int(round(t / self.dt))
        if n < 0 or n >= len(self.times) or abs(self.times[n] - t) > 1e-9 * max(1, abs(t)):
            raise ValueError(f"time {t} is not on the trajectory grid")
        return n


def _dynamic_phase(tensor, phi):
    return 0.5 * float(np.real(phi.conj() @ mean_field(tensor, phi) @ phi))


def hartree_rhs(one_body, tensor, phi):
    mf = mean_field(tensor, phi)
    return -1j * (one_body @ phi + mf @ phi - _dynamic_phase(tensor, phi) * phi)


def solve_hartree_dynamics(phi0, basis, v, t_max, dt, trap=None, tol=1e-10):
    """Classical RK4 for ``i d/dt phi = (T + V + v*|phi|^2 - mu(t)) phi``.

    No renormalization is applied; a norm drift beyond ``10 tol`` aborts.
    """
    phi = np.asarray(phi0, dtype=complex)
    if abs(np.linalg.norm(phi) - 1) > 1e-12:
        raise ValueError("initial condensate must be normalized")
    if dt <= 0:
        raise ValueError("time step must be positive")
    steps = int(round(t_max / dt))
    if abs(steps * dt - t_max) > 1e-12 * max(1.0, t_max):
        raise ValueError("t_max must be an integer multiple of dt")
    one_body = one_body_matrix(basis, trap)
    tensor = v.tensor(basis)
    f = lambda y: hartree_rhs(one_body, tensor, y)
    phis = [phi]
    drift = 0.0
    for _ in range(steps):
        k1 = f(phi)
        k2 = f(phi + 0.5 * dt * k1)
        k3 = f(phi + 0.5 * dt * k2)
        k4 = f(phi + dt * k3)
        phi = phi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = max(drift, abs(np.linalg.norm(phi) - 1))
        if drift > 10 * tol:
            raise NumericalFailure("hartree-dynamics", f"norm drift {drift:.3e} exceeds 10x tolerance")
        phis.append(phi)
    phis = np.array(phis)
    phases = np.array([_dynamic_phase(tensor, p) for p in phis])
    return HartreeTrajectory(np.arange(steps + 1) * dt, phis, phases, one_body, tensor, drift)


def trajectory_energy(traj, n):
    return hartree_energy(traj.one_body, traj.tensor, traj.phis[n])
