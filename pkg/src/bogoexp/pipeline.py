"""End-to-end runs: static and dynamic expansions compared with the exact reference.

These functions glue the modules together for the CLI and the acceptance
suite.  Residuals follow one convention throughout: the exact state is
multiplied by the phase that makes its overlap with the leading-order
approximation real and positive before any norm is taken.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bogoliubov import build_k_operators, diagonalize_bogoliubov
from .dynamics import FrameOperators, integrate_hierarchy, dynamic_density
from .fock import assemble_from_complement, assemble_nbody, embed_complement, excitation_operators
from .hartree import minimize_hartree, one_body_matrix, solve_hartree_dynamics
from .oracle import (build_nbody_hamiltonian, exact_eigenpairs, exact_propagate, fit_convergence_rate,
                     reduced_density, SymmetricSector, trace_norm)
from .static import static_expansion


def align_phase(psi, reference):
    ov = np.vdot(psi, reference)
    if abs(ov) == 0:
        return psi
    return psi * (ov / abs(ov))


@dataclass
class StaticModel:
    """Hartree solution, K-operators, Bogoliubov map and static expansion of one fixture."""

    basis: object
    potential: object
    trap: object
    n_max: int
    order: int
    level: int = 0

    def __post_init__(self):
        self.hartree = minimize_hartree(self.basis, self.potential, self.trap)
        self.kernels = build_k_operators(self.hartree)
        self.bmap = diagonalize_bogoliubov(self.hartree, self.kernels)
        self.sq = excitation_operators(self.kernels, self.n_max)
        self.expansion = static_expansion(self.sq, self.order, level=self.level)

    @property
    def phi(self):
        return self.hartree.phi

    def energies(self):
        return self.expansion.energies(self.order)

    def chis(self, upto=None):
        return self.expansion.chis(self.order if upto is None else upto)

    def densities(self, upto=None):
        upto = self.order if upto is None else upto
        return self.expansion.densities(self.phi, self.kernels.B, upto)


def model_from_fixture(fx, order, n_max=None, level=0):
    return StaticModel(fx.basis, fx.potential, fx.trap, n_max or fx.n_max, order, level)


@dataclass
class SweepPoint:
    N: int
    coupling: float
    exact_energy: float
    hartree_energy: float
    energy_residuals: list
    wave_residuals: list
    density_residuals: list
    seconds: float


@dataclass
class SweepResult:
    points: list
    energies: list
    fits: dict = field(default_factory=dict)

    def residual_pairs(self, key, a):
        return [(p.coupling, getattr(p, key)[a]) for p in self.points]

    def fit(self, key, a):
        name = f"{key}[{a}]"
        if name not in self.fits:
            self.fits[name] = fit_convergence_rate(self.residual_pairs(key, a))
        return self.fits[name]


def static_sweep(model, particle_numbers, wave_orders=None, density_orders=None):
    """Exact eigenstates for each ``N`` compared with the truncated expansions."""
    a = model.order
    wave_orders = range(a + 1) if wave_orders is None else wave_orders
    density_orders = range(min(a, 2) + 1) if density_orders is None else density_orders
    energies = model.energies()
    chis = model.chis()
    gammas = model.densities(max(density_orders, default=0))
    one_body, tensor = model.hartree.one_body, model.hartree.tensor
    M = len(model.phi)
    points = []
    for N in particle_numbers:
        t0 = time.perf_counter()
        lam = 1.0 / (N - 1)
        H = build_nbody_hamiltonian(N, one_body, tensor)
        ref = SymmetricSector(N, M).condensate_vector(model.phi)
        res = exact_eigenpairs(H, model.level + 1, ref)
        psi = res.vectors[:, model.level]
        e_exact = float(res.energies[model.level])
        e_res = [abs(e_exact - N * model.hartree.energy - sum(lam**l * energies[l] for l in range(k + 1)))
                 for k in range(a + 1)]
        psis = [assemble_from_complement(model.phi, model.kernels.B, model.sq.fock, c, N, clip=True)
                for c in chis]
        psi = align_phase(psi, psis[0])
        w_res = [float(np.linalg.norm(psi - sum(lam ** (l / 2) * psis[l] for l in range(k + 1))))
                 for k in wave_orders]
        g = reduced_density(psi, M, N)
        d_res = [trace_norm(g - sum(lam**l * gammas[l] for l in range(k + 1))) for k in density_orders]
        points.append(SweepPoint(N, lam, e_exact, model.hartree.energy, e_res, w_res, d_res,
                                 time.perf_counter() - t0))
    return SweepResult(points, energies)


@dataclass
class DynamicModel:
    """Trap ground state released into free evolution, with its Bogoliubov hierarchy."""

    fixture: object
    order: int
    t_max: float = 1.0
    dt: float | None = None
    n_max: int | None = None

    def __post_init__(self):
        fx = self.fixture
        self.dt = self.dt or fx.dt
        self.n_max = self.n_max or fx.n_max
        self.static = model_from_fixture(fx, self.order, self.n_max)
        self.trajectory = solve_hartree_dynamics(self.static.phi, fx.basis, fx.potential, self.t_max, self.dt)
        self.frame = FrameOperators(self.trajectory, self.n_max)
        k = self.static.kernels
        self.initial = [embed_complement(k.B, self.static.sq.fock, c, self.frame.fock)
                        for c in self.static.chis(self.order)]
        self.hierarchy = integrate_hierarchy(self.frame, self.initial, self.t_max)

    @property
    def final_phi(self):
        return self.trajectory.phis[-1]

    def free_hamiltonian(self, N):
        return build_nbody_hamiltonian(N, one_body_matrix(self.fixture.basis, None),
                                       self.static.hartree.tensor)


def dynamic_sweep(model, particle_numbers, density_orders=(0, 1)):
    """Exact propagation of the trap ground state compared with the hierarchy at ``t_max``."""
    h = model.hierarchy
    i = len(h.times) - 1
    phi = model.final_phi
    chis = h.chis[i]
    gammas = [dynamic_density(h, i, l, phi) for l in range(max(density_orders) + 1)]
    one_body, tensor = model.static.hartree.one_body, model.static.hartree.tensor
    M = len(phi)
    points = []
    for N in particle_numbers:
        t0 = time.perf_counter()
        lam = 1.0 / (N - 1)
        ref = SymmetricSector(N, M).condensate_vector(model.static.phi)
        ground = exact_eigenpairs(build_nbody_hamiltonian(N, one_body, tensor), 1, ref)
        H_free = model.free_hamiltonian(N)
        psi = exact_propagate(ground.ground, H_free, [model.t_max])[-1]
        psis = [assemble_nbody(phi, c, model.frame.fock, N, clip=True) for c in chis]
        psi = align_phase(psi, psis[0])
        w_res = [float(np.linalg.norm(psi - sum(lam ** (l / 2) * psis[l] for l in range(k + 1))))
                 for k in range(model.order + 1)]
        g = reduced_density(psi, M, N)
        d_res = [trace_norm(g - sum(lam**l * gammas[l] for l in range(k + 1))) for k in density_orders]
        points.append(SweepPoint(N, lam, float(np.real(np.vdot(psi, H_free @ psi))),
                                 model.static.hartree.energy, [], w_res, d_res, time.perf_counter() - t0))
    return SweepResult(points, [])
