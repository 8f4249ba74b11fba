"""Time-dependent Bogoliubov theory and the hierarchy for the corrections.

All Fock objects live on the fixed mode basis of time zero.  The condensate
moves, and orthogonality to ``phi(t)`` is carried by the projections inside
the K-operators; the quadratic part ``dGamma(h(t))`` is not projected, so it
transports the complement of ``phi(t)`` along with the condensate.

Time stepping is classical RK4 with step ``2 dt`` where ``dt`` is the Hartree
trajectory spacing, so every stage of a step lands on a stored grid point.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .bogoliubov import (BogoliubovMap, QuasiFreeState, k_operators, symplectic_defect)
from .core import NumericalFailure, coefficient_tables
from .fock import FockBasis, KernelStacks, second_quantize

RK_TOL = 1e-9


class FrameOperators:
    """Second-quantized K-operators of ``phi(t_n)`` on the fixed-frame Fock space."""

    def __init__(self, traj, n_max, tables=None, cache=6):
        self.traj = traj
        self.M = traj.phis.shape[1]
        self.fock = FockBasis(self.M, n_max)
        self.stacks = KernelStacks(self.fock)
        self.tables = tables or coefficient_tables(16)
        self._cache = OrderedDict()
        self._size = cache
        self._kcache = OrderedDict()

    def kernels(self, n):
        if n in self._kcache:
            return self._kcache[n]
        tr = self.traj
        K = k_operators(tr.phis[n], tr.h(n), tr.tensor, B=np.eye(self.M))
        self._kcache[n] = K
        if len(self._kcache) > 4 * self._size:
            self._kcache.popitem(last=False)
        return K

    def at(self, n):
        if n in self._cache:
            self._cache.move_to_end(n)
            return self._cache[n]
        K = self.kernels(n)
        sq = second_quantize(self.fock, K.h, K.K1, K.K2, K.K3, K.K4, self.stacks)
        self._cache[n] = sq
        if len(self._cache) > self._size:
            self._cache.popitem(last=False)
        return sq

    def H(self, j, n):
        return self.at(n).H(j, self.tables)


def _steps(traj, t_max):
    n_end = traj.index(t_max)
    if n_end % 2:
        raise ValueError("t_max must be an even number of trajectory steps")
    return n_end // 2


def rk4_grid(rhs, y0, traj, t_max, monitor=None, t_start=0.0):
    """Integrate ``dy/dt = rhs(n, y)`` with stage values on the trajectory grid."""
    h = 2 * traj.dt
    n0 = traj.index(t_start)
    steps = _steps(traj, t_max) - n0 // 2
    if n0 % 2 or steps < 0:
        raise ValueError("t_start must be an even grid point before t_max")
    y = y0
    out = [y0]
    for s in range(steps):
        n = n0 + 2 * s
        k1 = rhs(n, y)
        k2 = rhs(n + 1, y + 0.5 * h * k1)
        k3 = rhs(n + 1, y + 0.5 * h * k2)
        k4 = rhs(n + 2, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if monitor is not None:
            monitor(n + 2, y)
        out.append(y)
    return t_start + np.arange(steps + 1) * h, out


# ---------------------------------------------------------------------------
# Bogoliubov propagator


def generator_blocks(frame, n):
    K = frame.kernels(n)
    A = K.h + K.K1
    return np.block([[A, -K.K2], [K.K2.conj(), -A.conj()]])


@dataclass(frozen=True)
class PropagatorBlocks:
    times: np.ndarray
    U: tuple
    V: tuple

    def at(self, i):
        return BogoliubovMap(self.U[i], self.V[i])

    @property
    def max_defect(self):
        return max(symplectic_defect(u, v) for u, v in zip(self.U, self.V))


def integrate_propagator(frame, t_max, defect_tol=1e-8, t_start=0.0):
    """``i d/dt V(t,s) = A(t) V(t,s)``, ``V(s,s) = 1``, for ``V = [[U, conj V],[V, conj U]]``."""
    M = frame.M
    gens = {}

    def rhs(n, y):
        if n not in gens:
            gens[n] = generator_blocks(frame, n)
        return -1j * gens[n] @ y

    def monitor(n, y):
        d = symplectic_defect(y[:M, :M], y[M:, :M])
        if d > defect_tol:
            raise NumericalFailure("propagator", f"symplectic defect {d:.2e} at t={frame.traj.times[n]:.4f}")

    times, ys = rk4_grid(rhs, np.eye(2 * M, dtype=complex), frame.traj, t_max, monitor, t_start)
    return PropagatorBlocks(times, tuple(y[:M, :M] for y in ys), tuple(y[M:, :M] for y in ys))


def two_point_route_a(state0, U, V):
    """Two-point functions at time ``t`` from the blocks ``U_{t,0}``, ``V_{t,0}``."""
    g0, a0 = state0.gamma, state0.alpha
    Vb = V.conj()
    Ud = U.conj().T
    Vbd = Vb.conj().T
    gamma = (Vb @ g0.T @ Vbd + U @ g0 @ Ud - Vb @ a0.conj().T @ Ud - U @ a0 @ Vbd + Vb @ Vbd)
    Vd = V.conj().T
    alpha = (U @ a0 @ U.T + Vb @ a0.conj().T @ Vd - U @ g0 @ Vd - Vb @ g0.T @ U.T - U @ Vd)
    return QuasiFreeState(gamma, alpha)


def _two_point_rhs(K, gamma, alpha):
    A = K.h + K.K1
    K2 = K.K2
    dg = A @ gamma - gamma @ A + K2 @ alpha.conj().T - alpha @ K2.conj().T
    da = A @ alpha + alpha @ A.T + K2 + K2 @ gamma.T + gamma @ K2
    return -1j * dg, -1j * da


def _beta_rhs(K, gamma, alpha, beta):
    M = len(beta)
    A = K.h + K.K1
    K3 = K.K3.reshape(M, M, M)
    src = (np.einsum("pqr,pq->r", K3.conj(), alpha)
           + np.einsum("zqr,rz->q", K3, gamma)
           + np.einsum("pzr,rz->p", K3, gamma))
    return -1j * (A @ beta + K.K2 @ beta.conj() + src)


@dataclass(frozen=True)
class TwoPointTrajectory:
    times: np.ndarray
    states: tuple
    beta: tuple


def propagate_two_point(frame, state0, t_max, beta0=None):
    """Route B: integrate the closed equations for ``(gamma, alpha)`` and ``beta_{0,1}``."""
    M = frame.M
    beta0 = np.zeros(M, dtype=complex) if beta0 is None else np.asarray(beta0, dtype=complex)

    def pack(g, a, b):
        return np.concatenate([g.ravel(), a.ravel(), b])

    def rhs(n, y):
        g = y[: M * M].reshape(M, M)
        a = y[M * M: 2 * M * M].reshape(M, M)
        b = y[2 * M * M:]
        K = frame.kernels(n)
        dg, da = _two_point_rhs(K, g, a)
        return pack(dg, da, _beta_rhs(K, g, a, b))

    times, ys = rk4_grid(rhs, pack(state0.gamma, state0.alpha, beta0), frame.traj, t_max)
    states = tuple(QuasiFreeState(y[: M * M].reshape(M, M), y[M * M: 2 * M * M].reshape(M, M)) for y in ys)
    return TwoPointTrajectory(times, states, tuple(y[2 * M * M:] for y in ys))


def route_agreement(blocks, state0, route_b):
    diffs = []
    for i in range(len(blocks.times)):
        a = two_point_route_a(state0, blocks.U[i], blocks.V[i])
        b = route_b.states[i]
        diffs.append(max(np.max(np.abs(a.gamma - b.gamma)), np.max(np.abs(a.alpha - b.alpha))))
    return float(max(diffs))


# ---------------------------------------------------------------------------
# hierarchy


@dataclass
class DysonHierarchy:
    frame: FrameOperators
    order: int
    times: np.ndarray
    chis: list  # chis[i][ell] at times[i]
    overflow: float

    def at(self, t):
        i = int(round(t / (self.times[1] - self.times[0])))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"time {t} not stored")
        return self.chis[i]

    def index(self, t):
        i = int(round(t / (self.times[1] - self.times[0])))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"time {t} not stored")
        return i


def integrate_hierarchy(frame, init, t_max, overflow_tol=1e-6):
    """``i d/dt chi_l = H_0 chi_l + sum_{n=1..l} H_n chi_{l-n}`` on the fixed frame."""
    a = len(init) - 1
    dim = frame.fock.dim
    y0 = np.array([np.asarray(c, dtype=complex) for c in init])
    if y0.shape != (a + 1, dim):
        raise ValueError("initial data do not match the fixed-frame Fock space")

    def rhs(n, y):
        out = np.empty_like(y)
        for ell in range(a + 1):
            acc = frame.H(0, n) @ y[ell]
            for j in range(1, ell + 1):
                acc = acc + frame.H(j, n) @ y[ell - j]
            out[ell] = -1j * acc
        return out

    worst = [0.0]

    def monitor(n, y):
        m = max(frame.fock.top_mass(c) for c in y)
        worst[0] = max(worst[0], m)
        if m > overflow_tol:
            raise NumericalFailure("hierarchy", f"mass {m:.2e} at the Fock cutoff; increase n_max")

    times, ys = rk4_grid(rhs, y0, frame.traj, t_max, monitor=monitor)
    return DysonHierarchy(frame, a, times, [list(y) for y in ys], worst[0])


def duhamel_first_order(frame, chi1_0, hierarchy):
    """``chi_1(t) = U(t,0) [chi_1(0) - i int_0^t U(t,0)^* ... ]`` at the final stored time.

    Uses ``U(t,s) = U(t,0) U(s,0)^*``: the Bogoliubov evolution is integrated
    as a dense unitary with the same grid RK4, and the time integral is a
    composite Simpson rule on the stored times (an even number of steps).
    """
    dim = frame.fock.dim
    steps = len(hierarchy.times) - 1
    if steps % 2:
        raise ValueError("Simpson quadrature needs an even number of stored steps")
    h = 2 * frame.traj.dt
    Uc = np.eye(dim, dtype=complex)
    integral = np.zeros(dim, dtype=complex)
    for i in range(steps + 1):
        if i > 0:
            n = 2 * (i - 1)
            f = lambda m, y: -1j * (frame.H(0, m) @ y)
            k1 = f(n, Uc)
            k2 = f(n + 1, Uc + 0.5 * h * k1)
            k3 = f(n + 1, Uc + 0.5 * h * k2)
            k4 = f(n + 2, Uc + h * k3)
            Uc = Uc + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        weight = 1 if i in (0, steps) else (4 if i % 2 else 2)
        src = frame.H(1, 2 * i) @ hierarchy.chis[i][0]
        integral += weight * (Uc.conj().T @ src)
    return Uc @ (chi1_0 - 1j * (h / 3) * integral)


# ---------------------------------------------------------------------------
# correlations and densities


def apply_string(fock, ops, x):
    """Apply ``a^{#1} ... a^{#n}`` (rightmost acts first) to ``x``."""
    for dagger, idx in reversed(list(ops)):
        x = (fock.creators[idx] if dagger else fock.annihilators[idx]) @ x
    return x


def mixed_correlation(hierarchy, i, ell, k, ops):
    fock = hierarchy.frame.fock
    for _, idx in ops:
        if not 0 <= idx < fock.m:
            raise IndexError(f"mode index {idx} out of range")
    chis = hierarchy.chis[i]
    return complex(np.vdot(chis[ell], apply_string(fock, ops, chis[k])))


def dynamic_density(hierarchy, i, ell, phi):
    """``gamma_{1,ell}(t_i)`` from mixed correlations of the hierarchy."""
    if ell == 0:
        return np.outer(phi, phi.conj())
    fock = hierarchy.frame.fock
    tab = hierarchy.frame.tables
    chis = hierarchy.chis[i]
    if 2 * ell - 1 > hierarchy.order:
        raise ValueError(f"gamma_1,{ell} needs the hierarchy through order {2 * ell - 1}")
    M = fock.m
    Nd = fock.number
    ann, cre = fock.annihilators, fock.creators
    out = np.zeros((M, M), dtype=complex)
    for m in range(1, ell + 1):
        for k in range(ell - m + 1):
            c = tab.ctilde2_float(ell - m, k)
            if c == 0:
                continue
            w = (Nd - 1) ** k
            for n in range(2 * m):
                left, right = chis[n], chis[2 * m - n - 1]
                g = np.array([np.vdot(left, cre[y] @ (w * right)) for y in range(M)])
                f = np.array([np.vdot(left, w * (ann[x] @ right)) for x in range(M)])
                out += c * (np.outer(phi, g) + np.outer(f, phi.conj()))
        c = tab.ctilde_float(ell - m)
        for n in range(2 * m - 1):
            left, right = chis[n], chis[2 * m - n - 2]
            G = np.array([[np.vdot(left, cre[y] @ (ann[x] @ right)) for y in range(M)] for x in range(M)])
            num = np.vdot(left, Nd * right)
            out += c * (G - np.outer(phi, phi.conj()) * num)
    return out


def beta_from_hierarchy(hierarchy, i):
    fock = hierarchy.frame.fock
    c0, c1 = hierarchy.chis[i][0], hierarchy.chis[i][1]
    return np.array([np.vdot(c0, a @ c1) + np.vdot(c1, a @ c0) for a in fock.annihilators])


def first_density_closed_form(phi, beta, state):
    g = state.gamma
    return (np.outer(phi, beta.conj()) + np.outer(beta, phi.conj()) + g
            - np.trace(g) * np.outer(phi, phi.conj()))


def fock_two_point(fock, x):
    ann, cre = fock.annihilators, fock.creators
    M = fock.m
    gamma = np.array([[np.vdot(x, cre[y] @ (ann[z] @ x)) for y in range(M)] for z in range(M)])
    alpha = np.array([[np.vdot(x, ann[z] @ (ann[y] @ x)) for y in range(M)] for z in range(M)])
    return QuasiFreeState(gamma, alpha)


# ---------------------------------------------------------------------------
# initial data


def bogoliubov_vacuum(fock, bmap):
    """Fock vector of ``U Omega`` for the map ``(U, V)`` (kernel of ``sum c^+ c``)."""
    m = fock.m
    U, V = bmap.U, bmap.V
    ann, cre = fock.annihilators, fock.creators
    cs = [sum(np.conj(U[y, x]) * ann[y] + np.conj(V[y, x]) * cre[y] for y in range(m)) for x in range(m)]
    Q = sum(c.conj().T @ c for c in cs).toarray()
    w, vecs = eigh(0.5 * (Q + Q.conj().T))
    v = vecs[:, 0].astype(complex)
    if abs(v[0]) > 1e-14:
        v *= abs(v[0]) / v[0]
    return v, float(w[0])


def transformed_creator(fock, bmap, f):
    """``U a^+(f) U^* = a^+(U f) + a(conj(V f))`` as a sparse matrix."""
    g = bmap.U @ f
    h = np.conj(bmap.V @ f)
    out = sum(g[i] * fock.creators[i] for i in range(fock.m))
    return out + sum(np.conj(h[i]) * fock.annihilators[i] for i in range(fock.m))


def quasi_particle_initial_data(fock, bmap, orbitals=(), corrections=()):
    """``chi_0(0) = U a^+(f_1)...a^+(f_nu) Omega`` plus normal-ordered corrections.

    ``corrections[l-1]`` is a list of ``(coefficient, creators, annihilators)``
    terms applied to ``chi_0(0)`` to build ``chi_l(0)``.
    """
    if len(orbitals):
        F = np.array(orbitals, dtype=complex)
        gram = F.conj() @ F.T
        if np.max(np.abs(gram - np.eye(len(orbitals)))) > 1e-10:
            raise ValueError("orbitals must be orthonormal")
    chi, _ = bogoliubov_vacuum(fock, bmap)
    for f in reversed(list(orbitals)):
        chi = transformed_creator(fock, bmap, np.asarray(f, dtype=complex)) @ chi
    out = [chi]
    for terms in corrections:
        acc = np.zeros_like(chi)
        for coeff, cre_idx, ann_idx in terms:
            acc = acc + coeff * (fock.monomial(list(cre_idx), list(ann_idx)) @ chi)
        out.append(acc)
    return out


def richardson_estimate(coarse, fine, order=4):
    """Error estimate of the fine solution from a step-halving pair."""
    return float(np.max(np.abs(np.asarray(coarse) - np.asarray(fine)))) / (2**order - 1)
