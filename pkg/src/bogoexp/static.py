"""Static expansion: resolvents, projector coefficients, states, energies, densities.

Everything acts on the truncated Fock space over the condensate complement.
The reduced resolvents are applied in the eigenbasis of the truncated
quadratic Hamiltonian, where ``E_0 - H_0`` is diagonal, so no iterative solver
enters.  Projector coefficients are kept as sums of rank-one terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.linalg import eigh

from .core import NumericalFailure, coefficient_tables


def compositions(total, parts, minimum=1):
    """Tuples of ``parts`` integers ``>= minimum`` summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(minimum, total - minimum * (parts - 1) + 1):
        for rest in compositions(total - first, parts - 1, minimum):
            yield (first,) + rest


class ResolventEngine:
    """Reduced resolvents ``O_k`` of the truncated quadratic Hamiltonian around level ``n``."""

    def __init__(self, sq, tables=None, level=0, degeneracy_tol=1e-8):
        self.sq = sq
        self.fock = sq.fock
        self.tables = tables or coefficient_tables(16)
        H0 = sq.H(0).toarray()
        self.energies, self.frame = eigh(0.5 * (H0 + H0.conj().T))
        self.level = level
        e = self.energies
        gaps = [abs(e[level] - e[i]) for i in (level - 1, level + 1) if 0 <= i < len(e)]
        if min(gaps) < degeneracy_tol * max(1.0, abs(e[level])):
            raise NumericalFailure(
                "static", f"level {level} of the quadratic Hamiltonian is degenerate; "
                "degenerate levels are not supported")
        chi = self.frame[:, level].copy()
        ref = chi[0] if (level == 0 and abs(chi[0]) > 1e-14) else chi[np.argmax(np.abs(chi))]
        self.chi0 = chi * (abs(ref) / ref)
        self.frame[:, level] = self.chi0
        self.E0 = float(e[level])
        denom = self.E0 - e
        denom[level] = np.inf
        self._inv = 1.0 / denom
        self._words = {}

    @property
    def gap(self):
        return float(np.min(np.abs(self.E0 - np.delete(self.energies, self.level))))

    def H(self, j):
        return self.sq.H(j, self.tables)

    def O(self, k, x):
        """``O_0 = -P_0``; ``O_k = Q_0 (E_0 - H_0)^-k`` for ``k >= 1``."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        if k == 0:
            return -np.vdot(self.chi0, x) * self.chi0
        y = self.frame.conj().T @ x
        return self.frame @ (y * self._inv**k)

    def P0(self, x):
        return np.vdot(self.chi0, x) * self.chi0

    def apply_word(self, word):
        """Apply a word of ``('H', j)`` / ``('O', k)`` letters (rightmost first) to ``Chi_0``."""
        word = tuple(word)
        if word in self._words:
            return self._words[word]
        if not word:
            return self.chi0
        tail = self.apply_word(word[1:])
        kind, idx = word[0]
        if not np.any(tail):
            out = tail
        elif kind == "H":
            out = self.H(idx) @ tail
        else:
            out = self.O(idx, tail)
        self._words[word] = out
        return out


@dataclass
class LowRank:
    """Operator ``sum_r |u_r><z_r|`` stored as column stacks."""

    U: np.ndarray
    Z: np.ndarray

    def apply(self, x):
        return self.U @ (self.Z.conj().T @ x)

    def trace_with(self, A):
        """``Tr(A P)`` for a sparse or dense operator ``A``."""
        if self.U.shape[1] == 0:
            return 0j
        return complex(np.sum(self.Z.conj() * (A @ self.U)))

    def dense(self):
        return self.U @ self.Z.conj().T

    @property
    def rank(self):
        return self.U.shape[1]


def projector_coefficient(engine, ell):
    """``P_ell`` as a low-rank sum.

    Each composition word ``O_k1 H_j1 ... H_jv O_k(v+1)`` contains at least one
    ``O_0 = -P_0``; splitting at the first one gives ``-|X Chi_0><Y^* Chi_0|``.
    """
    dim = engine.fock.dim
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    if ell == 0:
        c = engine.chi0[:, None]
        return LowRank(c.copy(), c.copy())
    us, zs = [], []
    for nu in range(1, ell + 1):
        for js in compositions(ell, nu):
            for ks in compositions(nu, nu + 1, minimum=0):
                cut = ks.index(0)
                left = []
                for i in range(cut):
                    left += [("O", ks[i]), ("H", js[i])]
                right = []
                for i in range(nu - 1, cut - 1, -1):
                    right += [("O", ks[i + 1]), ("H", js[i])]
                u = engine.apply_word(left)
                z = engine.apply_word(right)
                if np.any(u) and np.any(z):
                    us.append(u)
                    zs.append(z)
    if not us:
        return LowRank(np.zeros((dim, 0), complex), np.zeros((dim, 0), complex))
    return LowRank(np.array(us).T, np.array(zs).T)


@dataclass
class StaticExpansion:
    """Projector, state, energy and density coefficients up to a given order."""

    engine: ResolventEngine
    order: int
    projectors: dict = field(default_factory=dict)

    def P(self, ell):
        if ell not in self.projectors:
            self.projectors[ell] = projector_coefficient(self.engine, ell)
        return self.projectors[ell]

    # -- states -------------------------------------------------------------

    def chi_tilde(self, upto):
        out = [self.engine.chi0]
        for ell in range(1, upto + 1):
            acc = np.zeros_like(self.engine.chi0)
            for j in range(1, ell + 1):
                acc = acc + self.P(j).apply(out[ell - j])
            out.append(acc)
        return out

    def normalization(self, upto, chit=None):
        chit = chit if chit is not None else self.chi_tilde(upto)
        alpha = [1.0]
        for ell in range(1, upto + 1):
            if ell % 2:
                alpha.append(0.0)
                continue
            s = 0j
            for j in product(range(ell + 1), repeat=3):
                j1, j2, j3 = j
                j4 = ell - j1 - j2 - j3
                if j4 < 0 or j1 >= ell or j2 >= ell:
                    continue
                s += alpha[j1] * alpha[j2] * np.vdot(chit[j3], chit[j4])
            alpha.append(-0.5 * s)
        return alpha

    def chis(self, upto=None):
        upto = self.order if upto is None else upto
        chit = self.chi_tilde(upto)
        alpha = self.normalization(upto, chit)
        out = []
        for ell in range(upto + 1):
            out.append(sum(alpha[j] * chit[ell - j] for j in range(ell + 1)))
        return out

    # -- energies -----------------------------------------------------------

    def energy(self, ell):
        """Weighted trace formula for ``E_ell`` (``E_0`` for ``ell = 0``)."""
        if ell == 0:
            return self.engine.E0
        eng = self.engine
        total = 0j
        for nu in range(1, 2 * ell + 1):
            for js in compositions(2 * ell, nu):
                for ms in compositions(nu - 1, nu - 1, minimum=0):
                    kappa = 1 + sum(1 for m in ms if m == 0)
                    word = [("H", js[0])]
                    for m, j in zip(ms, js[1:]):
                        word += [("O", m), ("H", j)]
                    # <Chi_0, H_j1 O_m1 ... H_jv Chi_0>
                    total += np.vdot(eng.chi0, eng.apply_word(word)) / kappa
        return float(np.real(total))

    def energies(self, upto=None):
        upto = self.order if upto is None else upto
        return [self.energy(ell) for ell in range(upto + 1)]

    def energy_first_closed_form(self):
        eng = self.engine
        h1 = eng.H(1) @ eng.chi0
        return float(np.real(np.vdot(eng.chi0, eng.H(2) @ eng.chi0) + np.vdot(h1, eng.O(1, h1))))

    def rayleigh_schrodinger(self, upto):
        """Textbook recursion in powers of ``lambda^(1/2)``; returns ``eps_0..eps_upto``."""
        eng = self.engine
        psis = [eng.chi0]
        eps = [eng.E0]
        for n in range(1, upto + 1):
            e_n = sum(np.vdot(eng.chi0, eng.H(j) @ psis[n - j]) for j in range(1, n + 1))
            eps.append(float(np.real(e_n)))
            src = np.zeros_like(eng.chi0)
            for j in range(1, n + 1):
                src = src + eng.H(j) @ psis[n - j] - eps[j] * psis[n - j]
            psis.append(eng.O(1, src))
        return eps

    # -- observables --------------------------------------------------------

    def expectation(self, A, upto=None):
        upto = self.order if upto is None else upto
        return [self.P(ell).trace_with(A) for ell in range(upto + 1)]

    def density_lines(self, ell, phi, B):
        """The two sums of ``gamma_{1,ell}``: odd-order projector terms and even-order terms."""
        M = len(phi)
        first = np.zeros((M, M), dtype=complex)
        second = np.zeros((M, M), dtype=complex)
        if ell == 0:
            return first, np.outer(phi, phi.conj())
        fock = self.engine.fock
        tab = self.engine.tables
        m = fock.m
        Nop = fock.number
        ann = fock.annihilators
        cre = fock.creators
        for n in range(ell):
            P = self.P(2 * n + 1)
            for k in range(ell - n):
                c = tab.ctilde2_float(ell - n - 1, k)
                if c == 0:
                    continue
                w = fock.diag((Nop - 1) ** k)
                g = np.array([P.trace_with(cre[i] @ w) for i in range(m)])
                f = np.array([P.trace_with(w @ ann[i]) for i in range(m)])
                first += c * (np.outer(phi, B.conj() @ g) + np.outer(B @ f, phi.conj()))
            P = self.P(2 * n)
            c = tab.ctilde_float(ell - n - 1)
            G = np.array([[P.trace_with(cre[j] @ ann[i]) for j in range(m)] for i in range(m)])
            num = P.trace_with(fock.number_operator())
            second += c * (B @ G @ B.conj().T - np.outer(phi, phi.conj()) * num)
        return first, second

    def density(self, ell, phi, B):
        """Coefficient ``gamma_{1,ell}`` as an ``M x M`` matrix in full mode coordinates."""
        first, second = self.density_lines(ell, phi, B)
        return first + second

    def densities(self, phi, B, upto=None):
        upto = self.order if upto is None else upto
        return [self.density(ell, phi, B) for ell in range(upto + 1)]


def static_expansion(sq, order, tables=None, level=0):
    return StaticExpansion(ResolventEngine(sq, tables, level), order)


def theta_kernels(expansion, bmap):
    """``Theta_1`` and symmetric ``Theta_3`` in Bogoliubov-mode coordinates.

    ``chi_1 = sum_i Theta1[i] b^+_i Chi_0 + sum_ijk Theta3[i,j,k] b^+_i b^+_j b^+_k Chi_0``
    with ``b = U a - conj(V) a^+``.
    """
    fock = expansion.engine.fock
    chi0 = expansion.engine.chi0
    chi1 = expansion.chis(1)[1]
    m = fock.m
    b = [sum(bmap.U[i, j] * fock.annihilators[j] - np.conj(bmap.V[i, j]) * fock.creators[j]
             for j in range(m)) for i in range(m)]
    t1 = np.array([np.vdot(chi0, b[i] @ chi1) for i in range(m)])
    t3 = np.zeros((m, m, m), dtype=complex)
    for i, j, k in product(range(m), repeat=3):
        t3[i, j, k] = np.vdot(chi0, b[i] @ (b[j] @ (b[k] @ chi1))) / 6
    return t1, t3, b


def chi_from_theta(t1, t3, b, chi0):
    bd = [x.conj().T for x in b]
    out = sum(t1[i] * (bd[i] @ chi0) for i in range(len(b)))
    for i, j, k in product(range(len(b)), repeat=3):
        if t3[i, j, k] != 0:
            out = out + t3[i, j, k] * (bd[i] @ (bd[j] @ (bd[k] @ chi0)))
    return out
