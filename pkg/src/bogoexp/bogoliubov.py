"""Bogoliubov theory: K-operators, symplectic diagonalization, quasi-free states.

Conventions (coefficient vectors in the mode basis):

* ``a(f) = sum_x conj(f_x) a_x`` and ``a^+(f) = sum_x f_x a^+_x``.
* A map ``(U, V)`` is implemented by a unitary with
  ``U a(f) U^* = a(U f) + a^+(conj(V f))``.
* Two-point functions of a state: ``gamma[x, y] = <a^+_y a_x>`` and
  ``alpha[x, y] = <a_x a_y>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.linalg import eigh, polar, sqrtm

from .core import NumericalFailure
from .hartree import exchange, mean_field, pair_function


def complement_basis(phi):
    """Orthonormal basis of the orthogonal complement of ``phi`` (columns).

    The coordinate vector with the largest overlap is dropped and the rest are
    projected and orthonormalized in index order, so that for ``phi`` equal to
    a basis vector the complement basis is the remaining basis vectors.
    """
    m = len(phi)
    drop = int(np.argmax(np.abs(phi)))
    q = np.eye(m) - np.outer(phi, phi.conj())
    cols = []
    for j in range(m):
        if j == drop:
            continue
        w = q[:, j].astype(complex)
        for _ in range(2):
            for c in cols:
                w = w - c * (c.conj() @ w)
            w = w - phi * (phi.conj() @ w)
        w /= np.linalg.norm(w)
        cols.append(w)
    return np.array(cols).T


@dataclass(frozen=True)
class KOperators:
    """Kernels of the K-operators in the full mode basis.

    ``K1`` and ``K2`` are ``M x M``; ``K3`` is ``M^2 x M`` acting as
    ``sum K3[(p,q), r] a^+_p a^+_q a_r``; ``K4`` and ``W`` are ``M^2 x M^2``.
    """

    phi: np.ndarray
    h: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray
    K4: np.ndarray
    W: np.ndarray
    B: np.ndarray

    @property
    def mode_count(self):
        return len(self.phi)

    # complement coordinates: creation slots take conj(B), annihilation slots B
    def h_c(self):
        return self.B.conj().T @ self.h @ self.B

    def K1_c(self):
        return self.B.conj().T @ self.K1 @ self.B

    def K2_c(self):
        return self.B.conj().T @ self.K2 @ self.B.conj()

    def K3_c(self):
        m = self.mode_count
        k3 = self.K3.reshape(m, m, m)
        Bc = self.B.conj()
        return np.einsum("pqr,pi,qj,rk->ijk", k3, Bc, Bc, self.B)

    def K4_c(self):
        m = self.mode_count
        k4 = self.K4.reshape(m, m, m, m)
        Bc = self.B.conj()
        return np.einsum("pqrs,pi,qj,rk,sl->ijkl", k4, Bc, Bc, self.B, self.B)


def k_operators(phi, h, tensor, B=None):
    """Assemble the K-operators for condensate ``phi`` and mean-field ``h``."""
    m = len(phi)
    if tensor.shape != (m, m, m, m) or h.shape != (m, m):
        raise ValueError("basis mismatch between condensate, h and interaction tensor")
    q = np.eye(m) - np.outer(phi, phi.conj())
    mf = mean_field(tensor, phi)
    K1 = q @ exchange(tensor, phi) @ q
    K2 = q @ pair_function(tensor, phi) @ q.T
    c = np.real(phi.conj() @ mf @ phi)
    eye = np.eye(m)
    W = (tensor.reshape(m * m, m * m)
         - np.kron(mf, eye) - np.kron(eye, mf) + c * np.eye(m * m))
    qq = np.kron(q, q)
    K3 = qq @ W @ np.kron(phi[:, None], q)
    K4 = qq @ W @ qq
    if B is None:
        B = complement_basis(phi)
    return KOperators(phi, h, K1, K2, K3, K4, W, B)


def build_k_operators(sol, v=None, basis=None):
    """K-operators of a static Hartree solution (``v`` and ``basis`` optional checks)."""
    tensor = sol.tensor
    if v is not None and basis is not None:
        if basis.mode_count != sol.mode_count:
            raise ValueError("basis mismatch")
        tensor = v.tensor(basis)
    return k_operators(sol.phi, sol.h, tensor)


# ---------------------------------------------------------------------------
# Bogoliubov maps


def symplectic_matrix(U, V):
    """Block matrix acting on ``(a, a^+)`` coefficient columns of ``U^* a U``."""
    return np.block([[U, -V.conj()], [-V, U.conj()]])


def symplectic_defect(U, V):
    """Largest violation of the commutation-preserving identities."""
    n = U.shape[0]
    J = np.block([[np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), -np.eye(n)]])
    S = symplectic_matrix(U, V)
    return float(max(np.max(np.abs(S @ J @ S.conj().T - J)),
                     np.max(np.abs(S.conj().T @ J @ S - J))))


@dataclass(frozen=True)
class BogoliubovMap:
    """Block pair ``(U, V)``; ``Chi_0 = U^* Omega`` is annihilated by ``U a - conj(V) a^+``."""

    U: np.ndarray
    V: np.ndarray
    energies: np.ndarray | None = None
    ground_energy: float | None = None

    @property
    def defect(self):
        return symplectic_defect(self.U, self.V)

    def inverse(self):
        """Map implementing the inverse unitary."""
        return map_from_transform(np.linalg.inv(transform_matrix(self)))

    def compose(self, other):
        """Map of the product of unitaries, ``self`` outermost."""
        return map_from_transform(transform_matrix(self) @ transform_matrix(other))

    def quasi_free(self):
        """Two-point functions of ``U^* Omega``."""
        return QuasiFreeState(self.V.conj().T @ self.V, self.U.conj().T @ self.V.conj())


def map_from_transform(T):
    n = T.shape[0] // 2
    return BogoliubovMap(T[n:, n:].copy(), T[:n, n:].copy())


def identity_map(n):
    return BogoliubovMap(np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex),
                         ground_energy=0.0)


def _canonical_clusters(W, e, rtol=1e-9):
    """Fix the freedom inside degenerate eigenvalue clusters of ``W``.

    Each cluster is rotated to the orthonormal frame closest to the unit
    vectors of its highest-weight coordinates, then signs are fixed so that
    the largest entry of every column is positive.
    """
    W = W.copy()
    n = len(e)
    i = 0
    while i < n:
        j = i + 1
        while j < n and abs(e[j] - e[i]) <= rtol * max(1.0, abs(e[i])):
            j += 1
        if j - i > 1:
            Wc = W[:, i:j]
            weight = np.sum(Wc**2, axis=1)
            rows = np.sort(np.argsort(-weight, kind="stable")[: j - i])
            X = np.zeros_like(Wc)
            X[rows, np.arange(j - i)] = 1.0
            rot, _ = polar(Wc.T @ X)
            W[:, i:j] = Wc @ rot
        i = j
    for k in range(n):
        col = W[:, k]
        big = np.argmax(np.abs(col) - 1e-12 * np.arange(n))
        if col[big] < 0:
            W[:, k] = -col
    return W


def diagonalize_quadratic(A, Bp, rtol=1e-9):
    """Diagonalize ``a^+ A a + (1/2)(a^+ Bp a^+ + h.c.)`` for real symmetric blocks.

    Returns ``BogoliubovMap`` whose new annihilators ``U a - conj(V) a^+`` bring
    the form to ``E_0 + sum_n e_n b^+_n b_n``.
    """
    if np.max(np.abs(np.imag(A))) > 1e-12 or np.max(np.abs(np.imag(Bp))) > 1e-12:
        raise NumericalFailure("bogoliubov", "only real quadratic forms are supported")
    A = np.real(A)
    Bp = np.real(Bp)
    A = 0.5 * (A + A.T)
    Bp = 0.5 * (Bp + Bp.T)
    for sign, blk in (("+", A + Bp), ("-", A - Bp)):
        ev = np.linalg.eigvalsh(blk)
        if ev[0] <= 0:
            raise NumericalFailure(
                "bogoliubov", f"A {sign} B is not positive definite (eigenvalue {ev[0]:.6e})")
    root = np.real(sqrtm(A - Bp))
    root = 0.5 * (root + root.T)
    Mmat = root @ (A + Bp) @ root
    e2, W = eigh(0.5 * (Mmat + Mmat.T))
    e = np.sqrt(e2)
    W = _canonical_clusters(W, e, rtol)
    S = root @ W / np.sqrt(e)
    Sinv = np.sqrt(e)[:, None] * (W.T @ np.linalg.inv(root))
    P = 0.5 * (Sinv + S.T)
    R = 0.5 * (Sinv - S.T)
    E0 = 0.5 * (np.sum(e) - np.trace(A))
    return BogoliubovMap(P.astype(complex), -R.astype(complex), e, float(E0))


def diagonalize_bogoliubov(sol, K):
    """Diagonalize the quadratic Bogoliubov Hamiltonian on the complement."""
    A = K.h_c() + K.K1_c()
    return diagonalize_quadratic(A, K.K2_c())


# ---------------------------------------------------------------------------
# quasi-free states and Wick's rule


@dataclass(frozen=True)
class QuasiFreeState:
    gamma: np.ndarray
    alpha: np.ndarray

    @property
    def mode_count(self):
        return self.gamma.shape[0]

    def contraction_table(self):
        """``G[c_i, c_j] = <o_i o_j>`` with codes ``x`` for ``a_x`` and ``M + x`` for ``a^+_x``."""
        m = self.mode_count
        g, al = self.gamma, self.alpha
        return np.block([[al, np.eye(m) + g], [g.T, al.conj()]])

    def number(self):
        return float(np.real(np.trace(self.gamma)))


@lru_cache(maxsize=None)
def pairings(n):
    """All perfect matchings of ``range(n)`` as tuples of ordered pairs."""
    if n == 0:
        return ((),)
    if n % 2:
        return ()
    out = []
    for k in range(1, n):
        rest = [i for i in range(1, n) if i != k]
        for sub in pairings(n - 2):
            out.append(((0, k),) + tuple((rest[a], rest[b]) for a, b in sub))
    return tuple(out)


def _codes(state, ops):
    m = state.mode_count
    codes = []
    for dagger, idx in ops:
        if not 0 <= idx < m:
            raise IndexError(f"mode index {idx} out of range for {m} modes")
        codes.append(idx + m * bool(dagger))
    return np.array(codes, dtype=int)


def wick_evaluate(state, ops):
    """Expectation of the operator string ``ops`` = [(dagger, mode), ...]."""
    codes = _codes(state, ops)
    if len(codes) % 2:
        return 0j
    G = state.contraction_table()
    total = 0j
    for pairing in pairings(len(codes)):
        term = 1 + 0j
        for i, j in pairing:
            term *= G[codes[i], codes[j]]
        total += term
    return total


def wick_evaluate_many(state, codes):
    """Vectorized Wick rule over an ``(S, n)`` array of operator codes."""
    codes = np.asarray(codes, dtype=int)
    S, n = codes.shape
    if n % 2:
        return np.zeros(S, dtype=complex)
    G = state.contraction_table()
    total = np.zeros(S, dtype=complex)
    for pairing in pairings(n):
        term = np.ones(S, dtype=complex)
        for i, j in pairing:
            term *= G[codes[:, i], codes[:, j]]
        total += term
    return total


def all_strings(mode_count, length):
    """Every operator code string of the given length."""
    return np.array(list(product(range(2 * mode_count), repeat=length)), dtype=int).reshape(-1, length)


# ---------------------------------------------------------------------------
# transformation of operator strings


def transform_matrix(bmap):
    """Matrix taking ``(ann, cre)`` coefficients of a linear form to those of its conjugate."""
    U, V = bmap.U, bmap.V
    return np.block([[U.conj(), V], [V.conj(), U]])


def linear_forms(ops, mode_count):
    """Operator string -> list of ``(ann, cre)`` coefficient pairs."""
    forms = []
    for dagger, idx in ops:
        ann = np.zeros(mode_count, dtype=complex)
        cre = np.zeros(mode_count, dtype=complex)
        (cre if dagger else ann)[idx] = 1.0
        forms.append((ann, cre))
    return forms


def transform_operator(bmap, forms, check=1e-8):
    """Conjugate a product of linear forms by the unitary of ``bmap``."""
    if bmap.defect > check:
        raise NumericalFailure("bogoliubov", f"map is not symplectic (defect {bmap.defect:.2e})")
    T = transform_matrix(bmap)
    n = bmap.U.shape[0]
    out = []
    for ann, cre in forms:
        new = T @ np.concatenate([ann, cre])
        out.append((new[:n], new[n:]))
    return out


def wick_forms(state, forms):
    """Wick's rule for a product of linear forms."""
    if len(forms) % 2:
        return 0j
    G = state.contraction_table()
    vecs = [np.concatenate(f) for f in forms]
    total = 0j
    for pairing in pairings(len(vecs)):
        term = 1 + 0j
        for i, j in pairing:
            term *= vecs[i] @ G @ vecs[j]
        total += term
    return total


def vacuum_state(n):
    z = np.zeros((n, n), dtype=complex)
    return QuasiFreeState(z, z.copy())
