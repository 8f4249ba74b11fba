"""Truncated Fock spaces, second-quantized K-operators and the excitation map.

A ``FockBasis`` holds every occupation tuple of ``m`` modes with total at most
``n_max``.  Ladder matrices are truncated at ``n_max``; products that are
normal ordered (creators to the left) are then exact compressions of the
corresponding operators, which is how every builder here is written.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

EVEN, ODD, MIXED = "even", "odd", "mixed"


@lru_cache(maxsize=None)
def occupations(m, total):
    """Occupation tuples of ``m`` modes summing to ``total``, lexicographic order."""
    if m == 1:
        return ((total,),)
    out = []
    for first in range(total + 1):
        for rest in occupations(m - 1, total - first):
            out.append((first,) + rest)
    return tuple(out)


def sector_dimension(m, total):
    return comb(total + m - 1, m - 1)


@lru_cache(maxsize=None)
def _sector_index(m, total):
    return {n: i for i, n in enumerate(occupations(m, total))}


@lru_cache(maxsize=None)
def sector_annihilators(m, total):
    """Matrices of ``a_p`` from the ``total`` sector to the ``total - 1`` sector."""
    src = occupations(m, total)
    dst = _sector_index(m, total - 1) if total > 0 else {}
    mats = []
    for p in range(m):
        rows, cols, vals = [], [], []
        for j, n in enumerate(src):
            if n[p]:
                t = list(n)
                t[p] -= 1
                rows.append(dst[tuple(t)])
                cols.append(j)
                vals.append(np.sqrt(n[p]))
        shape = (sector_dimension(m, total - 1) if total > 0 else 0, len(src))
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=shape))
    return tuple(mats)


def sector_create(m, total, coeffs, x):
    """Apply ``a^+(f)`` (``f`` = coeffs) to a vector of the ``total`` sector."""
    ann = sector_annihilators(m, total + 1)
    out = np.zeros(sector_dimension(m, total + 1), dtype=complex)
    for p in range(m):
        if coeffs[p] != 0:
            out += coeffs[p] * (ann[p].T @ x)
    return out


def sector_annihilate(m, total, coeffs, x):
    """Apply ``a(f)`` to a vector of the ``total`` sector."""
    ann = sector_annihilators(m, total)
    out = np.zeros(sector_dimension(m, total - 1), dtype=complex)
    for p in range(m):
        if coeffs[p] != 0:
            out += np.conj(coeffs[p]) * (ann[p] @ x)
    return out


class FockBasis:
    """Occupation basis of ``m`` modes truncated at ``n_max`` total particles."""

    def __init__(self, m, n_max):
        if m < 1:
            raise ValueError("at least one mode is required")
        if n_max < 1:
            raise ValueError("n_max must be at least 1")
        self.m = int(m)
        self.n_max = int(n_max)
        states = []
        offsets = [0]
        for k in range(self.n_max + 1):
            states.extend(occupations(self.m, k))
            offsets.append(len(states))
        self.states = np.array(states, dtype=int).reshape(-1, self.m)
        self.offsets = tuple(offsets)
        self.index = {tuple(s): i for i, s in enumerate(states)}

    @property
    def dim(self):
        return len(self.states)

    @cached_property
    def totals(self):
        return self.states.sum(axis=1)

    def sector(self, k):
        return slice(self.offsets[k], self.offsets[k + 1])

    def vacuum(self):
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    @cached_property
    def annihilators(self):
        mats = []
        for p in range(self.m):
            rows, cols, vals = [], [], []
            for j, n in enumerate(self.states):
                if n[p]:
                    t = n.copy()
                    t[p] -= 1
                    rows.append(self.index[tuple(t)])
                    cols.append(j)
                    vals.append(np.sqrt(n[p]))
            mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim)))
        return tuple(mats)

    @cached_property
    def creators(self):
        return tuple(a.T.tocsr() for a in self.annihilators)

    @cached_property
    def number(self):
        return self.totals.astype(float)

    def number_operator(self):
        return sp.diags(self.number).tocsr()

    def diag(self, values):
        return sp.diags(np.asarray(values, dtype=complex)).tocsr()

    def monomial(self, cre, ann):
        """Normal-ordered product ``a^+_{cre[0]} ... a_{ann[-1]}`` (annihilators commute)."""
        op = sp.identity(self.dim, dtype=complex, format="csr")
        for p in cre:
            op = op @ self.creators[p]
        for r in ann:
            op = op @ self.annihilators[r]
        return op

    def mass_above(self, x, level):
        """Squared norm carried by occupations above ``level``."""
        if level >= self.n_max:
            return 0.0
        return float(np.sum(np.abs(x[self.offsets[level + 1]:]) ** 2))

    def top_mass(self, x):
        return float(np.sum(np.abs(x[self.sector(self.n_max)]) ** 2))


def brute_force_dimension(m, n_max):
    """Count occupation tuples by direct enumeration (independent of ``occupations``)."""
    from itertools import product

    return sum(1 for n in product(range(n_max + 1), repeat=m) if sum(n) <= n_max)


# ---------------------------------------------------------------------------
# second quantization of kernels


def one_body(fock, mat, tol=0.0):
    """``sum_ij mat[i, j] a^+_i a_j``."""
    op = sp.csr_matrix((fock.dim, fock.dim), dtype=complex)
    for i in range(fock.m):
        for j in range(fock.m):
            if abs(mat[i, j]) > tol:
                op = op + mat[i, j] * (fock.creators[i] @ fock.annihilators[j])
    return op.tocsr()


def pair_creation(fock, mat, tol=0.0):
    """``(1/2) sum_ij mat[i, j] a^+_i a^+_j``."""
    op = sp.csr_matrix((fock.dim, fock.dim), dtype=complex)
    for i in range(fock.m):
        for j in range(fock.m):
            if abs(mat[i, j]) > tol:
                op = op + 0.5 * mat[i, j] * (fock.creators[i] @ fock.creators[j])
    return op.tocsr()


def cubic(fock, t3, tol=0.0):
    """``sum_ijk t3[i, j, k] a^+_i a^+_j a_k``."""
    op = sp.csr_matrix((fock.dim, fock.dim), dtype=complex)
    for i in range(fock.m):
        for j in range(fock.m):
            cc = fock.creators[i] @ fock.creators[j]
            for k in range(fock.m):
                if abs(t3[i, j, k]) > tol:
                    op = op + t3[i, j, k] * (cc @ fock.annihilators[k])
    return op.tocsr()


def quartic(fock, t4, tol=0.0):
    """``(1/2) sum_ijkl t4[i, j, k, l] a^+_i a^+_j a_l a_k``."""
    op = sp.csr_matrix((fock.dim, fock.dim), dtype=complex)
    for i in range(fock.m):
        for j in range(fock.m):
            cc = fock.creators[i] @ fock.creators[j]
            for k in range(fock.m):
                for l in range(fock.m):
                    if abs(t4[i, j, k, l]) > tol:
                        aa = fock.annihilators[l] @ fock.annihilators[k]
                        op = op + 0.5 * t4[i, j, k, l] * (cc @ aa)
    return op.tocsr()


@dataclass
class SecondQuantizedK:
    """The operators ``K0 = dGamma(h)``, ``K1``, ``K2`` (pair creation), ``K3``, ``K4``."""

    fock: FockBasis
    K0: sp.csr_matrix
    K1: sp.csr_matrix
    K2: sp.csr_matrix
    K3: sp.csr_matrix
    K4: sp.csr_matrix
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def N(self):
        return self.fock.number

    def _number_power(self, shift, power):
        return self.fock.diag((self.N - shift) ** power)

    def _with_adjoint(self, op):
        return (op + op.conj().T).tocsr()

    def H(self, j, tables=None):
        """Taylor coefficient ``H_j`` of the excitation Hamiltonian in powers of ``lambda^(1/2)``."""
        if j < 0:
            raise ValueError("j must be nonnegative")
        if j in self._cache:
            return self._cache[j]
        if j == 0:
            op = self.K0 + self.K1 + self._with_adjoint(self.K2)
        elif j == 1:
            op = self._with_adjoint(self.K3)
        elif j == 2:
            op = (-(self._number_power(1, 1) @ self.K1)
                  - self._with_adjoint(self.K2 @ self._number_power(0.5, 1)) + self.K4)
        else:
            if tables is None:
                from .core import coefficient_tables

                tables = coefficient_tables(max(16, j))
            half = (j + 1) // 2
            if j % 2:
                c = tables.c_float(0, half - 1)
                op = c * self._with_adjoint(self.K3 @ self._number_power(1, half - 1))
            else:
                op = sp.csr_matrix((self.fock.dim, self.fock.dim), dtype=complex)
                for nu in range(half + 1):
                    d = tables.d_float(half, nu)
                    if d != 0:
                        op = op + d * self._with_adjoint(self.K2 @ self._number_power(1, nu))
        op = op.tocsr()
        op.eliminate_zeros()
        self._cache[j] = op
        return op

    def exact(self, N):
        """Compression of the exact excitation Hamiltonian for ``N`` particles."""
        if self.fock.n_max > N:
            raise ValueError(f"Fock cutoff {self.fock.n_max} exceeds particle number {N}")
        n = self.N
        lam = 1.0 / (N - 1)
        one = self.fock.diag((N - n) * lam)
        two = self.fock.diag(np.sqrt(np.clip((N - n) * (N - n - 1), 0, None)) * lam)
        three = self.fock.diag(np.sqrt(np.clip(N - n, 0, None)) * lam)
        op = (self.K0 + self.K1 @ one + self._with_adjoint(self.K2 @ two)
              + self._with_adjoint(self.K3 @ three) + lam * self.K4)
        return op.tocsr()

    def taylor_sum(self, N, order, tables=None):
        lam = 1.0 / (N - 1)
        op = self.H(0)
        for j in range(1, order + 1):
            op = op + lam ** (j / 2) * self.H(j, tables)
        return op.tocsr()


class MonomialStack:
    """Linear map from kernel entries to a sparse operator with a fixed sparsity pattern.

    Used when the same kind of operator is second-quantized for many kernels
    (one per time step); building from the stored pattern avoids repeated
    sparse products.
    """

    def __init__(self, mats, shape):
        rows, cols, vals, ids = [], [], [], []
        for idx, mat in enumerate(mats):
            c = mat.tocoo()
            rows.append(c.row)
            cols.append(c.col)
            vals.append(c.data)
            ids.append(np.full(c.nnz, idx))
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        keys = rows.astype(np.int64) * shape[1] + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        self.indptr = np.searchsorted(uniq // shape[1], np.arange(shape[0] + 1)).astype(np.int32)
        self.map = sp.csr_matrix((np.concatenate(vals), (inverse, np.concatenate(ids))),
                                 shape=(len(uniq), len(mats)))

    def build(self, coeffs):
        data = self.map @ np.asarray(coeffs, dtype=complex).ravel()
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


class KernelStacks:
    """Monomial stacks of every K-operator shape on one Fock basis (built lazily)."""

    def __init__(self, fock):
        self.fock = fock
        self._stacks = {}

    def _get(self, kind):
        if kind not in self._stacks:
            f, r = self.fock, range(self.fock.m)
            cre, ann = f.creators, f.annihilators
            if kind == 1:
                mats = [cre[i] @ ann[j] for i in r for j in r]
            elif kind == 2:
                mats = [0.5 * (cre[i] @ cre[j]) for i in r for j in r]
            elif kind == 3:
                mats = [cre[i] @ cre[j] @ ann[k] for i in r for j in r for k in r]
            else:
                mats = [0.5 * (cre[i] @ cre[j] @ ann[l] @ ann[k]) for i in r for j in r for k in r for l in r]
            self._stacks[kind] = MonomialStack(mats, (f.dim, f.dim))
        return self._stacks[kind]

    def one_body(self, mat):
        return self._get(1).build(mat)

    def pair_creation(self, mat):
        return self._get(2).build(mat)

    def cubic(self, t3):
        return self._get(3).build(t3)

    def quartic(self, t4):
        return self._get(4).build(t4)


def second_quantize(fock, h, K1, K2, K3, K4, stacks=None):
    """Second-quantized K-operators from kernels in the Fock basis' own mode coordinates."""
    m = fock.m
    if h.shape != (m, m):
        raise ValueError("kernel dimension does not match the Fock basis")
    if stacks is not None:
        return SecondQuantizedK(fock, stacks.one_body(h), stacks.one_body(K1), stacks.pair_creation(K2),
                                stacks.cubic(K3), stacks.quartic(K4))
    return SecondQuantizedK(
        fock,
        one_body(fock, h),
        one_body(fock, K1),
        pair_creation(fock, K2),
        cubic(fock, K3.reshape(m, m, m)),
        quartic(fock, K4.reshape(m, m, m, m)),
    )


def excitation_operators(K, n_max):
    """Static second-quantized K-operators on the Fock space over ``ran q``."""
    fock = FockBasis(K.mode_count - 1, n_max)
    return second_quantize(fock, K.h_c(), K.K1_c(), K.K2_c(), K.K3_c(), K.K4_c())


def parity_tag(fock, op, tol=0.0):
    """Classify an operator by the particle-number parity change it induces."""
    coo = op.tocoo()
    keep = np.abs(coo.data) > tol
    diff = (fock.totals[coo.row[keep]] - fock.totals[coo.col[keep]]) % 2
    if diff.size == 0 or np.all(diff == 0):
        return EVEN
    if np.all(diff == 1):
        return ODD
    return MIXED


def max_number_change(fock, op):
    coo = op.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(fock.totals[coo.row] - fock.totals[coo.col])))


# ---------------------------------------------------------------------------
# excitation vectors <-> N-body vectors


@lru_cache(maxsize=32)
def _complement_images_cached(key, k):
    B, M = key[0], key[1]
    return _complement_images(np.array(B).reshape(M, -1), k)


def _complement_images(B, k):
    """Columns: ``Gamma(B)`` images of complement occupations of total ``k`` in the full sector."""
    M, m = B.shape
    comp = occupations(m, k)
    out = np.zeros((sector_dimension(M, k), len(comp)), dtype=complex)
    if k == 0:
        out[0, 0] = 1.0
        return out
    prev = _complement_images(B, k - 1)
    prev_index = _sector_index(m, k - 1)
    for col, n in enumerate(comp):
        i = next(idx for idx, c in enumerate(n) if c)
        t = list(n)
        t[i] -= 1
        out[:, col] = sector_create(M, k - 1, B[:, i], prev[:, prev_index[tuple(t)]]) / np.sqrt(n[i])
    return out


def complement_images(B, k):
    B = np.asarray(B, dtype=complex)
    key = (tuple(B.ravel().tolist()), B.shape[0])
    return _complement_images_cached(key, k)


def embed_complement(B, fock_c, chi, fock_full=None):
    """Map a vector on the complement Fock space to full-mode coordinates."""
    M = B.shape[0]
    if fock_full is None:
        fock_full = FockBasis(M, fock_c.n_max)
    out = np.zeros(fock_full.dim, dtype=complex)
    for k in range(min(fock_c.n_max, fock_full.n_max) + 1):
        out[fock_full.sector(k)] = complement_images(B, k) @ chi[fock_c.sector(k)]
    if fock_c.n_max > fock_full.n_max and np.any(chi[fock_c.offsets[fock_full.n_max + 1]:]):
        raise ValueError("vector has support above the target cutoff")
    return out


def restrict_complement(B, fock_c, x_full, fock_full):
    """Adjoint of ``embed_complement`` (projects onto states with no condensate particle)."""
    out = np.zeros(fock_c.dim, dtype=complex)
    for k in range(min(fock_c.n_max, fock_full.n_max) + 1):
        out[fock_c.sector(k)] = complement_images(B, k).conj().T @ x_full[fock_full.sector(k)]
    return out


def assemble_nbody(phi, chi_full, fock_full, N, clip=False):
    """``Psi = sum_k a^+(phi)^(N-k) chi^(k) / sqrt((N-k)!)`` for full-mode sector vectors.

    ``chi_full`` lives on ``fock_full`` (``M`` modes) and must be orthogonal to
    ``phi`` in every slot for the map to be the unitary excitation map.
    Sectors above ``N`` raise unless ``clip`` is set, in which case the sum
    simply stops at ``k = N``.
    """
    M = fock_full.m
    K = fock_full.n_max
    if K > N:
        if not clip and np.any(np.abs(chi_full[fock_full.offsets[N + 1]:]) > 0):
            raise ValueError("excitation vector has support above N particles")
        K = N
    s = chi_full[fock_full.sector(0)].astype(complex)
    for j in range(1, K + 1):
        s = sector_create(M, j - 1, phi, s) / np.sqrt(N - j + 1) + chi_full[fock_full.sector(j)]
    for j in range(K + 1, N + 1):
        s = sector_create(M, j - 1, phi, s) / np.sqrt(j - K)
    return s


def nbody_sectors(phi, psi, M, N, n_max):
    """Vectors ``a(phi)^(N-k) Psi / sqrt((N-k)!)`` for ``k = 0..n_max``."""
    w = psi.astype(complex)
    out = {N: w} if n_max >= N else {}
    for k in range(N, 0, -1):
        w = sector_annihilate(M, k, phi, w) / np.sqrt(N - k + 1)
        if k - 1 <= n_max:
            out[k - 1] = w
    return out


def decompose_nbody(phi, psi, B, fock_c, N):
    """Excitation vector on the complement Fock space (inverse of the assembly)."""
    M = len(phi)
    n_top = min(fock_c.n_max, N)
    secs = nbody_sectors(phi, psi, M, N, n_top)
    out = np.zeros(fock_c.dim, dtype=complex)
    for k in range(n_top + 1):
        out[fock_c.sector(k)] = complement_images(B, k).conj().T @ secs[k]
    return out


def assemble_from_complement(phi, B, fock_c, chi, N, clip=False):
    fock_full = FockBasis(len(phi), fock_c.n_max)
    return assemble_nbody(phi, embed_complement(B, fock_c, chi, fock_full), fock_full, N, clip)
