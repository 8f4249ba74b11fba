"""Exact N-body reference on the symmetric sector and convergence-rate fits."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh, expm_multiply
from scipy.stats import linregress

from .core import NumericalFailure
from .fock import occupations, sector_annihilators, sector_dimension

DIMENSION_CAP = 200_000
DENSE_LIMIT = 2000


@dataclass(frozen=True)
class SymmetricSector:
    N: int
    M: int

    @property
    def dim(self):
        return sector_dimension(self.M, self.N)

    @property
    def states(self):
        return np.array(occupations(self.M, self.N), dtype=int)

    def condensate_vector(self, phi):
        """Coefficients of the product state ``phi^(x)N`` (multinomial weights)."""
        from math import lgamma

        st = self.states
        logc = lgamma(self.N + 1) - np.array([sum(lgamma(k + 1) for k in n) for n in st])
        out = np.exp(0.5 * logc).astype(complex)
        for p in range(self.M):
            out *= phi[p] ** st[:, p]
        return out


def build_nbody_hamiltonian(N, one_body, tensor, cap=DIMENSION_CAP):
    """``sum T_pq a+_p a_q + (2(N-1))^-1 sum v_pqrs a+_p a+_q a_s a_r`` on the N sector."""
    M = one_body.shape[0]
    dim = sector_dimension(M, N)
    if dim > cap:
        raise NumericalFailure("oracle", f"sector dimension {dim} exceeds cap {cap}")
    a1 = sector_annihilators(M, N)
    a2 = sector_annihilators(M, N - 1)
    H = sp.csr_matrix((dim, dim), dtype=complex)
    for p in range(M):
        for q in range(M):
            if one_body[p, q] != 0:
                H = H + one_body[p, q] * (a1[p].T @ a1[q])
    pairs = sp.vstack([a2[s] @ a1[r] for r in range(M) for s in range(M)]).tocsr()
    Vmat = sp.csr_matrix(tensor.reshape(M * M, M * M))
    d2 = sector_dimension(M, N - 2)
    H = H + (0.5 / (N - 1)) * (pairs.T @ sp.kron(Vmat, sp.identity(d2), format="csr") @ pairs)
    H = 0.5 * (H + H.conj().T)
    return H.tocsr()


@dataclass(frozen=True)
class OracleResult:
    energies: np.ndarray
    vectors: np.ndarray
    residual: float

    @property
    def energy(self):
        return float(self.energies[0])

    @property
    def ground(self):
        return self.vectors[:, 0]


def _fix_phase(vec, reference):
    ov = np.vdot(reference, vec) if reference is not None else vec[np.argmax(np.abs(vec))]
    if abs(ov) < 1e-300:
        ov = vec[np.argmax(np.abs(vec))]
    return vec * (abs(ov) / ov)


def exact_eigenpairs(H, count=1, reference=None, tol=1e-9):
    """Lowest ``count`` eigenpairs; ground phase fixed by positive overlap with ``reference``."""
    dim = H.shape[0]
    if dim <= DENSE_LIMIT:
        w, v = eigh(H.toarray())
        w, v = w[:count], v[:, :count]
    else:
        k = min(max(count, 1) + 2, dim - 1)
        w, v = eigsh(H, k=k, which="SA", tol=1e-13)
        order = np.argsort(w)
        w, v = w[order][:count], v[:, order][:, :count]
    vecs = np.array(v, dtype=complex)
    vecs[:, 0] = _fix_phase(vecs[:, 0], reference)
    for i in range(1, count):
        vecs[:, i] = _fix_phase(vecs[:, i], None)
    res = max(float(np.linalg.norm(H @ vecs[:, i] - w[i] * vecs[:, i])) for i in range(count))
    if res > tol * max(1.0, abs(w[0])):
        raise NumericalFailure("oracle", f"eigen-residual {res:.2e} above tolerance")
    return OracleResult(np.asarray(w, dtype=float), vecs, res)


def exact_ground_state(H, phi=None, N=None):
    ref = None
    if phi is not None:
        M = len(phi)
        ref = SymmetricSector(N, M).condensate_vector(phi)
    return exact_eigenpairs(H, 1, ref)


def exact_propagate(psi0, H, times, tol=1e-10):
    """States ``exp(-i H t) psi0`` at the given equally spaced times."""
    times = np.asarray(times, dtype=float)
    if len(times) == 1:
        out = [expm_multiply(-1j * times[0] * H, psi0)]
    else:
        out = expm_multiply(-1j * H, psi0, start=times[0], stop=times[-1],
                            num=len(times), endpoint=True)
        if not np.allclose(np.linspace(times[0], times[-1], len(times)), times):
            raise ValueError("times must be equally spaced")
    out = np.array(out)
    e0 = np.real(np.vdot(psi0, H @ psi0))
    n0 = np.linalg.norm(psi0)
    for psi in out:
        dn = abs(np.linalg.norm(psi) - n0)
        de = abs(np.real(np.vdot(psi, H @ psi)) - e0)
        if dn > tol or de > tol * max(1.0, abs(e0)):
            raise NumericalFailure("oracle-propagation",
                                   f"conservation drift (norm {dn:.1e}, energy {de:.1e})")
    return out


def reduced_density(psi, M, N):
    """One-body reduced density ``gamma[p, q] = <a+_q a_p> / N``."""
    ann = sector_annihilators(M, N)
    X = np.column_stack([a @ psi for a in ann])
    return (X.conj().T @ X).T / N


def reduced_density_occupation(psi, M, N):
    """Same quantity from explicit occupation-number matrix elements."""
    states = occupations(M, N)
    index = {n: i for i, n in enumerate(states)}
    g = np.zeros((M, M), dtype=complex)
    for i, n in enumerate(states):
        c = psi[i]
        if c == 0:
            continue
        for p in range(M):
            g[p, p] += abs(c) ** 2 * n[p]
            for q in range(M):
                if q == p or n[q] == 0:
                    continue
                t = list(n)
                t[q] -= 1
                t[p] += 1
                # <n| a+_q a_p |t> with t = n - e_q + e_p
                j = index[tuple(t)]
                g[p, q] += np.conj(c) * psi[j] * np.sqrt(n[q] * (n[p] + 1))
    return g / N


def trace_norm(a):
    a = 0.5 * (a + a.conj().T)
    return float(np.sum(np.abs(np.linalg.eigvalsh(a))))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    used: tuple
    dropped: tuple = ()


def fit_convergence_rate(points, min_r2=0.98, min_points=3):
    """Least-squares line through ``(log lambda, log residual)``.

    Exact zeros are dropped with a warning.  If the fit has ``R^2 < min_r2``
    the point with the largest ``lambda`` (smallest N) is excluded and the
    fit repeated while at least ``min_points`` remain.
    """
    pts = sorted((float(l), float(r)) for l, r in points)
    zero = tuple(p for p in pts if p[1] <= 0)
    if zero:
        warnings.warn(f"dropping {len(zero)} point(s) with zero residual (exact agreement)")
    pts = [p for p in pts if p[1] > 0]
    if len(pts) < 2:
        raise ValueError("need at least two positive residuals for a fit")
    dropped = list(zero)

    def fit(ps):
        x = np.log([p[0] for p in ps])
        y = np.log([p[1] for p in ps])
        r = linregress(x, y)
        return RateFit(float(r.slope), float(r.intercept), float(r.rvalue**2), tuple(ps), tuple(dropped))

    out = fit(pts)
    while out.r2 < min_r2 and len(pts) > min_points:
        dropped.append(pts[-1])
        pts = pts[:-1]
        out = fit(pts)
    return out
