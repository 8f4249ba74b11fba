"""Discretized one-body space, potentials, scaling and coefficient tables.

Everything downstream works in a finite orthonormal mode basis.  A mode basis
supplies the kinetic matrix (``-Laplacian``), the interaction enters as the
four-index tensor ``v[p, q, r, s] = <e_p (x) e_q, v e_r (x) e_s>`` and the trap
as a one-body matrix.  All second-quantized identities used by the expansion
are algebraic in these objects, so they hold exactly at finite mode count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

TORUS = "torus"
GRID = "trapped-grid"


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def torus_wavenumbers(mode_count):
    """Integer wave numbers ordered by modulus, positive sign first."""
    out = [0]
    k = 1
    while len(out) < mode_count:
        out.append(k)
        if len(out) < mode_count:
            out.append(-k)
        k += 1
    return np.array(out, dtype=int)


@dataclass(frozen=True)
class ModeBasis:
    """Orthonormal one-body modes on a periodic box or a bounded grid.

    For the torus the modes are plane waves ``exp(i p_k x)/sqrt(L)`` with
    ``p_k = 2 pi k / L``.  For the trapped grid the modes are normalized cell
    indicators on ``mode_count`` equally spaced points covering ``[-L/2, L/2]``
    with Dirichlet walls, so the kinetic matrix is the 3-point Laplacian.
    """

    kind: str
    mode_count: int
    length: float
    wavenumbers: np.ndarray | None = None
    points: np.ndarray | None = None

    @property
    def momenta(self):
        if self.kind != TORUS:
            return None
        return 2.0 * np.pi * self.wavenumbers / self.length

    @property
    def spacing(self):
        if self.kind == GRID:
            return self.length / self.mode_count
        return None

    @property
    def weights(self):
        """Quadrature weights of the grid points (grid only)."""
        if self.kind != GRID:
            return None
        return np.full(self.mode_count, self.spacing)

    def kinetic(self):
        if self.kind == TORUS:
            return np.diag(self.momenta**2).astype(complex)
        dx = self.spacing
        m = self.mode_count
        lap = (np.diag(np.full(m, 2.0)) - np.diag(np.ones(m - 1), 1)
               - np.diag(np.ones(m - 1), -1)) / dx**2
        return lap.astype(complex)

    def evaluate(self, coefficients, x):
        """Position representation of a vector of mode coefficients."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(coefficients)
        if self.kind == TORUS:
            waves = np.exp(1j * np.outer(x, self.momenta)) / np.sqrt(self.length)
            return waves @ c
        idx = np.clip(np.floor((x + self.length / 2) / self.spacing).astype(int),
                      0, self.mode_count - 1)
        return c[idx] / np.sqrt(self.spacing)

    def gram(self, samples=None):
        """Gram matrix of the modes computed by quadrature."""
        if self.kind == TORUS:
            n = samples or 8 * self.mode_count + 16
            x = np.arange(n) * self.length / n
            waves = np.exp(1j * np.outer(x, self.momenta)) / np.sqrt(self.length)
            return waves.conj().T @ waves * (self.length / n)
        values = np.eye(self.mode_count) / np.sqrt(self.spacing)
        return values.T @ (values * self.weights[:, None])


def build_basis(kind, mode_count, length):
    if kind not in (TORUS, GRID):
        raise ValueError(f"unknown basis kind {kind!r}")
    if int(mode_count) != mode_count or mode_count < 2:
        raise ValueError(f"mode count must be an integer >= 2, got {mode_count}")
    if not length > 0:
        raise ValueError(f"box length must be positive, got {length}")
    mode_count = int(mode_count)
    if kind == TORUS:
        return ModeBasis(TORUS, mode_count, float(length),
                         wavenumbers=_frozen(torus_wavenumbers(mode_count)))
    dx = length / mode_count
    pts = -length / 2 + (np.arange(mode_count) + 0.5) * dx
    return ModeBasis(GRID, mode_count, float(length), points=_frozen(pts))


@dataclass(frozen=True)
class InteractionPotential:
    """Even pair potential ``v``.

    On the torus ``v`` is given by Fourier coefficients ``fourier[i]`` attached to
    the wave number of mode ``i``; ``v(x) = L^-1 sum_k vhat_k exp(i p_k x)`` with
    ``vhat_k = 0`` for wave numbers that are not listed (and ``vhat_{-k} = vhat_k``).
    On the grid ``v`` is a Gaussian ``strength * exp(-x^2 / (2 width^2))`` sampled
    at point separations.
    """

    fourier: np.ndarray | None = None
    positive_type: bool = True
    strength: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.fourier is not None:
            vhat = np.asarray(self.fourier, dtype=float)
            object.__setattr__(self, "fourier", _frozen(vhat))
            if self.positive_type and np.any(vhat < 0):
                raise ValueError("positive-type potential needs nonnegative Fourier coefficients")
        elif self.positive_type and self.strength < 0:
            raise ValueError("positive-type Gaussian needs nonnegative strength")
        if self.width <= 0:
            raise ValueError("Gaussian width must be positive")

    def fourier_lookup(self, basis):
        if self.fourier is None or basis.kind != TORUS:
            raise ValueError("Fourier coefficients are only defined on the torus")
        if len(self.fourier) != basis.mode_count:
            raise ValueError("one Fourier coefficient per mode is required")
        table = {}
        for k, val in zip(basis.wavenumbers, self.fourier):
            table[int(k)] = float(val)
        for k, val in list(table.items()):
            if -k in table and abs(table[-k] - val) > 1e-12:
                raise ValueError(f"potential is not even: vhat({k}) != vhat({-k})")
            table.setdefault(-k, val)
        return table

    def profile(self, x):
        return self.strength * np.exp(-np.asarray(x) ** 2 / (2 * self.width**2))

    def real_space(self, basis, x):
        """Values ``v(x)`` on the torus (trigonometric sum) or via the profile."""
        if basis.kind == TORUS:
            table = self.fourier_lookup(basis)
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x, dtype=complex)
            for k, val in table.items():
                out += val * np.exp(2j * np.pi * k * x / basis.length)
            return out / basis.length
        return self.profile(x)

    def tensor(self, basis):
        """Matrix elements ``<e_p e_q, v e_r e_s>`` as an ``(M, M, M, M)`` array."""
        m = basis.mode_count
        out = np.zeros((m, m, m, m), dtype=complex)
        if basis.kind == TORUS:
            table = self.fourier_lookup(basis)
            k = basis.wavenumbers
            for p in range(m):
                for q in range(m):
                    for r in range(m):
                        for s in range(m):
                            if k[p] + k[q] == k[r] + k[s]:
                                out[p, q, r, s] = table.get(int(k[p] - k[r]), 0.0) / basis.length
            return out
        sep = basis.points[:, None] - basis.points[None, :]
        vals = self.profile(sep)
        for p in range(m):
            for q in range(m):
                out[p, q, p, q] = vals[p, q]
        return out


@dataclass(frozen=True)
class TrapPotential:
    """Nonnegative confining potential sampled on a trapped grid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0):
            raise ValueError("trap potential must be nonnegative")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def harmonic(cls, basis, strength=1.0):
        if basis.kind != GRID:
            raise ValueError("traps live on the trapped grid")
        return cls(strength * basis.points**2)

    def is_confining(self, basis):
        centre = np.argmin(np.abs(basis.points))
        left, right = self.values[: centre + 1], self.values[centre:]
        return bool(np.all(np.diff(left) <= 0) and np.all(np.diff(right) >= 0))

    def matrix(self, basis):
        if basis.kind != GRID:
            raise ValueError("traps live on the trapped grid")
        if len(self.values) != basis.mode_count:
            raise ValueError("trap samples do not match the grid")
        return np.diag(self.values).astype(complex)


@dataclass(frozen=True)
class ScalingParameters:
    particles: int
    order: int = 0

    def __post_init__(self):
        if int(self.particles) != self.particles or self.particles < 2:
            raise ValueError("particle number must be an integer >= 2")
        if int(self.order) != self.order or self.order < 0:
            raise ValueError("expansion order must be a nonnegative integer")

    @property
    def coupling(self):
        """The mean-field coupling ``1/(N-1)``."""
        return 1.0 / (self.particles - 1)

    def check_cutoff(self, n_max):
        if n_max > self.particles:
            raise ValueError(f"Fock cutoff {n_max} exceeds particle number {self.particles}")


@lru_cache(maxsize=None)
def taylor_c(ell, j):
    """Exact ``c_j^{(ell)} = (ell-1/2)(ell+1/2)...(ell+j-3/2)/j!`` for rational ``ell``."""
    ell = Fraction(ell)
    num = Fraction(1)
    for i in range(j):
        num *= ell - Fraction(1, 2) + i
    return num / factorial(j)


@dataclass(frozen=True)
class CoefficientTables:
    """Exact rational coefficient tables used by the expansion.

    ``c[ell][j]`` for half-integer ``ell`` up to ``ell_max``; ``d[j][nu]`` for
    ``0 <= nu <= j``; ``ctilde[ell]`` and ``ctilde2[ell][k]`` for ``k <= ell``.
    """

    j_max: int
    ell_max: Fraction
    c: dict = field(repr=False)
    d: tuple = field(repr=False)
    ctilde: tuple = field(repr=False)
    ctilde2: tuple = field(repr=False)

    def c_float(self, ell, j):
        return float(self.c[Fraction(ell)][j])

    def d_float(self, j, nu):
        return float(self.d[j][nu])

    def ctilde_float(self, ell):
        return float(self.ctilde[ell])

    def ctilde2_float(self, ell, k):
        return float(self.ctilde2[ell][k])


def coefficient_tables(j_max=16, ell_max=2):
    if j_max < 0:
        raise ValueError("j_max must be nonnegative")
    ell_max = Fraction(ell_max)
    if ell_max < 2:
        raise ValueError("ell_max must be at least 2 (ctilde needs c^(3/2))")
    c = {}
    ell = Fraction(0)
    while ell <= ell_max:
        c[ell] = tuple(taylor_c(ell, j) for j in range(j_max + 1))
        ell += Fraction(1, 2)
    d = tuple(
        tuple(sum(taylor_c(0, l) * taylor_c(0, nu - l) * taylor_c(l, j - nu)
                  for l in range(nu + 1))
              for nu in range(j + 1))
        for j in range(j_max + 1))
    ctilde = tuple((-1) ** l * taylor_c(Fraction(3, 2), l) for l in range(j_max + 1))
    ctilde2 = tuple(tuple(ctilde[l - k] * taylor_c(0, k) for k in range(l + 1))
                    for l in range(j_max + 1))
    return CoefficientTables(j_max, ell_max, c, d, ctilde, ctilde2)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class NumericalFailure(RuntimeError):
    """A numerical stage failed; ``stage`` names it for diagnostics."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
