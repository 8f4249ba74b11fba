"""Named model fixtures used by tests, the acceptance suite and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GRID, TORUS, InteractionPotential, TrapPotential, build_basis


@dataclass(frozen=True)
class Fixture:
    name: str
    kind: str
    mode_count: int
    length: float
    fourier: tuple | None = None
    strength: float = 0.0
    width: float = 1.0
    trap_strength: float | None = None
    n_max: int = 12
    dt: float = 0.00125
    description: str = ""

    @property
    def basis(self):
        return build_basis(self.kind, self.mode_count, self.length)

    @property
    def potential(self):
        if self.fourier is not None:
            return InteractionPotential(np.array(self.fourier, dtype=float))
        return InteractionPotential(strength=self.strength, width=self.width)

    @property
    def trap(self):
        if self.trap_strength is None:
            return None
        return TrapPotential.harmonic(self.basis, self.trap_strength)


FIXTURES = {
    "T3": Fixture("T3", TORUS, 3, 1.0, fourier=(1.0, 0.5, 0.5), n_max=12,
                  description="three plane waves on the unit torus, positive-type potential"),
    "G3": Fixture("G3", GRID, 3, 3.0, strength=3.0, width=1.0, trap_strength=1.0, n_max=20,
                  description="three-point trapped grid, Gaussian repulsion, harmonic trap"),
    "G64": Fixture("G64", GRID, 64, 8.0, strength=2.0, width=0.5, trap_strength=1.0, n_max=4,
                   description="resolved trapped grid for mean-field runs"),
    "FREE3": Fixture("FREE3", TORUS, 3, 1.0, fourier=(0.0, 0.0, 0.0), n_max=6,
                     description="non-interacting torus (smoke test)"),
}


def get_fixture(name):
    try:
        return FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(sorted(FIXTURES))}") from None
