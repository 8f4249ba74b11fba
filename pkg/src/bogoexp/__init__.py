"""Bogoliubov expansions for mean-field bosons on finite mode bases.

Modules, bottom-up: ``core`` (bases, potentials, coefficient tables),
``hartree`` (condensate), ``bogoliubov`` (K-operators, symplectic maps, Wick
rule), ``fock`` (excitation Fock space and its Hamiltonians), ``static`` and
``dynamics`` (the expansions), ``oracle`` (exact N-body reference),
``pipeline`` and ``cli`` (orchestration).
"""

__version__ = "0.1.0"
