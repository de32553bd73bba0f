"""Binary entropy and the pairwise conditional-entropy lower bound.

For a classical-quantum state

    rho_AE = 1/N |0><0| (x) sum_i |E_i><E_i| + 1/N |1><1| (x) sum_i |F_i><F_i|

H(A|E) is bounded below by a sum over any subset of the pairs (E_i, F_i),
each pair contributing a quantity that depends only on the two norms and the
magnitude of their overlap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from msqkd.errors import DegenerateTermError, InvalidParameterError

_TOL = 1e-12


@dataclass(frozen=True)
class EntropyTerm:
    """One (E, F) pair: squared norms ``nE``, ``nF`` and a lower bound on |<E|F>|."""

    nE: float
    nF: float
    overlap: float

    def __post_init__(self):
        if self.nE < -_TOL or self.nF < -_TOL or self.overlap < -_TOL:
            raise InvalidParameterError(f"negative entry in {self}")
        cap = math.sqrt(max(self.nE, 0.0) * max(self.nF, 0.0))
        if self.overlap > cap + _TOL:
            raise InvalidParameterError(
                f"overlap {self.overlap} exceeds Cauchy-Schwarz cap {cap}"
            )

    @property
    def weight(self) -> float:
        return self.nE + self.nF


def binary_entropy(x: float) -> float:
    if x < -_TOL or x > 1 + _TOL:
        raise InvalidParameterError(f"binary entropy argument {x} outside [0, 1]")
    x = min(max(x, 0.0), 1.0)
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def shannon_entropy(probs: Iterable[float]) -> float:
    """Shannon entropy in bits; zero entries contribute nothing."""
    return -sum(p * math.log2(p) for p in probs if p > 0)


def lambda_of(term: EntropyTerm) -> float:
    total = term.nE + term.nF
    if total <= 0:
        raise DegenerateTermError("lambda undefined for a term with nE + nF = 0")
    root = math.sqrt((term.nE - term.nF) ** 2 + 4 * term.overlap**2)
    lam = 0.5 * (1 + root / total)
    return min(max(lam, 0.5), 1.0)


def term_contribution(term: EntropyTerm, N: float) -> float:
    """Single summand of the bound, floored at zero (dropping it is allowed)."""
    total = term.weight
    if total <= 0:
        return 0.0
    value = (total / N) * (binary_entropy(term.nE / total) - binary_entropy(lambda_of(term)))
    return max(value, 0.0)


def pairwise_entropy_bound(terms: Iterable[EntropyTerm], N: float) -> float:
    if N <= 0:
        raise InvalidParameterError(f"normalization must be positive, got {N}")
    return sum(term_contribution(t, N) for t in terms)
