"""Number-theoretic invariants: the prime-set distinguisher, S-invariant sets, index formula.

Everything here is exact integer or rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import prod
from typing import Sequence

from sympy import isprime

from .groups import sln_order

DEFAULT_SHIFT_BOUND = 8


@dataclass(frozen=True)
class PrimeSequence:
    primes: tuple

    def __init__(self, primes: Sequence[int]):
        ps = tuple(int(p) for p in primes)
        for p in ps:
            if not isprime(p):
                raise ValueError(f"{p} is not prime")
        if any(a >= b for a, b in zip(ps, ps[1:])):
            raise ValueError("primes must be strictly increasing")
        object.__setattr__(self, "primes", ps)

    @property
    def depth(self):
        return len(self.primes)

    def __len__(self):
        return len(self.primes)

    def __getitem__(self, i):
        return self.primes[i]


@dataclass(frozen=True)
class StageVerdict:
    stage: int
    shift: int
    missing: tuple
    product: int
    obstructed: bool

    @property
    def verdict(self):
        return "Obstructed" if self.obstructed else "Consistent"


def distinguisher(n: int, I1, I2, B: int, shift_bound: int = DEFAULT_SHIFT_BOUND) -> list[StageVerdict]:
    """Stage-by-stage test of ``prod_{p in P_k} |SL_n(F_p)| <= B``.

    ``P_k`` is the set of the first ``k`` primes of ``I1`` that are missing
    from ``I2`` after dropping its first ``l`` entries.  A stage is
    Obstructed when the product exceeds ``B`` for every admissible shift
    ``l <= min(shift_bound, k - 1)``; the reported shift is the one with the
    smallest product.
    """
    I1 = I1 if isinstance(I1, PrimeSequence) else PrimeSequence(I1)
    I2 = I2 if isinstance(I2, PrimeSequence) else PrimeSequence(I2)
    B = Fraction(B)
    if B < 1:
        raise ValueError("index bound must be at least 1")
    out = []
    for k in range(1, len(I1) + 1):
        best = None
        for l in range(min(shift_bound, k - 1) + 1):
            tail = set(I2.primes[l:])
            missing = tuple(p for p in I1.primes[:k] if p not in tail)
            value = prod(sln_order(n, p) for p in missing)
            if best is None or value < best[2]:
                best = (l, missing, value)
        l, missing, value = best
        out.append(StageVerdict(k, l, missing, value, value > B))
    return out


def first_obstruction(stages: Sequence[StageVerdict]):
    for st in stages:
        if st.obstructed:
            return st
    return None


@dataclass(frozen=True)
class SInvariantSpec:
    """Truncated description of ``S = {m / |X_i|}``.

    ``kind`` is ``"congruence"`` (``sizes`` are the level sizes) or
    ``"affine"`` (``sizes`` are ``d_i ** n`` for the moduli ``d_i``).
    """

    kind: str
    sizes: tuple
    dim: int | None = None
    moduli: tuple | None = None

    @classmethod
    def congruence(cls, sizes: Sequence[int]):
        sizes = tuple(int(s) for s in sizes)
        if any(s < 1 for s in sizes) or any(a >= b for a, b in zip(sizes, sizes[1:])):
            raise ValueError("level sizes must be positive and strictly increasing")
        return cls("congruence", sizes)

    @classmethod
    def affine(cls, n: int, moduli: Sequence[int]):
        moduli = tuple(int(d) for d in moduli)
        if any(d < 2 for d in moduli):
            raise ValueError("moduli must be at least 2")
        if any(b % a for a, b in zip(moduli, moduli[1:])) or len(set(moduli)) != len(moduli):
            raise ValueError("moduli must form a strictly increasing divisibility chain")
        return cls("affine", tuple(d ** n for d in moduli), n, moduli)


@dataclass(frozen=True)
class Membership:
    member: bool
    numerator: int | None = None
    index: int | None = None

    def __str__(self):
        if not self.member:
            return "NotAtTruncation"
        return f"Member({self.numerator},{self.index})"


def s_invariant_membership(spec: SInvariantSpec, t) -> Membership:
    """Find ``t = m / sizes[i-1]`` with the smallest 1-based ``i``.

    A negative answer only says no representation exists within the
    truncation; the full set is infinite.
    """
    t = Fraction(t)
    if t <= 0:
        raise ValueError("t must be positive")
    for i, size in enumerate(spec.sizes, start=1):
        m = t * size
        if m.denominator == 1:
            return Membership(True, int(m), i)
    return Membership(False)


def s_closure_check(spec: SInvariantSpec, t, multipliers: Sequence[int]) -> list[bool]:
    """Integer-multiple closure: is ``k t`` a member for each multiplier ``k``?"""
    t = Fraction(t)
    if not s_invariant_membership(spec, t).member:
        raise ValueError(f"{t} is not a member at this truncation")
    return [s_invariant_membership(spec, k * t).member for k in multipliers]


def t_formula(index_gamma: int, index_lambda: int) -> Fraction:
    """Compression constant ``[Gamma : Gamma_{a,n}] / [Lambda : Lambda_0]``."""
    if index_gamma < 1 or index_lambda < 1:
        raise ValueError("indices must be positive integers")
    return Fraction(index_gamma, index_lambda)


def mu_y0(index_lambda: int) -> Fraction:
    """Measure of the subset ``Y_0`` attached to a subgroup of index ``[Lambda : Lambda_0]``."""
    if index_lambda < 1:
        raise ValueError("index must be a positive integer")
    return Fraction(1, index_lambda)
