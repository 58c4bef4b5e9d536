"""Weak-compactness witnesses and spectral diagnostics at a finite level.

Densities on ``X x X`` are taken with respect to the uniform product
measure.  A witness is stored as a nonnegative integer matrix ``M`` and an
exact rational ``scale``; its value at ``(x, y)`` is ``scale * M[x, y]``.
Only the square-root decomposition and the eigenvalue estimate use floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Sequence

import numpy as np

from .towers import Level, Tower, TowerError

DENSE_CAP = 400


@dataclass
class WitnessVector:
    n: int
    matrix: np.ndarray
    scale: Fraction

    @property
    def size(self):
        return self.matrix.shape[0]

    def values(self) -> np.ndarray:
        return self.matrix * float(self.scale)

    def l1(self) -> Fraction:
        return self.scale * int(self.matrix.sum()) / (self.size * self.size)

    def row_marginal(self) -> list[Fraction]:
        """``(tau x id)(eta)``: integrate out the first coordinate."""
        return [self.scale * int(c) / self.size for c in self.matrix.sum(axis=0)]

    def column_marginal(self) -> list[Fraction]:
        """``(id x tau)(eta)``: integrate out the second coordinate."""
        return [self.scale * int(c) / self.size for c in self.matrix.sum(axis=1)]


def weak_compact_witness(tower: Tower, n: int, D: int | None = None) -> WitnessVector:
    """``eta_n = |X_n| * 1[same level-n fiber]`` on ``X_D x X_D``."""
    D = tower.depth if D is None else D
    if not 0 <= n <= D:
        raise TowerError(f"witness level {n} outside 0..{D}")
    r = tower.rmap(n, D)
    M = (r[:, None] == r[None, :]).astype(np.int64)
    eta = WitnessVector(n, M, Fraction(tower.levels[n].size))
    lv = tower.levels[D]
    for s in range(lv.ngens):
        if invariance_defect(eta, lv.perms[s]) != 0:
            raise AssertionError(f"same-fiber set is not invariant under generator {s + 1}")
    return eta


def invariance_defect(eta: WitnessVector, perm) -> Fraction:
    """``||eta - eta o (s x s)||_1`` for the permutation ``perm`` of the points."""
    p = np.asarray(perm)
    moved = eta.matrix[np.ix_(p, p)]
    return eta.scale * int(np.abs(eta.matrix - moved).sum()) / (eta.size * eta.size)


def leak(eta: WitnessVector, A) -> Fraction:
    """``||1_{A x (X minus A)} eta||_1``."""
    inside = np.zeros(eta.size, dtype=bool)
    inside[np.asarray(list(A), dtype=np.int64)] = True
    block = eta.matrix[np.ix_(inside, ~inside)]
    return eta.scale * int(block.sum()) / (eta.size * eta.size)


@dataclass
class WCReport:
    l1: Fraction
    marginals_one: bool
    leaks: list
    invariance: list

    @property
    def holds(self):
        return (self.l1 == 1 and self.marginals_one and all(v == 0 for _, v in self.leaks)
                and all(v == 0 for _, v in self.invariance))


def check_wc_conditions(eta: WitnessVector, level: Level, sets: Sequence = (),
                        words: Sequence[Sequence[int]] | None = None) -> WCReport:
    """Exact values of the three witness conditions.

    ``sets`` are point subsets ``A`` for the leak term, ``words`` the group
    elements for the invariance defect (default: the generators).
    """
    if level.size != eta.size:
        raise ValueError("witness and level have different sizes")
    if words is None:
        words = [(s + 1,) for s in range(level.ngens)]
    ones = all(v == 1 for v in eta.row_marginal()) and all(v == 1 for v in eta.column_marginal())
    leaks = [(tuple(sorted(int(a) for a in A)), leak(eta, A)) for A in sets]
    inv = [(tuple(w), invariance_defect(eta, level.word_perm(w))) for w in words]
    return WCReport(eta.l1(), ones, leaks, inv)


def leak_closed_form(eta_level_size: int, mu_A: Fraction, mu_F: Fraction) -> Fraction:
    """Leak of a set ``A`` inside a single witness fiber ``F``."""
    return eta_level_size * mu_A * (mu_F - mu_A)


def push_witness(eta: WitnessVector, tower: Tower, m: int, D: int | None = None) -> WitnessVector:
    """Conditional expectation of ``eta`` onto ``X_m x X_m`` along the quotient map."""
    D = tower.depth if D is None else D
    if eta.size != tower.levels[D].size:
        raise ValueError("witness does not live on level D")
    r = tower.rmap(m, D)
    k = tower.levels[m].size
    R = np.zeros((eta.size, k), dtype=np.int64)
    R[np.arange(eta.size), r] = 1
    blocks = R.T @ eta.matrix @ R
    f = eta.size // k
    return WitnessVector(min(eta.n, m), blocks, eta.scale / (f * f))


# --- square-root decomposition ----------------------------------------------


@dataclass
class SpectralReport:
    size: int
    n: int
    norm_xi: float
    norm_xi0: float
    norm_xi1: float
    norm_xi2: float
    k: int | None = None
    partition_norm: float | None = None
    scaled: list = field(default_factory=list)
    bound: float | None = None
    projected_xi0: float | None = None
    eigenvalue: float | None = None
    residual: float | None = None
    iterations: int | None = None
    seed: int | None = None

    @property
    def pythagoras_error(self):
        total = self.norm_xi0 ** 2 + self.norm_xi1 ** 2 + self.norm_xi2 ** 2
        return abs(self.norm_xi ** 2 - total) / max(self.norm_xi ** 2, 1e-300)


def _l2(f: np.ndarray) -> float:
    return float(np.sqrt(np.sum(f * f) / f.size))


def decompose(xi: np.ndarray):
    """``xi = xi0 + xi1 + xi2`` with ``xi1`` in ``L2 x 1`` and ``xi2`` in ``1 x L2_0``."""
    rows = xi.mean(axis=1, keepdims=True)
    cols = xi.mean(axis=0, keepdims=True)
    total = xi.mean()
    xi1 = np.broadcast_to(rows, xi.shape).copy()
    xi2 = np.broadcast_to(cols - total, xi.shape).copy()
    xi0 = xi - xi1 - xi2
    return xi0, xi1, xi2


def xi_decomposition(tower: Tower, n: int, D: int | None = None) -> SpectralReport:
    eta = weak_compact_witness(tower, n, D)
    xi = np.sqrt(eta.values())
    xi0, xi1, xi2 = decompose(xi)
    return SpectralReport(eta.size, n, _l2(xi), _l2(xi0), _l2(xi1), _l2(xi2))


def default_partition(tower: Tower, n: int, k: int, D: int | None = None) -> list[np.ndarray]:
    """``k`` equal-measure blocks; unions of level-``n`` fibers when ``k`` divides ``|X_n|``."""
    D = tower.depth if D is None else D
    size = tower.levels[D].size
    if size % k:
        raise ValueError(f"k={k} does not divide |X_D|={size}")
    coarse = tower.levels[n].size
    if coarse % k == 0:
        r = tower.rmap(n, D)
        block = r * k // coarse
    else:
        block = np.arange(size) * k // size
    return [np.flatnonzero(block == i) for i in range(k)]


def partition_bound_check(tower: Tower, n: int, k: int, partition=None, D: int | None = None,
                          tol: float = 1e-10) -> SpectralReport:
    """Lower bound ``||xi0|| >= ||P xi|| - 2 sqrt(1/k)`` for ``P = sum_i 1_{A_i x A_i}``.

    Also checks ``||P xi^j|| = sqrt(1/k) ||xi^j||`` for ``j = 1, 2``.
    """
    D = tower.depth if D is None else D
    if partition is None:
        partition = default_partition(tower, n, k, D)
    size = tower.levels[D].size
    if len(partition) != k or any(len(A) * k != size for A in partition):
        raise ValueError("partition must consist of k blocks of equal measure")
    label = np.full(size, -1)
    for i, A in enumerate(partition):
        label[np.asarray(A)] = i
    if (label < 0).any():
        raise ValueError("partition does not cover the level")
    P = (label[:, None] == label[None, :]).astype(float)

    rep = xi_decomposition(tower, n, D)
    eta = weak_compact_witness(tower, n, D)
    xi = np.sqrt(eta.values())
    xi0, xi1, xi2 = decompose(xi)
    c = sqrt(1 / k)
    for j, part in ((1, xi1), (2, xi2)):
        lhs, rhs = _l2(P * part), c * _l2(part)
        if abs(lhs - rhs) > tol * max(1.0, rhs):
            raise AssertionError(f"partition scaling fails for xi{j}: {lhs} vs {rhs}")
        rep.scaled.append((j, lhs, rhs))
    rep.k = k
    rep.partition_norm = _l2(P * xi)
    rep.projected_xi0 = _l2(P * xi0)
    rep.bound = rep.partition_norm - 2 * c
    if rep.norm_xi0 + tol < rep.projected_xi0 or rep.projected_xi0 + tol < rep.bound:
        raise AssertionError("decomposition bound violated")
    return rep


# --- averaging operator -----------------------------------------------------


@dataclass
class GapEstimate:
    value: float
    residual: float
    iterations: int
    seed: int


def spectral_gap_estimate(level: Level, words: Sequence[Sequence[int]] | None = None,
                          iterations: int = 500, seed: int = 0, tol: float = 0.0,
                          cap: int = DENSE_CAP) -> GapEstimate:
    """Power iteration for ``(1/2|S|) sum_{s in S u S^-1} pi0(s) x pi0(s)``.

    The operator ``M`` acts on matrices ``V`` with zero row and column sums by
    ``V -> V[s^-1 x, s^-1 y]``.  Odd permutations can give ``M`` the
    eigenvalue -1 next to +1, so the iteration runs on ``M^2``; each
    iteration is one application of ``M^2``.  The estimate is ``||M V||``
    for the unit iterate ``V`` (top singular value) and the residual is
    ``||M^2 V - <V, M^2 V> V||``.  Stops early once the residual is at most
    ``tol``.
    """
    N = level.size
    if N > cap:
        raise ValueError(f"|X|={N} exceeds the dense cap {cap}")
    if words is None:
        words = [(s + 1,) for s in range(level.ngens)]
    perms = []
    for w in words:
        p = level.word_perm(w)
        inv = np.empty_like(p)
        inv[p] = np.arange(N)
        perms += [inv, p]  # pi(s) pulls back along s^-1, pi(s^-1) along s

    def center(V):
        V = V - V.mean(axis=0, keepdims=True)
        return V - V.mean(axis=1, keepdims=True)

    def apply(V):
        out = np.zeros_like(V)
        for q in perms:
            out += V[np.ix_(q, q)]
        return out / len(perms)

    rng = np.random.default_rng(seed)
    V = center(rng.standard_normal((N, N)))
    norm = np.linalg.norm(V)
    if N < 2 or norm == 0:
        return GapEstimate(0.0, 0.0, 0, seed)
    V /= norm
    value, residual, it = 0.0, float("inf"), 0
    for it in range(1, iterations + 1):
        W = apply(apply(V))
        rq = float(np.sum(V * W))
        value = sqrt(max(rq, 0.0))
        residual = float(np.linalg.norm(W - rq * V))
        norm = float(np.linalg.norm(W))
        if norm == 0:
            break
        V = center(W / norm)
        if residual <= tol:
            break
    return GapEstimate(value, residual, it, seed)
