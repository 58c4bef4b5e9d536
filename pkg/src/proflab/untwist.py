"""Deciding cohomology, extracting homomorphisms, and the zoom pipeline.

Two independent cohomology deciders are provided: an orbit computation on
the product action ``X x Lambda`` (complete for finite targets) and a
spanning-tree propagation that reduces the question to the choice of one
value at a base point.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .cocycles import (
    Cocycle,
    concentration,
    factor_cocycle,
    factorization_level,
    lift_cocycle,
    make_hom_cocycle,
    projection_inner,
    restrict_cocycle,
    twist_by_coboundary,
    value_distribution,
)
from .groups import GroupContext, encode, invert_word
from .towers import IntransitiveError, Tower, transversal_words

SEVEN_EIGHTHS = Fraction(7, 8)
PAIR_CHECK_LIMIT = 12


class Verdict(enum.Enum):
    COHOMOLOGOUS = "cohomologous"
    NOT_COHOMOLOGOUS = "not_cohomologous"
    UNKNOWN = "unknown"


class Status(enum.Enum):
    FACTORED = "Factored"
    FIBER_UNTWIST_ONLY = "FiberUntwistOnly"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class FiniteGroupTable:
    """Index-level multiplication for a finite target group."""

    elements: list
    index: dict
    mul: np.ndarray
    inv: np.ndarray

    @classmethod
    def of(cls, ctx: GroupContext, cap: int = 5000):
        if not ctx.is_finite:
            raise ValueError(f"{ctx.describe()} is not finite")
        en = ctx.enumerate(cap)
        els, idx = en.elements, en.index
        L = len(els)
        mul = np.empty((L, L), dtype=np.int64)
        for i, a in enumerate(els):
            mul[i] = [idx[a * b] for b in els]
        inv = np.array([idx[a.inv()] for a in els], dtype=np.int64)
        return cls(els, idx, mul, inv)


_TABLES: dict = {}


def group_table(ctx: GroupContext) -> FiniteGroupTable:
    key = (ctx.kind, ctx.n, ctx.modulus, ctx.generators)
    if key not in _TABLES:
        _TABLES[key] = FiniteGroupTable.of(ctx)
    return _TABLES[key]


@dataclass
class Census:
    orbits: int
    sizes: Counter


def _same_source(w1, w2):
    if w1.source is not w2.source and (
        w1.size != w2.size or not all(np.array_equal(p, q) for p, q in zip(w1.source.perms, w2.source.perms))
    ):
        raise ValueError("cocycles live on different actions")


def _product_orbits(w1: Cocycle, w2: Cocycle, T: FiniteGroupTable):
    """Component labels of the action (x, l) -> (s x, w1(s,x) l w2(s,x)^-1)."""
    X, L = w1.size, len(T.elements)
    lam = np.arange(L)
    rows, cols = [], []
    for s in range(w1.ngens):
        p = w1.source.perms[s]
        for x in range(X):
            a = T.index[w1.table[s][x]]
            b = T.inv[T.index[w2.table[s][x]]]
            img = T.mul[T.mul[a, lam], b]
            rows.append(x * L + lam)
            cols.append(int(p[x]) * L + img)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(X * L, X * L))
    ncomp, labels = connected_components(graph, directed=True, connection="weak")
    return ncomp, labels.reshape(X, L)


def cohomologous_finite(w1: Cocycle, w2: Cocycle):
    """Decide whether ``w1 = phi(s x) w2(s, x) phi(x)^-1`` for some ``phi``.

    Computes every orbit of the product action on ``X x Lambda``; ``phi``
    exists iff, on each orbit of ``X``, some product orbit meets every
    ``x`` exactly once (its graph is ``phi``).  Returns ``(phi or None, census)``.
    """
    _same_source(w1, w2)
    T = group_table(w1.target)
    ncomp, labels = _product_orbits(w1, w2, T)
    X = w1.size
    sizes = np.bincount(labels.ravel(), minlength=ncomp)
    census = Census(int(ncomp), Counter(int(s) for s in sizes))
    # product orbits lie over X-orbits; handle each X-orbit separately
    seen = np.zeros(X, dtype=bool)
    phi = [None] * X
    for x0 in range(X):
        if seen[x0]:
            continue
        order, _ = w1.source.bfs(x0)
        seen[order] = True
        chosen = None
        e = T.index[w1.target.identity()]
        cand = [e] + [l for l in range(len(T.elements)) if l != e]
        for l0 in cand:
            c = labels[x0, l0]
            if sizes[c] != len(order):
                continue
            hits = np.argwhere(labels[order] == c)
            if len(hits) == len(order) and len(np.unique(hits[:, 0])) == len(order):
                chosen = c
                break
        if chosen is None:
            return None, census
        for i, l in np.argwhere(labels == chosen):
            phi[int(i)] = T.elements[int(l)]
    if twist_by_coboundary(w2, phi) != w1:
        raise AssertionError("orbit graph does not twist w2 into w1")
    return phi, census


def cohomologous_tree(w1: Cocycle, w2: Cocycle, candidates: Sequence | None = None):
    """Spanning-tree solver: fix ``phi(x0) = l0`` and propagate along a BFS tree.

    Each non-tree edge gives a constraint ``u l0 = l0 v``.  With
    ``candidates=None`` the whole (finite) target is tried.  Returns
    ``(Verdict, phi or None)``; ``UNKNOWN`` means a supplied candidate list
    ran out without deciding the question.
    """
    _same_source(w1, w2)
    src = w1.source
    order, _ = src.bfs(0)
    if len(order) != src.size:
        raise IntransitiveError("cohomologous_tree needs a transitive action")
    e = w1.target.identity()
    A, B = [None] * src.size, [None] * src.size
    A[0] = B[0] = e
    for x in order:
        for s in range(src.ngens):
            y = int(src.perms[s][x])
            if A[y] is None:
                A[y] = w1.table[s][x] * A[x]
                B[y] = w2.table[s][x] * B[x]
    constraints = set()
    for s in range(src.ngens):
        for x in range(src.size):
            y = int(src.perms[s][x])
            u = A[y].inv() * w1.table[s][x] * A[x]
            v = B[y].inv() * w2.table[s][x] * B[x]
            if not (u.is_identity() and v.is_identity()):
                constraints.add((u, v))
    constraints = sorted(constraints, key=lambda uv: (encode(uv[0]), encode(uv[1])))
    exhaustive = candidates is None
    if exhaustive:
        if not w1.target.is_finite:
            raise ValueError("an infinite target needs an explicit candidate list")
        candidates = group_table(w1.target).elements
    for l0 in candidates:
        if all(u * l0 == l0 * v for u, v in constraints):
            phi = [A[x] * l0 * B[x].inv() for x in range(src.size)]
            if twist_by_coboundary(w2, phi) != w1:
                raise AssertionError("tree solution fails to twist w2 into w1")
            return Verdict.COHOMOLOGOUS, phi
    return (Verdict.NOT_COHOMOLOGOUS if exhaustive else Verdict.UNKNOWN), None


def majority_hom(w: Cocycle, words: Sequence[Sequence[int]], pairs=None):
    """Strict-majority value per word, checked for multiplicativity on pairs.

    ``pairs`` defaults to all ordered pairs of ``words``.

    Returns ``{word: value}`` or ``None`` if some word (or pair product) has no
    value of mass above 1/2, or if ``psi(uv) != psi(u) psi(v)`` for a pair.
    """
    half = Fraction(1, 2)

    def major(word):
        for lam, mass in value_distribution(w, word).items():
            if mass > half:
                return lam
        return None

    words = [tuple(u) for u in words]
    psi = {}
    for u in words:
        lam = major(u)
        if lam is None:
            return None
        psi[u] = lam
    if pairs is None:
        pairs = [(u, v) for u in words for v in words]
    for u, v in pairs:
        u, v = tuple(u), tuple(v)
        if u not in psi or v not in psi:
            raise ValueError("pairs must be drawn from the supplied words")
        uv = major(u + v)
        if uv is None or uv != psi[u] * psi[v]:
            return None
    return psi


def threshold_gate(w: Cocycle, words: Sequence[Sequence[int]], threshold: Fraction = SEVEN_EIGHTHS):
    """``(min concentration > threshold, min concentration, per-word list)``; strict."""
    concs = [(tuple(u), concentration(w, u)) for u in words]
    low = min((c for _, c in concs), default=Fraction(1))
    return low > threshold, low, concs


def _value_ball(w: Cocycle, radius: int = 2):
    vals = {v for col in w.table for v in col}
    vals |= {v.inv() for v in vals}
    ball = {w.target.identity()} | vals
    for _ in range(radius - 1):
        ball |= {a * b for a in ball for b in vals}
    return sorted(ball, key=encode)


def untwist_to_hom(w: Cocycle):
    """Find ``psi`` on generators and ``phi`` with ``twist(hom(psi), phi) = w``.

    Returns ``(psi, phi)`` or ``None``.
    """
    gens = [(s + 1,) for s in range(w.ngens)]
    # the exact cohomology solve below is the real check; the pair test is a
    # cheap early exit, so keep it small when there are many generators
    if len(gens) <= PAIR_CHECK_LIMIT:
        pairs = [(u, v) for u in gens for v in gens]
    else:
        pairs = list(zip(gens, gens[1:] + gens[:1]))
    maj = majority_hom(w, gens, pairs)
    if maj is None:
        return None
    psi = [maj[g] for g in gens]
    hom = make_hom_cocycle(w.source, psi, w.target)
    if w.target.is_finite:
        phi, _ = cohomologous_finite(w, hom)
    else:
        verdict, phi = cohomologous_tree(w, hom, _value_ball(w))
    if phi is None:
        return None
    return psi, phi


@dataclass
class AveragingResult:
    eta: dict
    distance_sq: Fraction
    phi: list
    covers: bool
    valid: bool


def averaging_invariant_vector(w1: Cocycle, w2: Cocycle) -> AveragingResult:
    """Project ``xi = 1[lambda = e]`` onto invariant vectors of the product action.

    On a finite set the projection is the orbit mean.  ``phi(x)`` is the
    unique value with ``eta(x, phi(x)) > 1/2`` when there is one.
    ``distance_sq`` is ``||eta - xi||^2`` for the measure ``mu x counting``.
    """
    _same_source(w1, w2)
    T = group_table(w1.target)
    ncomp, labels = _product_orbits(w1, w2, T)
    X, L = labels.shape
    e = T.index[w1.target.identity()]
    sizes = np.bincount(labels.ravel(), minlength=ncomp)
    ecount = np.bincount(labels[:, e], minlength=ncomp)
    eta, dist = {}, Fraction(0)
    phi = [None] * X
    half = Fraction(1, 2)
    for x in range(X):
        above = []
        for l in range(L):
            c = labels[x, l]
            val = Fraction(int(ecount[c]), int(sizes[c]))
            if val:
                eta[(x, T.elements[l])] = val
            xi = 1 if l == e else 0
            dist += (val - xi) ** 2
            if val > half:
                above.append(l)
        if len(above) == 1:
            phi[x] = T.elements[above[0]]
    dist /= X
    covers = all(p is not None for p in phi)
    valid = covers and twist_by_coboundary(w2, phi) == w1
    return AveragingResult(eta, dist, phi, covers, valid)


# --- the zoom pipeline ------------------------------------------------------


@dataclass
class UntwistReport:
    status: Status
    delta: Fraction
    gate: Fraction
    n: int | None = None
    a: int | None = None
    N: int | None = None
    concentrations: list = field(default_factory=list)
    psi: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    factored: Cocycle | None = None
    untwisted: Cocycle | None = None
    best: tuple | None = None
    level_profile: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def superrigidity_pipeline(tower: Tower, w: Cocycle, delta: Fraction = Fraction(1, 2),
                           profile: bool = True) -> UntwistReport:
    """Zoom in to a fiber where ``w`` is almost constant, untwist there, spread out.

    1. scan levels ``n = 0..D`` and fibers ``a`` (BFS order) for the first
       restricted cocycle whose generator concentrations all exceed
       ``1 - delta^2/8``;
    2. untwist the restricted cocycle to a homomorphism ``psi`` on the
       Schreier generators;
    3. move the untwisted fiber around with transversal words ``g_b``,
       ``phi_b(x) = w1(g_b^-1, x)``;
    4. find the level ``N`` the result factors through and read off ``w''``.

    A Factored report satisfies ``twist(w, phi) == lift(w'', D)`` exactly.
    """
    delta = Fraction(delta)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1) so that 1 - delta^2/8 > 7/8")
    gate = 1 - delta * delta / 8
    D = w.level
    if w.tower is not tower or D is None:
        raise ValueError("cocycle must live on a level of the tower")
    rep = UntwistReport(Status.INCONCLUSIVE, delta, gate)
    rep.notes.append("relative property (T) is not certified; conclusions are verified directly")
    if profile:
        for n in range(D + 1):
            low = min(projection_inner(tower, w, (s + 1,), n, check=False) for s in range(w.ngens))
            rep.level_profile.append((n, low))

    chosen = None
    for n in range(D + 1):
        for a in range(tower.levels[n].size):
            rc = restrict_cocycle(tower, w, n, a)
            ok, low, concs = threshold_gate(rc, [(s + 1,) for s in range(rc.ngens)], gate)
            if rep.best is None or low > rep.best[2]:
                rep.best = (n, a, low)
            if ok:
                chosen = (n, a, rc, concs)
                break
        if chosen:
            break
    if chosen is None:
        rep.notes.append("no fiber reaches the concentration gate")
        return rep
    n, a, rc, concs = chosen
    rep.n, rep.a = n, a
    rep.concentrations = [(rc.gen_words[i], c) for i, (_, c) in enumerate(concs)]

    res = untwist_to_hom(rc)
    if res is None:
        rep.notes.append("gate passed but the fiber cocycle did not untwist")
        return rep
    psi, phi_loc = res
    rep.psi = list(zip(rc.gen_words, psi))
    e = w.target.identity()
    phi1 = [e] * w.size
    for i, x in enumerate(rc.base_points):
        phi1[x] = phi_loc[i].inv()
    w1 = twist_by_coboundary(w, phi1)

    gam = transversal_words(tower, n, a)
    r = tower.rmap(n, D)
    phi5 = [w1.eval(invert_word(gam[int(r[x])]), x) for x in range(w.size)]
    w2 = twist_by_coboundary(w1, phi5)
    total = [p5 * p1 for p5, p1 in zip(phi5, phi1)]

    checks = []
    fiber_const = all(
        _restricted_constant(tower, w2, n, b) for b in range(tower.levels[n].size)
    )
    checks.append(("restricted cocycles constant on every fiber", fiber_const))
    N = factorization_level(tower, w2)
    wpp = factor_cocycle(tower, w2, N)
    chain_ok = twist_by_coboundary(w, total) == lift_cocycle(tower, wpp, D) == w2
    checks.append(("twist chain reproduces the lifted factor", chain_ok))
    rep.phi = total
    rep.untwisted = w2
    if all(ok for _, ok in checks):
        rep.status = Status.FACTORED
        rep.N, rep.factored = N, wpp
    else:
        rep.status = Status.FIBER_UNTWIST_ONLY
        rep.notes += [f"check failed: {name}" for name, ok in checks if not ok]
    return rep


def _restricted_constant(tower, w, n, b):
    rc = restrict_cocycle(tower, w, n, b)
    return all(len(set(col)) == 1 for col in rc.table)
