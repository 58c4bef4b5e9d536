"""Cocycles over finite actions, their twists, and exact value statistics.

A cocycle is stored only on generators: ``table[s][x] = w(g_s, x)``.  Values
on words follow from ``w(g h, x) = w(g, h x) w(h, x)`` and inverse letters use
``w(g^-1, x) = w(g, g^-1 x)^-1``.  The source group is whatever the level's
generator permutations generate; tables built by the constructors below are
cocycles of the acting group by construction.
"""

from __future__ import annotations

import random
from collections import Counter
from fractions import Fraction
from typing import Sequence

import numpy as np

from .groups import GroupContext, Mat, context_from_descriptor, decode, encode
from .towers import Level, Tower, TowerError, schreier_stabilizer


class CocycleError(ValueError):
    pass


class Cocycle:
    """Generator-by-point table of target elements over a finite action."""

    def __init__(self, source: Level, target: GroupContext, table, *, tower: Tower | None = None,
                 level: int | None = None, gen_words=None, base_points=None):
        self.source = source
        self.target = target
        self.table = tuple(tuple(col) for col in table)
        if len(self.table) != source.ngens or any(len(c) != source.size for c in self.table):
            raise CocycleError("table shape must be (generators, points)")
        self.tower = tower
        self.level = level
        # for restricted cocycles: ambient words of the source generators and
        # the ambient indices of the source points
        self.gen_words = gen_words
        self.base_points = base_points
        self._inv = None

    @property
    def size(self):
        return self.source.size

    @property
    def ngens(self):
        return self.source.ngens

    def _inverse_table(self):
        if self._inv is None:
            inv = []
            for s, col in enumerate(self.table):
                ip = self.source.inv_perms[s]
                inv.append(tuple(col[int(ip[x])].inv() for x in range(self.size)))
            self._inv = tuple(inv)
        return self._inv

    def letter_value(self, a: int, x: int):
        if a > 0:
            return self.table[a - 1][x]
        return self._inverse_table()[-a - 1][x]

    def eval(self, word: Sequence[int], x: int):
        acc = self.target.identity()
        for a in reversed(word):
            acc = self.letter_value(a, x) * acc
            x = int(self.source.letter_perm(a)[x])
        return acc

    def values(self, word: Sequence[int]) -> list:
        """``[w(word, x) for x in points]`` in one sweep."""
        n = self.size
        acc = [self.target.identity()] * n
        y = np.arange(n)
        for a in reversed(word):
            col = self.table[a - 1] if a > 0 else self._inverse_table()[-a - 1]
            acc = [col[int(y[x])] * acc[x] for x in range(n)]
            y = self.source.letter_perm(a)[y]
        return acc

    def __eq__(self, other):
        return (isinstance(other, Cocycle) and self.source.size == other.source.size
                and self.table == other.table)

    def __hash__(self):
        return hash(self.table)

    def __repr__(self):
        return f"Cocycle(points={self.size}, gens={self.ngens}, target={self.target.describe()!r})"


def eval_cocycle(w: Cocycle, word: Sequence[int], x: int):
    return w.eval(word, x)


def make_hom_cocycle(source: Level, psi: Sequence, target: GroupContext, relators=(), **kw) -> Cocycle:
    """Constant-in-x cocycle ``w(g_s, x) = psi[s]``."""
    psi = list(psi)
    if len(psi) != source.ngens:
        raise CocycleError("need one image per generator")
    for g in psi:
        if not target.contains(g):
            raise CocycleError(f"{g!r} is not in {target.describe()}")
    for r in relators:
        v = target.identity()
        for a in r:
            v = v * (psi[a - 1] if a > 0 else psi[-a - 1].inv())
        if not v.is_identity():
            raise CocycleError(f"images violate relator {tuple(r)}")
    return Cocycle(source, target, [[g] * source.size for g in psi], **kw)


def hom_from_map(tower: Tower, level: int, target: GroupContext, f) -> Cocycle:
    """Homomorphism cocycle from a map ``f`` on the tower's group generators."""
    psi = [f(g) for g in tower.group.generators]
    return make_hom_cocycle(tower.levels[level], psi, target, tower=tower, level=level)


def make_transversal_cocycle(tower: Tower, n: int) -> Cocycle:
    """``v(s, x) = t_{s x}^-1 s t_x`` with BFS transversal elements ``t_x``.

    Every value stabilizes the base point of level ``n``; for congruence
    towers that means it lies in the congruence kernel.
    """
    lv = tower.levels[n]
    G = tower.group
    ts = [G.word_eval(w) for w in lv.words]
    tinv = [t.inv() for t in ts]
    table = []
    for s, g in enumerate(G.generators):
        p = lv.perms[s]
        col = []
        for x in range(lv.size):
            v = tinv[int(p[x])] * g * ts[x]
            col.append(v)
        table.append(col)
    w = Cocycle(lv, G, table, tower=tower, level=n)
    if tower.kind in ("congruence", "affine"):
        for col in table:
            for v in set(col):
                if tower.act_element(n, v, 0) != 0:
                    raise AssertionError(f"transversal value {v!r} leaves the stabilizer")
        if tower.kind == "congruence" and tower.moduli[n] > 1:
            m = tower.moduli[n]
            for col in table:
                for v in set(col):
                    if not Mat(v.rows, m).is_identity():
                        raise AssertionError(f"transversal value {v!r} is not trivial mod {m}")
    return w


def twist_by_coboundary(w: Cocycle, phi: Sequence) -> Cocycle:
    """``w'(s, x) = phi(s x) w(s, x) phi(x)^-1``."""
    phi = list(phi)
    if len(phi) != w.size:
        raise CocycleError("phi must be defined on every point")
    inv = [p.inv() for p in phi]
    table = []
    for s, col in enumerate(w.table):
        p = w.source.perms[s]
        table.append([phi[int(p[x])] * col[x] * inv[x] for x in range(w.size)])
    return Cocycle(w.source, w.target, table, tower=w.tower, level=w.level,
                   gen_words=w.gen_words, base_points=w.base_points)


def map_values(w: Cocycle, f, target: GroupContext) -> Cocycle:
    """Compose with a homomorphism ``f`` of the target (not checked)."""
    table = [[f(v) for v in col] for col in w.table]
    return Cocycle(w.source, target, table, tower=w.tower, level=w.level,
                   gen_words=w.gen_words, base_points=w.base_points)


def oe_cocycle(X: Level, Y: Level, target: GroupContext, theta: Sequence[int],
               radius: int = 4, tower: Tower | None = None, level: int | None = None) -> Cocycle:
    """Cocycle of an orbit map: ``theta(s x) = w(s, x) theta(x)``.

    ``Y`` carries the action of ``target``'s generators.  For finite targets
    the whole group is searched; otherwise the ball of the given word radius.
    Raises :class:`CocycleError` when no element (orbit mismatch) or more than
    one element (non-free action) matches.
    """
    theta = [int(t) for t in theta]
    if sorted(theta) != list(range(Y.size)) or len(theta) != X.size:
        raise CocycleError("theta must be a bijection X -> Y")
    if Y.ngens != len(target.generators):
        raise CocycleError("Y must carry one permutation per target generator")
    ball = _element_ball(target, Y, None if target.is_finite else radius)
    ident = np.arange(Y.size)
    lookup = {}
    for lam, perm in ball:
        if not lam.is_identity() and np.any(perm == ident):
            raise CocycleError(f"{lam!r} fixes a point of Y; the target action is not free")
        for y1 in range(Y.size):
            key = (y1, int(perm[y1]))
            if key in lookup:
                raise CocycleError(f"two elements carry {key[0]} to {key[1]}; action not free")
            lookup[key] = lam
    table = []
    for s in range(X.ngens):
        p = X.perms[s]
        col = []
        for x in range(X.size):
            lam = lookup.get((theta[x], theta[int(p[x])]))
            if lam is None:
                raise CocycleError(f"no element carries theta({x}) to theta(g{s} {x})")
            col.append(lam)
        table.append(col)
    return Cocycle(X, target, table, tower=tower, level=level)


def _element_ball(target: GroupContext, Y: Level, radius):
    """Distinct elements with their permutations of ``Y``, BFS from the identity."""
    e = target.identity()
    seen = {e: np.arange(Y.size)}
    frontier = [e]
    letters = list(range(1, len(target.generators) + 1))
    if radius is not None:
        letters += [-a for a in letters]
    depth = 0
    while frontier and (radius is None or depth < radius):
        nxt = []
        for h in frontier:
            for a in letters:
                g = target.generator(a) * h
                if g not in seen:
                    seen[g] = Y.letter_perm(a)[seen[h]]
                    nxt.append(g)
        frontier = nxt
        depth += 1
    return list(seen.items())


def value_distribution(w: Cocycle, word: Sequence[int]) -> dict:
    """Exact mass of each value of ``x -> w(word, x)``, keyed by element.

    Keys are ordered by canonical encoding.
    """
    counts = Counter(w.values(word))
    n = w.size
    return {k: Fraction(counts[k], n) for k in sorted(counts, key=encode)}


def concentration(w: Cocycle, word: Sequence[int]) -> Fraction:
    """Probability that two independent points give the same value."""
    counts = Counter(w.values(word))
    return Fraction(sum(c * c for c in counts.values()), w.size * w.size)


def _require_tower_source(tower, w):
    if w.level is None or w.tower is not tower or w.source is not tower.levels[w.level]:
        raise CocycleError("cocycle is not defined on a level of this tower")
    return w.level


def projection_inner(tower: Tower, w: Cocycle, word: Sequence[int], n: int, check: bool = True) -> Fraction:
    """Sum over values of the squared norm of the fiber-average projection.

    ``S_lam = {x : w(word^-1, x) = lam}``; the projection onto level-``n``
    functions replaces ``1_S`` by its fiber averages.  With ``check`` the
    result is compared against the direct count over same-fiber pairs.
    """
    D = _require_tower_source(tower, w)
    if n > D:
        raise TowerError(f"level {n} is finer than the cocycle's level {D}")
    inv = tuple(-a for a in reversed(word))
    vals = w.values(inv)
    ids = {}
    labels = np.array([ids.setdefault(v, len(ids)) for v in vals], dtype=np.int64)
    r = tower.rmap(n, D)
    size, fib = w.size, tower.fiber_size(n, D)
    # ||P 1_S||^2 = sum_x mu(x) (fiber average of 1_S at x)^2
    joint = np.zeros((tower.levels[n].size, len(ids)), dtype=np.int64)
    np.add.at(joint, (r, labels), 1)
    total = Fraction(0)
    for lam in range(len(ids)):
        avg = joint[r, lam]  # |S ∩ F(x)| for each x
        total += Fraction(int(np.sum(avg * avg)), size * fib * fib)
    if check:
        direct = projection_inner_pairs(tower, w, word, n, vals=vals)
        if direct != total:
            raise AssertionError(f"projection {total} != pair count {direct}")
    return total


def projection_inner_pairs(tower: Tower, w: Cocycle, word: Sequence[int], n: int, vals=None) -> Fraction:
    """``|X_n| * sum_a (mu x mu){(x1, x2) in F_a^2 : w(g^-1, x1) = w(g^-1, x2)}``."""
    D = _require_tower_source(tower, w)
    if vals is None:
        vals = w.values(tuple(-a for a in reversed(word)))
    r = tower.rmap(n, D)
    agree = 0
    for a in range(tower.levels[n].size):
        pts = np.flatnonzero(r == a)
        for x1 in pts:
            v1 = vals[x1]
            for x2 in pts:
                if vals[x2] == v1:
                    agree += 1
    size = w.size
    return Fraction(tower.levels[n].size * agree, size * size)


def restrict_cocycle(tower: Tower, w: Cocycle, n: int, a: int) -> Cocycle:
    """Restriction to the stabilizer of ``a`` acting on its fiber.

    The source generators are the Schreier words of the stabilizer, acting on
    the level-``D`` fiber over ``a`` (points listed in ambient index order).
    """
    D = _require_tower_source(tower, w)
    words = schreier_stabilizer(tower, n, a)
    pts = tower.fiber(n, a, D)
    local = {int(x): i for i, x in enumerate(pts)}
    amb = tower.levels[D]
    perms, table = [], []
    for h in words:
        p = amb.word_perm(h)
        img = p[pts]
        try:
            perms.append([local[int(y)] for y in img])
        except KeyError:
            raise AssertionError(f"Schreier word {h} does not preserve the fiber") from None
        table.append([w.eval(h, int(x)) for x in pts])
    src = Level(range(len(pts)), perms, label=f"fiber({n},{a})")
    return Cocycle(src, w.target, table, gen_words=words, base_points=tuple(int(x) for x in pts))


def lift_cocycle(tower: Tower, w: Cocycle, D: int | None = None) -> Cocycle:
    """Pull a level-``n`` cocycle back to level ``D`` along the quotient map."""
    n = _require_tower_source(tower, w)
    D = tower.depth if D is None else D
    r = tower.rmap(n, D)
    table = [[col[int(r[x])] for x in range(len(r))] for col in w.table]
    return Cocycle(tower.levels[D], w.target, table, tower=tower, level=D)


def factorization_level(tower: Tower, w: Cocycle) -> int:
    """Least ``N`` such that every generator column is constant on level-``N`` fibers.

    A cocycle on level ``D`` always factors through ``D`` itself.
    """
    D = _require_tower_source(tower, w)
    for N in range(D + 1):
        if _constant_on_fibers(tower.rmap(N, D), w.table):
            return N
    raise AssertionError("unreachable: every cocycle factors through its own level")


def _constant_on_fibers(r, table):
    for col in table:
        first = {}
        for x, v in enumerate(col):
            b = int(r[x])
            u = first.setdefault(b, v)
            if u is not v and u != v:
                return False
    return True


def factor_cocycle(tower: Tower, w: Cocycle, N: int) -> Cocycle:
    """Read off the level-``N`` cocycle ``w''`` with ``w = w'' o (id x r_N)``."""
    D = _require_tower_source(tower, w)
    r = tower.rmap(N, D)
    if not _constant_on_fibers(r, w.table):
        raise CocycleError(f"cocycle does not factor through level {N}")
    size = tower.levels[N].size
    table = []
    for col in w.table:
        out = [None] * size
        for x, v in enumerate(col):
            out[int(r[x])] = v
        table.append(out)
    return Cocycle(tower.levels[N], w.target, table, tower=tower, level=N)


# --- checks -----------------------------------------------------------------


def random_word(rng: random.Random, ngens: int, max_len: int):
    return tuple(rng.choice((1, -1)) * rng.randint(1, ngens) for _ in range(rng.randint(0, max_len)))


def check_cocycle_identity(w: Cocycle, trials: int = 1000, max_len: int = 8, seed: int = 0) -> int:
    """Assert ``w(uv, x) = w(u, v x) w(v, x)`` on random triples; returns the count."""
    rng = random.Random(seed)
    for _ in range(trials):
        u = random_word(rng, w.ngens, max_len)
        v = random_word(rng, w.ngens, max_len)
        x = rng.randrange(w.size)
        lhs = w.eval(u + v, x)
        rhs = w.eval(u, w.source.act(v, x)) * w.eval(v, x)
        if lhs != rhs:
            raise AssertionError(f"cocycle identity fails for u={u}, v={v}, x={x}")
    return trials


def check_relators(w: Cocycle, relators) -> None:
    """Every relator must evaluate to the identity at every point."""
    for r in relators:
        for x, v in enumerate(w.values(r)):
            if not v.is_identity():
                raise CocycleError(f"relator {tuple(r)} gives {v!r} at point {x}")


def check_identity_pairs(w: Cocycle, relators, trials: int = 200, max_len: int = 8, seed: int = 0) -> int:
    """Words that are equal in the group must give equal values.

    Each trial inserts a relator into a random word at a random position and
    compares values at a random point.  Returns the number of trials.
    """
    relators = [tuple(r) for r in relators]
    if not relators:
        return 0
    rng = random.Random(seed)
    for _ in range(trials):
        u = random_word(rng, w.ngens, max_len)
        r = rng.choice(relators)
        i = rng.randint(0, len(u))
        v = u[:i] + r + u[i:]
        x = rng.randrange(w.size)
        if w.eval(u, x) != w.eval(v, x):
            raise CocycleError(f"equal words {u} and {v} give different values at {x}")
    return trials


# --- serialization ----------------------------------------------------------

COCYCLE_FORMAT = "proflab-cocycle"
COCYCLE_VERSION = 1


def dump_cocycle(w: Cocycle) -> str:
    """Text dump: header lines then ``gen<TAB>point<TAB>hex(encoding)`` rows."""
    lines = [f"{COCYCLE_FORMAT}\t{COCYCLE_VERSION}"]
    digest = w.tower.digest if w.tower is not None else "-"
    level = "-" if w.level is None else str(w.level)
    lines.append(f"source\t{digest}\t{level}\t{w.size}\t{w.ngens}")
    lines.append(f"target\t{w.target.describe()}")
    for s, col in enumerate(w.table):
        for x, v in enumerate(col):
            lines.append(f"{s}\t{x}\t{encode(v).hex()}")
    return "\n".join(lines) + "\n"


def load_cocycle(text: str, tower: Tower) -> Cocycle:
    """Inverse of :func:`dump_cocycle`; the source level comes from ``tower``."""
    lines = text.splitlines()
    head = lines[0].split("\t")
    if head[0] != COCYCLE_FORMAT or int(head[1]) != COCYCLE_VERSION:
        raise CocycleError("not a supported cocycle dump")
    _, digest, level, size, ngens = lines[1].split("\t")
    if digest != "-" and digest != tower.digest:
        raise CocycleError("cocycle was dumped from a different tower")
    level = int(level)
    lv = tower.levels[level]
    size, ngens = int(size), int(ngens)
    if lv.size != size or lv.ngens != ngens:
        raise CocycleError("dump shape does not match the tower level")
    target = context_from_descriptor(lines[2].split("\t", 1)[1])
    table = [[None] * size for _ in range(ngens)]
    for line in lines[3:]:
        s, x, h = line.split("\t")
        table[int(s)][int(x)] = decode(bytes.fromhex(h))
    if any(v is None for col in table for v in col):
        raise CocycleError("dump is missing table entries")
    return Cocycle(lv, target, table, tower=tower, level=level)
