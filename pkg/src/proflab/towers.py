"""Finite towers of quotient actions.

A :class:`Tower` is a truncated inverse system ``X_0 <- X_1 <- ... <- X_D`` of
finite transitive actions of one group, with equivariant quotient maps.  Level
0 is always the one-point space, so "level 0" means "the whole space, one
fiber".  Generators act on every level through precomputed index arrays.
"""

from __future__ import annotations

import hashlib
import io
import struct
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .groups import (
    Affine,
    GroupContext,
    GroupSizeError,
    Mat,
    Vec,
    affine_context,
    context_from_descriptor,
    free_reduce,
    invert_word,
    sl_context,
    slmod_order,
    squarefree_modulus,
)

DEFAULT_SIZE_CAP = 2_000_000


class TowerError(ValueError):
    """A tower invariant failed or a query was out of range."""


class IntransitiveError(TowerError):
    pass


class Level:
    """A finite set with one permutation (index array) per group generator.

    ``words[x]`` is the BFS transversal word carrying point 0 to ``x``.
    """

    def __init__(self, points, perms, label=""):
        self.points = list(points)
        self.perms = tuple(np.asarray(p, dtype=np.int64) for p in perms)
        for p in self.perms:
            p.setflags(write=False)
            if len(p) != len(self.points) or len(np.unique(p)) != len(p):
                raise TowerError(f"generator action on level {label!r} is not a bijection")
        self.label = label

    @property
    def size(self):
        return len(self.points)

    @property
    def ngens(self):
        return len(self.perms)

    @cached_property
    def index(self):
        return {p: i for i, p in enumerate(self.points)}

    @cached_property
    def inv_perms(self):
        out = []
        for p in self.perms:
            q = np.empty_like(p)
            q[p] = np.arange(len(p))
            q.setflags(write=False)
            out.append(q)
        return tuple(out)

    def letter_perm(self, a: int):
        return self.perms[a - 1] if a > 0 else self.inv_perms[-a - 1]

    def word_perm(self, word: Sequence[int]) -> np.ndarray:
        """Index array of the action of ``word`` (rightmost letter acts first)."""
        out = np.arange(self.size)
        for a in reversed(word):
            out = self.letter_perm(a)[out]
        return out

    def act(self, word, x: int) -> int:
        for a in reversed(word):
            x = int(self.letter_perm(a)[x])
        return x

    def bfs(self, base: int = 0):
        """Orbit of ``base`` in BFS order with transversal words and tree edges."""
        words = {base: ()}
        order = [base]
        queue = deque([base])
        while queue:
            x = queue.popleft()
            for s, p in enumerate(self.perms):
                y = int(p[x])
                if y not in words:
                    words[y] = (s + 1,) + words[x]
                    order.append(y)
                    queue.append(y)
        return order, words

    @cached_property
    def words(self):
        order, words = self.bfs(0)
        if len(order) != self.size:
            raise IntransitiveError(f"level {self.label!r} is not transitive")
        return [words[x] for x in range(self.size)]

    def is_transitive(self):
        return len(self.bfs(0)[0]) == self.size

    def __repr__(self):
        return f"Level({self.label!r}, size={self.size}, gens={self.ngens})"


def orbit_level(base, actions, label="", cap=DEFAULT_SIZE_CAP) -> Level:
    """BFS orbit of ``base`` under the point maps ``actions`` (one per generator)."""
    points, index = [base], {base: 0}
    images = [[] for _ in actions]
    i = 0
    while i < len(points):
        x = points[i]
        for k, f in enumerate(actions):
            y = f(x)
            j = index.get(y)
            if j is None:
                if len(points) >= cap:
                    raise GroupSizeError(f"level {label!r} exceeds the size cap of {cap}")
                j = index[y] = len(points)
                points.append(y)
            images[k].append(j)
        i += 1
    level = Level(points, images, label)
    level.__dict__["index"] = index
    return level


@dataclass(eq=False)
class Tower:
    """Levels ``0..depth`` (0 coarsest, one point) with quotient maps.

    ``qmaps[k]`` sends level ``k+1`` onto level ``k``.
    """

    group: GroupContext
    levels: list
    qmaps: list
    kind: str = "custom"
    moduli: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.qmaps = [np.asarray(q, dtype=np.int64) for q in self.qmaps]
        if len(self.qmaps) != len(self.levels) - 1:
            raise TowerError("need one quotient map per consecutive pair of levels")
        self.verify()

    @property
    def depth(self):
        return len(self.levels) - 1

    def sizes(self):
        return [lv.size for lv in self.levels]

    def verify(self):
        """Check bijectivity, equivariance and equal fiber sizes, exhaustively."""
        ngens = {lv.ngens for lv in self.levels}
        if len(ngens) != 1:
            raise TowerError("all levels must carry the same generators")
        if self.group is not None and ngens != {len(self.group.generators)}:
            raise TowerError("generator count differs from the group context")
        for k, q in enumerate(self.qmaps):
            lo, hi = self.levels[k], self.levels[k + 1]
            if len(q) != hi.size or (len(q) and (q.min() < 0 or q.max() >= lo.size)):
                raise TowerError(f"quotient map {k + 1}->{k} has the wrong shape")
            for s in range(hi.ngens):
                if not np.array_equal(q[hi.perms[s]], lo.perms[s][q]):
                    raise TowerError(f"quotient map {k + 1}->{k} is not equivariant for generator {s}")
            counts = np.bincount(q, minlength=lo.size)
            if lo.size and hi.size % lo.size:
                raise TowerError(f"level sizes {hi.size} and {lo.size} are not divisible")
            if not np.all(counts == hi.size // lo.size):
                raise TowerError(f"quotient map {k + 1}->{k} has unequal fibers")
        for lv in self.levels:
            if not lv.is_transitive():
                raise IntransitiveError(f"level {lv.label!r} is not transitive")

    def _check_level(self, n):
        if not 0 <= n <= self.depth:
            raise TowerError(f"level {n} out of range 0..{self.depth}")

    def rmap(self, n: int, D: int | None = None) -> np.ndarray:
        """Composite quotient ``X_D -> X_n``."""
        D = self.depth if D is None else D
        self._check_level(n)
        self._check_level(D)
        if D < n:
            raise TowerError(f"cannot map level {D} onto finer level {n}")
        out = np.arange(self.levels[D].size)
        for k in range(D - 1, n - 1, -1):
            out = self.qmaps[k][out]
        return out

    def fiber(self, n: int, a: int, D: int | None = None) -> np.ndarray:
        """Indices of level-``D`` points over the level-``n`` point ``a``."""
        D = self.depth if D is None else D
        r = self.rmap(n, D)
        if not 0 <= a < self.levels[n].size:
            raise TowerError(f"point {a} out of range on level {n}")
        return np.flatnonzero(r == a)

    def fiber_size(self, n, D=None):
        D = self.depth if D is None else D
        return self.levels[D].size // self.levels[n].size

    def act_element(self, n: int, g, x: int) -> int:
        """Action of a group element (not a word) on a point of level ``n``."""
        lv = self.levels[n]
        m = self.moduli[n]
        if self.kind == "congruence":
            y = Mat(g.rows, m) * lv.points[x]
        elif self.kind == "affine":
            y = Vec(Affine(Mat(g.mat.rows, m), g.vec).apply(lv.points[x].v), m)
        else:
            raise TowerError(f"{self.kind} towers only act through words")
        return lv.index[y]

    def summary_rows(self):
        rows = []
        for k, lv in enumerate(self.levels):
            rows.append((k, lv.label, lv.size, self.fiber_size(k), lv.ngens))
        return rows

    def dumps(self) -> bytes:
        return dump_tower(self)

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(dump_tower(self)).hexdigest()[:16]


# --- constructions ----------------------------------------------------------


def build_congruence_tower(n: int, primes: Sequence[int], depth: int | None = None,
                           generators: str = "elementary", size_cap: int = DEFAULT_SIZE_CAP) -> Tower:
    """SL_n(Z) acting by left multiplication on SL_n(Z/(p_1...p_k)Z), k = 0..depth."""
    primes = list(primes)
    depth = len(primes) if depth is None else depth
    if depth > len(primes):
        raise TowerError("depth exceeds the number of primes")
    if any(b <= a for a, b in zip(primes, primes[1:])):
        raise TowerError("primes must be strictly increasing")
    moduli = [1] + [squarefree_modulus(primes[:k]) for k in range(1, depth + 1)]
    for m in moduli[1:]:
        if slmod_order(n, m) > size_cap:
            raise GroupSizeError(f"SL_{n}(Z/{m}Z) exceeds the size cap of {size_cap}")
    group = sl_context(n, generators)
    levels = []
    for m in moduli:
        gens = [Mat(g.rows, m) for g in group.generators]
        acts = [lambda x, g=g: g * x for g in gens]
        lv = orbit_level(Mat.identity(n, m), acts, label=f"SL{n}(Z/{m})", cap=size_cap)
        expected = slmod_order(n, m) if m > 1 else 1
        if lv.size != expected:
            raise TowerError(f"level mod {m} has {lv.size} points, expected {expected}")
        levels.append(lv)
    qmaps = []
    for k in range(depth):
        m, hi = moduli[k], levels[k + 1]
        idx = levels[k].index
        qmaps.append([idx[Mat(x.rows, m)] for x in hi.points])
    return Tower(group, levels, qmaps, kind="congruence", moduli=tuple(moduli),
                 meta={"n": n, "primes": primes[:depth]})


def build_affine_tower(n: int, moduli: Sequence[int], size_cap: int = DEFAULT_SIZE_CAP) -> Tower:
    """SL_n(Z) ⋉ Z^n acting by ``(A, u) x = A x + u`` on (Z/d_i Z)^n."""
    moduli = list(moduli)
    if not moduli or moduli[0] < 2:
        raise TowerError("moduli must start at 2 or more")
    for a, b in zip(moduli, moduli[1:]):
        if b <= a or b % a:
            raise TowerError(f"moduli must increase by divisibility, got {a} then {b}")
    if moduli[-1] ** n > size_cap:
        raise GroupSizeError(f"(Z/{moduli[-1]}Z)^{n} exceeds the size cap of {size_cap}")
    group = affine_context(n)
    all_moduli = [1] + moduli
    levels = []
    for d in all_moduli:
        gens = [Affine(Mat(g.mat.rows, d), g.vec) for g in group.generators]
        acts = [lambda x, g=g, d=d: Vec(g.apply(x.v), d) for g in gens]
        lv = orbit_level(Vec([0] * n, d), acts, label=f"(Z/{d})^{n}", cap=size_cap)
        if lv.size != d**n:
            raise TowerError(f"level mod {d} has {lv.size} points, expected {d ** n}")
        levels.append(lv)
    qmaps = []
    for k in range(len(moduli)):
        d, idx = all_moduli[k], levels[k].index
        qmaps.append([idx[Vec(x.v, d)] for x in levels[k + 1].points])
    return Tower(group, levels, qmaps, kind="affine", moduli=tuple(all_moduli),
                 meta={"n": n, "moduli": moduli})


# --- freeness ---------------------------------------------------------------


def fix_ratio(level: Level, word: Sequence[int]) -> Fraction:
    """Proportion of points fixed by ``word``, exactly."""
    p = level.word_perm(word)
    return Fraction(int(np.count_nonzero(p == np.arange(level.size))), level.size)


def _trend(values):
    if all(v == values[0] for v in values):
        return "constant"
    if all(b <= a for a, b in zip(values, values[1:])):
        return "nonincreasing"
    if all(b >= a for a, b in zip(values, values[1:])):
        return "nondecreasing"
    return "mixed"


def freeness_profile(tower: Tower, words: Sequence[Sequence[int]]):
    """Fixed-point proportions of each word on each level, with a trend tag.

    Returns a list of ``(word, [ratio per level], trend)``.
    """
    if not words:
        raise ValueError("need at least one word")
    rows = []
    for w in words:
        vals = [fix_ratio(lv, w) for lv in tower.levels]
        rows.append((tuple(w), vals, _trend(vals)))
    return rows


def fix_theta_index(tower: Tower, a) -> list[int]:
    """Per level, the index of the fixed subgroup of x -> A x in (Z/dZ)^n.

    ``a`` is a word over the tower generators whose value has zero
    translation part, or a :class:`Mat`.
    """
    if tower.kind != "affine":
        raise TowerError("fix_theta_index needs an affine tower")
    if isinstance(a, Mat):
        mat = a
    else:
        g = tower.group.word_eval(a)
        if any(g.vec):
            raise TowerError(f"{g!r} has a translation part; it is not in the linear factor")
        mat = g.mat
    out = []
    for d, lv in zip(tower.moduli, tower.levels):
        md = Mat(mat.rows, d)
        fixed = sum(1 for x in lv.points if md.apply(x.v) == x.v)
        out.append(lv.size // fixed)
    return out


# --- stabilizers and fibers -------------------------------------------------


def schreier_stabilizer(tower: Tower, n: int, a: int) -> list[tuple]:
    """Schreier generators of the stabilizer of ``a`` on level ``n``, as words.

    With BFS transversal words ``v_x`` (``v_x . a = x``) the generators are
    ``v_{s x}^-1 s v_x``; trivial and repeated words are dropped.
    """
    tower._check_level(n)
    lv = tower.levels[n]
    order, words = lv.bfs(a)
    if len(order) != lv.size:
        raise IntransitiveError(f"level {n} is not transitive")
    out, seen = [], set()
    for x in order:
        for s in range(lv.ngens):
            y = int(lv.perms[s][x])
            h = free_reduce(invert_word(words[y]) + (s + 1,) + words[x])
            if h and h not in seen:
                if lv.act(h, a) != a:
                    raise AssertionError(f"Schreier word {h} moves the base point")
                seen.add(h)
                out.append(h)
    return out


def transversal_words(tower: Tower, n: int, a: int) -> dict:
    """BFS words ``γ_b`` on level ``n`` with ``γ_b . a = b``."""
    lv = tower.levels[n]
    order, words = lv.bfs(a)
    if len(order) != lv.size:
        raise IntransitiveError(f"level {n} is not transitive")
    return words


def fiber(tower: Tower, n: int, a: int, D: int | None = None) -> np.ndarray:
    return tower.fiber(n, a, D)


@dataclass(frozen=True)
class Saturation:
    level: int
    points: tuple


def detect_fiber_saturation(tower: Tower, A, H: Sequence[Sequence[int]], D: int | None = None):
    """Smallest ``n < D`` with ``A`` a union of level-``n`` fibers.

    ``A`` is a set of level-``D`` indices that must be invariant under every
    word in ``H``.  Returns a :class:`Saturation` or ``None`` when no level
    strictly coarser than ``D`` works (the truncation cannot decide).
    """
    D = tower.depth if D is None else D
    lv = tower.levels[D]
    A = np.unique(np.asarray(list(A), dtype=np.int64))
    mask = np.zeros(lv.size, dtype=bool)
    mask[A] = True
    for h in H:
        if not np.all(mask[lv.word_perm(h)[A]]):
            raise TowerError(f"set is not invariant under {tuple(h)}")
    for n in range(D):
        img = np.unique(tower.rmap(n, D)[A])
        if len(A) == len(img) * tower.fiber_size(n, D):
            return Saturation(n, tuple(int(v) for v in img))
    return None


# --- interleaving -----------------------------------------------------------


def _rational_inverse(rows):
    from .groups import _adjugate, _det

    d = _det(rows)
    if d == 0:
        raise TowerError("conjugator is singular")
    adj = _adjugate(rows)
    return [[Fraction(v, d) for v in r] for r in adj]


def interleaving_check(n: int, primes1: Sequence[int], primes2: Sequence[int], A, k: int):
    """Stagewise test of ``A E_ij(q1) A^-1 ∈ SL_n(q2 Z)`` for all i != j.

    ``q1``, ``q2`` are the products of the first ``j`` primes of each list at
    stage ``j``.  Only the elementary generators of the first congruence
    subgroup are tested, so ``False`` refutes the inclusion while ``True``
    means "consistent at this truncation".  Returns ``(stage, q1, q2, ok)``.
    """
    rows = A.rows if isinstance(A, Mat) else tuple(tuple(r) for r in A)
    if len(rows) != n:
        raise TowerError("conjugator has the wrong size")
    ainv = _rational_inverse(rows)
    k = min(k, len(primes1), len(primes2))
    out = []
    for j in range(1, k + 1):
        q1 = squarefree_modulus(primes1[:j])
        q2 = squarefree_modulus(primes2[:j])
        ok = True
        for i in range(n):
            for jj in range(n):
                if i == jj:
                    continue
                # A (I + q1 e_i e_j^T) A^-1 = I + q1 (A e_i)(e_j^T A^-1)
                for r in range(n):
                    for c in range(n):
                        v = Fraction(int(r == c)) + q1 * rows[r][i] * ainv[jj][c]
                        if v.denominator != 1 or (v.numerator - int(r == c)) % q2:
                            ok = False
        out.append((j, q1, q2, ok))
    return out


# --- serialization ----------------------------------------------------------

_MAGIC = b"PFLTOWR"
_VERSION = 1


def dump_tower(tower: Tower) -> bytes:
    """Versioned binary dump: header, level sizes, generator and quotient arrays.

    All integers are little-endian; index arrays are int32.
    """
    buf = io.BytesIO()
    desc = (tower.group.describe() if tower.group is not None else "").encode()
    kind = tower.kind.encode()
    buf.write(_MAGIC)
    buf.write(struct.pack("<HHH", _VERSION, len(desc), len(kind)))
    buf.write(desc)
    buf.write(kind)
    nlev, ngen = len(tower.levels), tower.levels[0].ngens
    buf.write(struct.pack("<II", nlev, ngen))
    moduli = list(tower.moduli) or [0] * nlev
    buf.write(struct.pack(f"<{nlev}Q", *moduli))
    buf.write(struct.pack(f"<{nlev}Q", *tower.sizes()))
    for lv in tower.levels:
        for p in lv.perms:
            buf.write(np.asarray(p, dtype="<i4").tobytes())
    for q in tower.qmaps:
        buf.write(np.asarray(q, dtype="<i4").tobytes())
    return buf.getvalue()


def load_tower(data: bytes) -> Tower:
    """Rebuild a tower from :func:`dump_tower` output; points become indices."""
    if not data.startswith(_MAGIC):
        raise TowerError("not a tower dump")
    pos = len(_MAGIC)
    version, ldesc, lkind = struct.unpack_from("<HHH", data, pos)
    if version != _VERSION:
        raise TowerError(f"unsupported tower dump version {version}")
    pos += 6
    desc = data[pos : pos + ldesc].decode()
    pos += ldesc
    kind = data[pos : pos + lkind].decode()
    pos += lkind
    nlev, ngen = struct.unpack_from("<II", data, pos)
    pos += 8
    moduli = struct.unpack_from(f"<{nlev}Q", data, pos)
    pos += 8 * nlev
    sizes = struct.unpack_from(f"<{nlev}Q", data, pos)
    pos += 8 * nlev
    levels = []
    for k, size in enumerate(sizes):
        perms = []
        for _ in range(ngen):
            perms.append(np.frombuffer(data, dtype="<i4", count=size, offset=pos).astype(np.int64))
            pos += 4 * size
        levels.append(Level(range(size), perms, label=f"level{k}"))
    qmaps = []
    for k in range(nlev - 1):
        qmaps.append(np.frombuffer(data, dtype="<i4", count=sizes[k + 1], offset=pos).astype(np.int64))
        pos += 4 * sizes[k + 1]
    group = context_from_descriptor(desc) if desc else None
    return Tower(group, levels, qmaps, kind=f"loaded-{kind}", moduli=tuple(moduli))
