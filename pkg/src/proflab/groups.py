"""Concrete group arithmetic.

Elements are small immutable value objects that multiply with ``*`` and
invert with ``.inv()``.  A :class:`GroupContext` pins down a carrier (which
kind of element, dimension, modulus) plus a named generating set, and is the
place where carrier checks, word evaluation and finite enumeration live.

Words are tuples of nonzero ints: ``k`` stands for generator ``k-1`` and
``-k`` for its inverse.  ``word_eval(ctx, (1, -2))`` is ``g0 * g1^-1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from sympy import isprime


class CarrierError(TypeError):
    """An element does not belong to the carrier of the context."""


class GroupSizeError(RuntimeError):
    """A closure or enumeration grew past its configured cap."""


# --- elements ---------------------------------------------------------------


def _matmul(a, b, m):
    n = len(a)
    out = []
    for i in range(n):
        row = a[i]
        r = []
        for j in range(n):
            s = 0
            for k in range(n):
                s += row[k] * b[k][j]
            r.append(s % m if m else s)
        out.append(tuple(r))
    return tuple(out)


def _det(rows):
    # Bareiss fraction-free elimination; exact for integer entries.
    a = [list(r) for r in rows]
    n = len(a)
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _adjugate(rows):
    n = len(rows)
    if n == 1:
        return ((1,),)
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = tuple(
                tuple(rows[r][c] for c in range(n) if c != j) for r in range(n) if r != i
            )
            adj[j][i] = (-1) ** (i + j) * _det(minor)
    return tuple(tuple(r) for r in adj)


class Mat:
    """Square matrix over the integers (``m is None``) or over Z/mZ."""

    __slots__ = ("rows", "m", "_hash")

    def __init__(self, rows, m=None):
        rows = tuple(tuple(int(v) for v in r) for r in rows)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("matrix must be square and nonempty")
        if m is not None:
            if m < 1:
                raise ValueError("modulus must be positive")
            rows = tuple(tuple(v % m for v in r) for r in rows)
        self.rows = rows
        self.m = m
        self._hash = hash((rows, m))

    @classmethod
    def identity(cls, n, m=None):
        return cls([[int(i == j) for j in range(n)] for i in range(n)], m)

    @classmethod
    def elementary(cls, n, i, j, t=1, m=None):
        rows = [[int(r == c) for c in range(n)] for r in range(n)]
        rows[i][j] = t
        return cls(rows, m)

    @property
    def n(self):
        return len(self.rows)

    def det(self):
        d = _det(self.rows)
        return d % self.m if self.m else d

    def __mul__(self, other):
        if not isinstance(other, Mat) or other.m != self.m or other.n != self.n:
            raise CarrierError(f"cannot multiply {self!r} by {other!r}")
        out = Mat.__new__(Mat)
        out.rows = _matmul(self.rows, other.rows, self.m)
        out.m = self.m
        out._hash = hash((out.rows, out.m))
        return out

    def apply(self, vec):
        """Matrix times column vector (tuple), reduced mod ``m`` if set."""
        m = self.m
        out = []
        for row in self.rows:
            s = sum(a * b for a, b in zip(row, vec))
            out.append(s % m if m else s)
        return tuple(out)

    def inv(self):
        d = self.det()
        adj = _adjugate(self.rows)
        if self.m:
            try:
                dinv = pow(d, -1, self.m)
            except ValueError:
                raise ArithmeticError(f"{self!r} is not invertible mod {self.m}") from None
            return Mat([[v * dinv for v in r] for r in adj], self.m)
        if d not in (1, -1):
            raise ArithmeticError(f"{self!r} is not invertible over Z")
        return Mat([[v * d for v in r] for r in adj])

    def is_identity(self):
        return all(v == int(i == j) for i, r in enumerate(self.rows) for j, v in enumerate(r))

    def __eq__(self, other):
        return isinstance(other, Mat) and self.m == other.m and self.rows == other.rows

    def __hash__(self):
        return self._hash

    def __repr__(self):
        body = [list(r) for r in self.rows]
        return f"Mat({body})" if self.m is None else f"Mat({body}, m={self.m})"


class Vec:
    """Residue vector in (Z/dZ)^n; the group law (written ``*``) is addition."""

    __slots__ = ("v", "d")

    def __init__(self, v, d):
        if d < 1:
            raise ValueError("modulus must be positive")
        self.v = tuple(int(x) % d for x in v)
        self.d = d

    def __mul__(self, other):
        if not isinstance(other, Vec) or other.d != self.d or len(other.v) != len(self.v):
            raise CarrierError(f"cannot add {self!r} and {other!r}")
        return Vec([a + b for a, b in zip(self.v, other.v)], self.d)

    def inv(self):
        return Vec([-a for a in self.v], self.d)

    def is_identity(self):
        return not any(self.v)

    def __eq__(self, other):
        return isinstance(other, Vec) and self.d == other.d and self.v == other.v

    def __hash__(self):
        return hash((self.v, self.d))

    def __repr__(self):
        return f"Vec({list(self.v)}, d={self.d})"


class Affine:
    """Pair ``(A, u)`` in SL_n ⋉ Z^n (or mod m), acting by ``x -> A x + u``.

    The product is ``(A, u)(B, v) = (AB, u + A v)``.
    """

    __slots__ = ("mat", "vec")

    def __init__(self, mat: Mat, vec):
        if len(vec) != mat.n:
            raise ValueError("vector length must match matrix size")
        self.mat = mat
        m = mat.m
        self.vec = tuple(int(x) % m if m else int(x) for x in vec)

    @property
    def n(self):
        return self.mat.n

    def __mul__(self, other):
        if not isinstance(other, Affine) or other.mat.m != self.mat.m or other.n != self.n:
            raise CarrierError(f"cannot multiply {self!r} by {other!r}")
        av = self.mat.apply(other.vec)
        return Affine(self.mat * other.mat, [a + b for a, b in zip(self.vec, av)])

    def inv(self):
        ai = self.mat.inv()
        return Affine(ai, [-x for x in ai.apply(self.vec)])

    def apply(self, x):
        m = self.mat.m
        ax = self.mat.apply(x)
        return tuple((a + b) % m if m else a + b for a, b in zip(ax, self.vec))

    def is_identity(self):
        return self.mat.is_identity() and not any(self.vec)

    def __eq__(self, other):
        return isinstance(other, Affine) and self.mat == other.mat and self.vec == other.vec

    def __hash__(self):
        return hash((self.mat, self.vec))

    def __repr__(self):
        return f"Affine({self.mat!r}, {list(self.vec)})"


class Perm:
    """Bijection of ``range(N)``; ``(p * q)(x) = p(q(x))``."""

    __slots__ = ("images",)

    def __init__(self, images):
        images = tuple(int(i) for i in images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"not a permutation: {images}")
        self.images = images

    @classmethod
    def identity(cls, size):
        return cls(range(size))

    @property
    def size(self):
        return len(self.images)

    def __mul__(self, other):
        if not isinstance(other, Perm) or other.size != self.size:
            raise CarrierError(f"cannot compose {self!r} with {other!r}")
        p = self.images
        out = Perm.__new__(Perm)
        out.images = tuple(p[i] for i in other.images)
        return out

    def __call__(self, x):
        return self.images[x]

    def inv(self):
        out = [0] * self.size
        for i, j in enumerate(self.images):
            out[j] = i
        return Perm(out)

    def is_identity(self):
        return all(i == j for i, j in enumerate(self.images))

    def __eq__(self, other):
        return isinstance(other, Perm) and self.images == other.images

    def __hash__(self):
        return hash(self.images)

    def __repr__(self):
        return f"Perm({list(self.images)})"


def free_reduce(letters):
    out = []
    for a in letters:
        if a == 0:
            raise ValueError("0 is not a generator letter")
        if out and out[-1] == -a:
            out.pop()
        else:
            out.append(a)
    return tuple(out)


def invert_word(word):
    return tuple(-a for a in reversed(word))


class Word:
    """Freely reduced word in the free group on numbered generators."""

    __slots__ = ("letters",)

    def __init__(self, letters=()):
        self.letters = free_reduce(letters)

    def __mul__(self, other):
        if not isinstance(other, Word):
            raise CarrierError(f"cannot multiply {self!r} by {other!r}")
        return Word(self.letters + other.letters)

    def inv(self):
        return Word(invert_word(self.letters))

    def is_identity(self):
        return not self.letters

    def __eq__(self, other):
        return isinstance(other, Word) and self.letters == other.letters

    def __hash__(self):
        return hash(("word", self.letters))

    def __repr__(self):
        return f"Word({list(self.letters)})"


# --- canonical encoding -----------------------------------------------------

_TAGS = {Mat: 1, Vec: 2, Affine: 3, Perm: 4, Word: 5}


def _ints(values):
    """Fixed-width signed big-endian block; the width is the minimum that fits."""
    values = list(values)
    width = 1
    for v in values:
        while not (-(1 << (8 * width - 1)) <= v < (1 << (8 * width - 1))):
            width += 1
    return bytes([width]) + b"".join(v.to_bytes(width, "big", signed=True) for v in values)


def encode(e) -> bytes:
    """Canonical byte encoding, used for ordering and as an association key.

    Layout: tag byte, then a length-prefixed header of small ints, then the
    payload entries row-major in one fixed-width block (see README).
    """
    if isinstance(e, Mat):
        head = [e.n, e.m or 0]
        body = [v for r in e.rows for v in r]
    elif isinstance(e, Vec):
        head = [len(e.v), e.d]
        body = list(e.v)
    elif isinstance(e, Affine):
        head = [e.n, e.mat.m or 0]
        body = [v for r in e.mat.rows for v in r] + list(e.vec)
    elif isinstance(e, Perm):
        head = [e.size, 0]
        body = list(e.images)
    elif isinstance(e, Word):
        head = [len(e.letters), 0]
        body = list(e.letters)
    else:
        raise CarrierError(f"no canonical encoding for {type(e).__name__}")
    return bytes([_TAGS[type(e)]]) + _ints(head) + _ints(body)


def _read_ints(buf, pos, count):
    width = buf[pos]
    pos += 1
    vals = [
        int.from_bytes(buf[pos + i * width : pos + (i + 1) * width], "big", signed=True)
        for i in range(count)
    ]
    return vals, pos + count * width


def decode(buf: bytes):
    """Inverse of :func:`encode`."""
    tag = buf[0]
    (n, m), pos = _read_ints(buf, 1, 2)
    if tag == 1:
        body, _ = _read_ints(buf, pos, n * n)
        return Mat([body[i * n : (i + 1) * n] for i in range(n)], m or None)
    if tag == 2:
        body, _ = _read_ints(buf, pos, n)
        return Vec(body, m)
    if tag == 3:
        body, _ = _read_ints(buf, pos, n * n + n)
        return Affine(Mat([body[i * n : (i + 1) * n] for i in range(n)], m or None), body[n * n :])
    if tag == 4:
        body, _ = _read_ints(buf, pos, n)
        return Perm(body)
    if tag == 5:
        body, _ = _read_ints(buf, pos, n)
        return Word(body)
    raise ValueError(f"unknown element tag {tag}")


# --- contexts ---------------------------------------------------------------

KINDS = ("sl", "slmod", "vec", "affine", "affinemod", "perm", "free")


@dataclass(frozen=True)
class GroupContext:
    """A carrier plus a named generating set.

    ``kind`` is one of ``sl`` (SL_n(Z)), ``slmod`` (SL_n(Z/mZ)), ``vec``
    ((Z/mZ)^n), ``affine`` (SL_n(Z) ⋉ Z^n), ``affinemod`` (the same mod m),
    ``perm`` (permutations of ``range(n)``) and ``free`` (free group of rank n).
    """

    kind: str
    n: int
    modulus: int | None = None
    generators: tuple = ()
    names: tuple = ()
    relators: tuple = ()
    descriptor: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown carrier kind {self.kind!r}")
        if self.kind in ("slmod", "vec", "affinemod") and not self.modulus:
            raise ValueError(f"{self.kind} needs a modulus")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"g{i}" for i in range(len(self.generators))))
        if len(self.names) != len(self.generators):
            raise ValueError("one name per generator")
        for g in self.generators:
            if not self.contains(g):
                raise CarrierError(f"generator {g!r} is not in the {self.kind} carrier")
        for r in self.relators:
            if not self.word_eval(r).is_identity():
                raise ValueError(f"relator {r} does not evaluate to the identity")

    # carrier membership
    def contains(self, e) -> bool:
        k, n, m = self.kind, self.n, self.modulus
        if k == "sl":
            return isinstance(e, Mat) and e.m is None and e.n == n and e.det() == 1
        if k == "slmod":
            return isinstance(e, Mat) and e.m == m and e.n == n and e.det() == 1 % m
        if k == "vec":
            return isinstance(e, Vec) and e.d == m and len(e.v) == n
        if k == "affine":
            return isinstance(e, Affine) and e.mat.m is None and e.n == n and e.mat.det() == 1
        if k == "affinemod":
            return isinstance(e, Affine) and e.mat.m == m and e.n == n and e.mat.det() == 1 % m
        if k == "perm":
            return isinstance(e, Perm) and e.size == n
        return isinstance(e, Word) and all(abs(a) <= n for a in e.letters)

    def _check(self, *elems):
        for e in elems:
            if not self.contains(e):
                raise CarrierError(f"{e!r} is not an element of {self.describe()}")

    @property
    def is_finite(self) -> bool:
        return self.kind in ("slmod", "vec", "affinemod", "perm")

    def identity(self):
        k, n, m = self.kind, self.n, self.modulus
        if k in ("sl", "slmod"):
            return Mat.identity(n, m if k == "slmod" else None)
        if k == "vec":
            return Vec([0] * n, m)
        if k in ("affine", "affinemod"):
            return Affine(Mat.identity(n, m if k == "affinemod" else None), [0] * n)
        if k == "perm":
            return Perm.identity(n)
        return Word()

    def multiply(self, a, b):
        self._check(a, b)
        return a * b

    def invert(self, a):
        self._check(a)
        return a.inv()

    def equals(self, a, b) -> bool:
        self._check(a, b)
        return a == b

    def generator(self, letter: int):
        if letter == 0 or abs(letter) > len(self.generators):
            raise IndexError(f"no generator for letter {letter} in {self.describe()}")
        g = self.generators[abs(letter) - 1]
        return g if letter > 0 else g.inv()

    def word_eval(self, word: Sequence[int]):
        out = self.identity()
        for a in word:
            out = out * self.generator(a)
        return out

    def describe(self) -> str:
        if self.descriptor:
            return self.descriptor
        return f"{self.kind} n={self.n}" + (f" m={self.modulus}" if self.modulus else "")

    def enumerate(self, cap: int = 2_000_000) -> "Enumeration":
        return enumerate_group(self, cap)


def group_ops(ctx: GroupContext, a, b):
    """Product ``a*b`` in ``ctx`` (carrier-checked)."""
    return ctx.multiply(a, b)


def word_eval(ctx: GroupContext, word: Sequence[int]):
    return ctx.word_eval(word)


def reduce_mod(e, m: int):
    """Entrywise reduction of an integer matrix, affine pair or vector mod ``m``."""
    if m < 2:
        raise ValueError("modulus must be at least 2")
    if isinstance(e, Mat) and e.m is None:
        return Mat(e.rows, m)
    if isinstance(e, Affine) and e.mat.m is None:
        return Affine(Mat(e.mat.rows, m), e.vec)
    if isinstance(e, (tuple, list)) and all(isinstance(x, int) for x in e):
        return Vec(e, m)
    raise CarrierError(f"reduce_mod needs an integer payload, got {e!r}")


@dataclass
class Enumeration:
    """All elements of a finite group in BFS order, each with a witness word."""

    elements: list
    words: list
    index: dict

    def __len__(self):
        return len(self.elements)


def enumerate_group(ctx: GroupContext, cap: int = 2_000_000) -> Enumeration:
    """Breadth-first closure from the identity under left multiplication.

    Generators are tried in their fixed order, so the output order (and every
    witness word) is reproducible.  ``elements[i] == ctx.word_eval(words[i])``.
    """
    if not ctx.is_finite:
        raise ValueError(f"{ctx.describe()} is infinite")
    e = ctx.identity()
    elements, words, index = [e], [()], {e: 0}
    gens = ctx.generators
    queue = deque([0])
    while queue:
        i = queue.popleft()
        h, w = elements[i], words[i]
        for k, g in enumerate(gens):
            x = g * h
            if x not in index:
                if len(elements) >= cap:
                    raise GroupSizeError(f"{ctx.describe()} exceeds the cap of {cap} elements")
                index[x] = len(elements)
                elements.append(x)
                words.append((k + 1,) + w)
                queue.append(index[x])
    return Enumeration(elements, words, index)


def sln_order(n: int, p: int) -> int:
    """|SL_n(Z/pZ)| = p^(n(n-1)/2) * prod_{k=2..n} (p^k - 1)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not isprime(p):
        raise ValueError(f"{p} is not prime")
    out = p ** (n * (n - 1) // 2)
    for k in range(2, n + 1):
        out *= p**k - 1
    return out


def squarefree_modulus(primes: Sequence[int]) -> int:
    m = 1
    for p in primes:
        if not isprime(p):
            raise ValueError(f"{p} is not prime")
        if m % p == 0:
            raise ValueError(f"prime {p} repeated; moduli must be squarefree")
        m *= p
    return m


def slmod_order(n: int, m: int) -> int:
    """Order of SL_n(Z/mZ) for squarefree m, via CRT."""
    out = 1
    for p in _prime_factors(m):
        out *= sln_order(n, p)
    return out


def _prime_factors(m):
    out, p = [], 2
    while p * p <= m:
        if m % p == 0:
            if (m // p) % p == 0:
                raise ValueError(f"{m} is not squarefree")
            out.append(p)
            m //= p
        p += 1
    if m > 1:
        out.append(m)
    return out


# --- standard contexts ------------------------------------------------------


def elementary_generators(n, m=None):
    gens, names = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                gens.append(Mat.elementary(n, i, j, 1, m))
                names.append(f"E{i + 1}{j + 1}")
    return gens, names


S_MATRIX = ((0, -1), (1, 0))
T_MATRIX = ((1, 1), (0, 1))

# With a = E12, b = E21 the element s = a b^-1 a has order 4 and s^2 = (a b^-1)^3;
# likewise S^4 = 1 and (ST)^3 = S^2 for the classical pair.
SL2_ELEMENTARY_RELATORS = ((1, -2, 1) * 4, (1, -2, 1) * 2 + (2, -1) * 3)
SL2_ST_RELATORS = ((1,) * 4, (1, 2) * 3 + (-1, -1))


def sl_context(n: int, generators: str = "elementary") -> GroupContext:
    """SL_n(Z) with the elementary matrices E_ij(1) (default) or, for n=2, S and T."""
    relators = ()
    if generators == "elementary":
        gens, names = elementary_generators(n)
        if n == 2:
            relators = SL2_ELEMENTARY_RELATORS
    elif generators == "st":
        if n != 2:
            raise ValueError("the S,T generating set is only defined for n=2")
        gens, names = [Mat(S_MATRIX), Mat(T_MATRIX)], ["S", "T"]
        relators = SL2_ST_RELATORS
    else:
        raise ValueError(f"unknown generating set {generators!r}")
    return GroupContext("sl", n, None, tuple(gens), tuple(names), relators,
                        descriptor=f"sl {n} {generators}")


def reduced_context(ctx: GroupContext, m: int) -> GroupContext:
    """Image of an integer context mod m, keeping generator order and names."""
    if ctx.kind == "sl":
        kind = "slmod"
    elif ctx.kind == "affine":
        kind = "affinemod"
    else:
        raise CarrierError(f"cannot reduce a {ctx.kind} context")
    gens = tuple(reduce_mod(g, m) for g in ctx.generators)
    return GroupContext(kind, ctx.n, m, gens, ctx.names, ctx.relators, descriptor=f"{kind} {ctx.n} {m}")


def slmod_context(n: int, m: int, generators: str = "elementary") -> GroupContext:
    return reduced_context(sl_context(n, generators), m)


def affine_context(n: int) -> GroupContext:
    """SL_n(Z) ⋉ Z^n generated by (E_ij, 0) then the translations (I, e_k)."""
    mats, names = elementary_generators(n)
    gens = [Affine(a, [0] * n) for a in mats]
    for k in range(n):
        gens.append(Affine(Mat.identity(n), [int(i == k) for i in range(n)]))
        names.append(f"t{k + 1}")
    return GroupContext("affine", n, None, tuple(gens), tuple(names), descriptor=f"affine {n}")


def vec_context(n: int, d: int) -> GroupContext:
    gens = tuple(Vec([int(i == k) for i in range(n)], d) for k in range(n))
    return GroupContext("vec", n, d, gens, tuple(f"e{k + 1}" for k in range(n)),
                        descriptor=f"vec {n} {d}")


def sym_context(size: int) -> GroupContext:
    """Symmetric group on ``range(size)`` generated by (0 1) and the size-cycle."""
    if size < 1:
        raise ValueError("size must be positive")
    if size == 1:
        gens = (Perm([0]),)
    elif size == 2:
        gens = (Perm([1, 0]),)
    else:
        swap = list(range(size))
        swap[0], swap[1] = 1, 0
        gens = (Perm(swap), Perm([(i + 1) % size for i in range(size)]))
    return GroupContext("perm", size, None, gens, descriptor=f"sym {size}")


def cyclic_context(order: int) -> GroupContext:
    return GroupContext("vec", 1, order, (Vec([1], order),), ("c",), descriptor=f"cyclic {order}")


def free_context(rank: int) -> GroupContext:
    gens = tuple(Word([k + 1]) for k in range(rank))
    return GroupContext("free", rank, None, gens, descriptor=f"free {rank}")


def context_from_descriptor(text: str) -> GroupContext:
    """Parse descriptors like ``sl 2 elementary``, ``slmod 2 3``, ``sym 3``, ``cyclic 4``."""
    parts = text.split()
    if not parts:
        raise ValueError("empty group descriptor")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "sl":
            return sl_context(int(args[0]), args[1] if len(args) > 1 else "elementary")
        if kind == "slmod":
            gens = args[2] if len(args) > 2 else "elementary"
            return slmod_context(int(args[0]), int(args[1]), gens)
        if kind == "affine":
            return affine_context(int(args[0]))
        if kind == "vec":
            return vec_context(int(args[0]), int(args[1]))
        if kind == "sym":
            return sym_context(int(args[0]))
        if kind == "cyclic":
            return cyclic_context(int(args[0]))
        if kind == "free":
            return free_context(int(args[0]))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad group descriptor {text!r}: {exc}") from None
    raise ValueError(f"unknown group descriptor {text!r}")

