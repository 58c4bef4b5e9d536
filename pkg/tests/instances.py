"""Random test instances shared by the unit and acceptance suites."""

import random

from proflab.cocycles import Cocycle, lift_cocycle, make_transversal_cocycle, map_values, twist_by_coboundary
from proflab.groups import reduce_mod, slmod_context, sym_context, vec_context
from proflab.towers import Level

SMALL_TARGETS = [vec_context(1, 2), vec_context(1, 3), vec_context(1, 4), vec_context(2, 2),
                 vec_context(1, 5), sym_context(3)]


def random_level(rng: random.Random, size: int, ngens: int = 2, transitive: bool = False) -> Level:
    perms = []
    for s in range(ngens):
        p = list(range(size))
        if transitive and s == 0:
            order = p[:]
            rng.shuffle(order)
            p = [0] * size
            for i, x in enumerate(order):
                p[x] = order[(i + 1) % size]
        else:
            rng.shuffle(p)
        perms.append(p)
    return Level(range(size), perms)


def random_table_cocycle(rng: random.Random, lv: Level, target) -> Cocycle:
    els = target.enumerate().elements
    return Cocycle(lv, target, [[rng.choice(els) for _ in range(lv.size)] for _ in range(lv.ngens)])


def random_phi(rng: random.Random, target, size: int, points=None) -> list:
    els = target.enumerate().elements
    e = target.identity()
    phi = [e] * size
    for x in (range(size) if points is None else points):
        phi[x] = rng.choice(els)
    return phi


def random_pair(rng: random.Random, size: int, target, transitive: bool = False):
    """Two cocycles on the same action; cohomologous about half the time."""
    lv = random_level(rng, size, transitive=transitive)
    w2 = random_table_cocycle(rng, lv, target)
    if rng.random() < 0.5:
        w1 = twist_by_coboundary(w2, random_phi(rng, target, size))
    else:
        w1 = random_table_cocycle(rng, lv, target)
    return w1, w2


def genuine_twisted_lift(tower, seed: int, modulus: int = 3):
    """Level-1 transversal cocycle reduced into SL_2(Z/modulus), conjugated, lifted, twisted."""
    rng = random.Random(seed)
    target = slmod_context(2, modulus)
    v1 = map_values(make_transversal_cocycle(tower, 1), lambda g: reduce_mod(g, modulus), target)
    c = rng.choice(target.enumerate().elements)
    ci = c.inv()
    v1 = map_values(v1, lambda g: c * g * ci, target)
    w = lift_cocycle(tower, v1, tower.depth)
    return twist_by_coboundary(w, random_phi(rng, target, w.size)), v1
