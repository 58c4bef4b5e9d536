import random
from fractions import Fraction

import pytest

from instances import SMALL_TARGETS, genuine_twisted_lift, random_level, random_pair, random_phi
from oracles import exhaustive_phi
from proflab.cocycles import (
    Cocycle,
    concentration,
    lift_cocycle,
    make_hom_cocycle,
    make_transversal_cocycle,
    oe_cocycle,
    twist_by_coboundary,
)
from proflab.groups import Perm, reduce_mod, sl_context, slmod_context, sym_context
from proflab.towers import Level
from proflab.untwist import (
    Status,
    Verdict,
    averaging_invariant_vector,
    cohomologous_finite,
    cohomologous_tree,
    majority_hom,
    superrigidity_pipeline,
    threshold_gate,
    untwist_to_hom,
)


def hom_mod(tower, m, level):
    target = slmod_context(2, m)
    psi = [reduce_mod(g, m) for g in tower.group.generators]
    return make_hom_cocycle(tower.levels[level], psi, target, tower.group.relators,
                            tower=tower, level=level)


def seven_eighths_instance():
    """76 points split 71/3/2: concentration (71^2 + 3^2 + 2^2)/76^2 = 7/8 exactly."""
    lv = Level(range(76), [list(range(1, 76)) + [0]])
    ctx = sym_context(3)
    a, b, c = Perm([1, 0, 2]), Perm([0, 2, 1]), Perm([1, 2, 0])
    return Cocycle(lv, ctx, [[a] * 71 + [b] * 3 + [c] * 2])


# --- cohomology deciders ------------------------------------------------------


def test_reflexive(sl_tower):
    w = hom_mod(sl_tower, 6, 2)
    phi, census = cohomologous_finite(w, w)
    assert all(p.is_identity() for p in phi)
    assert census.orbits == 144 and census.sizes == {144: 144}
    v, phi = cohomologous_tree(w, w)
    assert v is Verdict.COHOMOLOGOUS and all(p.is_identity() for p in phi)


def test_census_of_transversal_cocycle(sl_tower):
    w = genuine_twisted_lift(sl_tower, 0)[0]
    phi, census = cohomologous_finite(w, w)
    assert phi is not None
    assert census.orbits == 24 and census.sizes == {144: 24}


def test_twisted_instance_is_found():
    rng = random.Random(1)
    for target in SMALL_TARGETS:
        lv = random_level(rng, 5, transitive=True)
        w2 = Cocycle(lv, target, [[rng.choice(target.enumerate().elements) for _ in range(5)] for _ in range(2)])
        w1 = twist_by_coboundary(w2, random_phi(rng, target, 5))
        phi, _ = cohomologous_finite(w1, w2)
        assert twist_by_coboundary(w2, phi) == w1


def test_nonconjugate_homs_are_not_cohomologous():
    lv = Level(range(3), [[1, 2, 0], [0, 1, 2]])
    ctx = sym_context(3)
    e, t = ctx.identity(), Perm([1, 0, 2])
    w1 = make_hom_cocycle(lv, [e, e], ctx)
    w2 = make_hom_cocycle(lv, [e, t], ctx)
    assert cohomologous_finite(w1, w2)[0] is None
    assert exhaustive_phi(w1, w2, ctx.enumerate().elements) == []
    assert cohomologous_tree(w1, w2)[0] is Verdict.NOT_COHOMOLOGOUS


@pytest.mark.parametrize("size", [1, 2, 3, 4])
def test_finite_matches_exhaustive_search(size):
    rng = random.Random(size)
    for target in SMALL_TARGETS:
        if len(target.enumerate()) ** size > 50_000:
            continue
        for _ in range(4):
            w1, w2 = random_pair(rng, size, target)
            phi, _ = cohomologous_finite(w1, w2)
            sols = exhaustive_phi(w1, w2, target.enumerate().elements)
            assert (phi is None) == (len(sols) == 0)


def test_tree_matches_finite():
    rng = random.Random(7)
    for i in range(150):
        target = SMALL_TARGETS[i % len(SMALL_TARGETS)]
        w1, w2 = random_pair(rng, rng.randint(1, 8), target, transitive=True)
        phi, _ = cohomologous_finite(w1, w2)
        verdict, tphi = cohomologous_tree(w1, w2)
        assert (phi is not None) == (verdict is Verdict.COHOMOLOGOUS)


def test_symmetric_and_transitive():
    rng = random.Random(11)
    target = sym_context(3)
    lv = random_level(rng, 6, transitive=True)
    w = Cocycle(lv, target, [[rng.choice(target.enumerate().elements) for _ in range(6)] for _ in range(2)])
    w1 = twist_by_coboundary(w, random_phi(rng, target, 6))
    w2 = twist_by_coboundary(w1, random_phi(rng, target, 6))
    p01, _ = cohomologous_finite(w1, w)
    p10, _ = cohomologous_finite(w, w1)
    assert twist_by_coboundary(w1, [p.inv() for p in p01]) == w
    assert twist_by_coboundary(w1, p10) == w
    p21, _ = cohomologous_finite(w2, w1)
    composed = [a * b for a, b in zip(p21, p01)]
    assert twist_by_coboundary(w, composed) == w2


def test_infinite_target_reports_unknown(sl_tower):
    lv = sl_tower.levels[0]
    G = sl_context(2)
    w1 = make_hom_cocycle(lv, list(G.generators), G)
    w2 = make_hom_cocycle(lv, [G.identity()] * 2, G)
    ball = [G.identity()] + list(G.generators)
    assert cohomologous_tree(w1, w2, ball) == (Verdict.UNKNOWN, None)
    with pytest.raises(ValueError):
        cohomologous_tree(w1, w2)
    with pytest.raises(ValueError):
        cohomologous_finite(w1, w2)
    # the transversal cocycle is a twist of the inclusion by phi(x) = t_x^-1
    v = make_transversal_cocycle(sl_tower, 1)
    inc = make_hom_cocycle(sl_tower.levels[1], list(G.generators), G)
    verdict, phi = cohomologous_tree(v, inc, [G.identity()])
    assert verdict is Verdict.COHOMOLOGOUS


def test_intransitive_tree_rejected():
    lv = Level(range(4), [[1, 0, 3, 2]])
    ctx = sym_context(3)
    w = make_hom_cocycle(lv, [ctx.identity()], ctx)
    with pytest.raises(Exception):
        cohomologous_tree(w, w)


# --- majority and the gate ----------------------------------------------------


def test_majority_recovers_hom(sl_tower):
    h = hom_mod(sl_tower, 6, 2)
    words = [(1,), (2,), (1, 2)]
    psi = majority_hom(h, words)
    assert psi == {u: h.target.word_eval(u) for u in words}


def test_majority_split_gives_none():
    lv = Level(range(2), [[1, 0]])
    ctx = sym_context(3)
    e, t = ctx.identity(), Perm([1, 0, 2])
    assert majority_hom(Cocycle(lv, ctx, [[e, t]]), [(1,)]) is None


def test_majority_after_one_point_perturbation(sl_tower):
    h = hom_mod(sl_tower, 6, 2)
    phi = [h.target.identity()] * 144
    phi[99] = h.target.word_eval((1, 1, 2))
    w = twist_by_coboundary(h, phi)
    gens = [(1,), (2,)]
    assert majority_hom(w, gens) == {u: h.target.word_eval(u) for u in gens}
    low = threshold_gate(w, gens)[1]
    assert low >= Fraction(142, 144) ** 2 > Fraction(7, 8)


def test_majority_follows_automorphisms(sl_tower):
    h = hom_mod(sl_tower, 3, 2)
    phi = [h.target.identity()] * 144
    phi[5] = h.target.word_eval((1, 2))
    w = twist_by_coboundary(h, phi)
    c = w.target.word_eval((2, 1, 2))
    ci = c.inv()
    conj = Cocycle(w.source, w.target, [[c * v * ci for v in col] for col in w.table])
    gens = [(1,), (2,)]
    a, b = majority_hom(w, gens), majority_hom(conj, gens)
    assert all(b[u] == c * a[u] * ci for u in gens)


def test_gate_is_strict_at_seven_eighths():
    w = seven_eighths_instance()
    assert concentration(w, (1,)) == Fraction(7, 8)
    ok, low, _ = threshold_gate(w, [(1,)])
    assert not ok and low == Fraction(7, 8)
    assert threshold_gate(w, [(1,)], Fraction(6, 7))[0]


# --- untwisting ---------------------------------------------------------------


def test_untwist_hom(sl_tower):
    h = hom_mod(sl_tower, 6, 2)
    psi, phi = untwist_to_hom(h)
    assert psi == [reduce_mod(g, 6) for g in sl_tower.group.generators]
    assert all(p.is_identity() for p in phi)


def test_untwist_high_concentration_twist(sl_tower):
    h = hom_mod(sl_tower, 6, 2)
    rng = random.Random(2)
    phi0 = random_phi(rng, h.target, 144, points=[3, 50, 77])
    w = twist_by_coboundary(h, phi0)
    assert threshold_gate(w, [(1,), (2,)])[1] >= Fraction(9, 10)
    psi, phi = untwist_to_hom(w)
    assert twist_by_coboundary(make_hom_cocycle(w.source, psi, w.target), phi) == w


def test_untwist_transversal_fails(sl_tower):
    # v_1 is trivial mod 2, so read it mod 3 where its values spread out
    w = genuine_twisted_lift(sl_tower, 1)[1]
    assert max(concentration(w, (s,)) for s in (1, 2)) < Fraction(1, 2)
    assert untwist_to_hom(w) is None


# --- averaging ----------------------------------------------------------------


def test_averaging_hom(sl_tower):
    h = hom_mod(sl_tower, 2, 1)
    res = averaging_invariant_vector(h, h)
    assert res.distance_sq == 0 and res.valid
    assert all(p.is_identity() for p in res.phi)


def test_averaging_mostly_identity_twist(sl_tower):
    h = hom_mod(sl_tower, 6, 2)
    rng = random.Random(8)
    pts = rng.sample(range(144), 10)
    w1 = twist_by_coboundary(h, random_phi(rng, h.target, 144, points=pts))
    res = averaging_invariant_vector(w1, h)
    assert res.covers and res.valid
    assert 0 < res.distance_sq < 1


def test_averaging_consistent_with_finite():
    rng = random.Random(9)
    for i in range(60):
        target = SMALL_TARGETS[i % len(SMALL_TARGETS)]
        w1, w2 = random_pair(rng, rng.randint(1, 6), target, transitive=True)
        res = averaging_invariant_vector(w1, w2)
        phi, _ = cohomologous_finite(w1, w2)
        if phi is None:
            assert not res.valid
        assert sum(res.eta.values()) <= w1.size


# --- pipeline -----------------------------------------------------------------


def test_pipeline_hom(sl_tower):
    h = hom_mod(sl_tower, 6, 2)
    rep = superrigidity_pipeline(sl_tower, h)
    assert rep.status is Status.FACTORED and rep.N == 0 and rep.n == 0
    assert all(p.is_identity() for p in rep.phi)
    assert [v for _, v in rep.psi] == list(h.table[i][0] for i in range(2))
    assert rep.gate == Fraction(31, 32)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pipeline_twisted_lift(sl_tower, seed):
    w, v1 = genuine_twisted_lift(sl_tower, seed)
    rep = superrigidity_pipeline(sl_tower, w, profile=False)
    assert rep.status is Status.FACTORED
    assert rep.N <= 2
    assert twist_by_coboundary(w, rep.phi) == lift_cocycle(sl_tower, rep.factored) == rep.untwisted
    assert cohomologous_finite(rep.untwisted, lift_cocycle(sl_tower, v1))[0] is not None


def test_pipeline_oe(sl_tower):
    lv = sl_tower.levels[2]
    theta = list(range(lv.size))
    random.Random(3).shuffle(theta)
    w = oe_cocycle(lv, lv, slmod_context(2, 6), theta, tower=sl_tower, level=2)
    rep = superrigidity_pipeline(sl_tower, w, profile=False)
    assert rep.status is Status.FACTORED
    assert twist_by_coboundary(w, rep.phi) == lift_cocycle(sl_tower, rep.factored)


def test_pipeline_rejects_bad_delta(sl_tower):
    h = hom_mod(sl_tower, 6, 2)
    for d in (0, 1, Fraction(3, 2)):
        with pytest.raises(ValueError):
            superrigidity_pipeline(sl_tower, h, d)


def test_pipeline_level_profile_is_monotone(sl_tower):
    w = genuine_twisted_lift(sl_tower, 5)[0]
    rep = superrigidity_pipeline(sl_tower, w)
    lows = [low for _, low in rep.level_profile]
    assert lows == sorted(lows) and lows[-1] == 1
