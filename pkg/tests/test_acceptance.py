"""Acceptance criteria 1 to 12, at the stated tolerances and time limits.

Each test prints one PASS/FAIL line; the terminal summary repeats them.
"""

import random
import time
from fractions import Fraction
from math import sqrt
from pathlib import Path

import numpy as np
import pytest

from instances import SMALL_TARGETS, genuine_twisted_lift, random_pair, random_phi
from oracles import exhaustive_phi, pair_projection
from proflab.arithmetic import (
    SInvariantSpec,
    distinguisher,
    first_obstruction,
    s_closure_check,
    s_invariant_membership,
)
from proflab.cli import main
from proflab.cocycles import (
    Cocycle,
    check_cocycle_identity,
    lift_cocycle,
    make_hom_cocycle,
    make_transversal_cocycle,
    projection_inner,
    twist_by_coboundary,
)
from proflab.config import TASKS
from proflab.groups import Perm, enumerate_group, reduce_mod, sln_order, slmod_context, sym_context
from proflab.spectral import (
    check_wc_conditions,
    partition_bound_check,
    push_witness,
    spectral_gap_estimate,
    weak_compact_witness,
    xi_decomposition,
)
from proflab.towers import Level, build_affine_tower, build_congruence_tower, fix_ratio, fix_theta_index
from proflab.untwist import (
    Status,
    Verdict,
    cohomologous_finite,
    cohomologous_tree,
    superrigidity_pipeline,
    threshold_gate,
    untwist_to_hom,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
UNIPOTENT = (1,)


def verdict(num, ok, elapsed, limit, detail=""):
    line = f"criterion {num}: {'PASS' if ok and elapsed < limit else 'FAIL'} ({elapsed:.2f}s < {limit}s) {detail}"
    print(line)
    assert ok, line
    assert elapsed < limit, line


def hom6(tower):
    target = slmod_context(2, 6)
    psi = [reduce_mod(g, 6) for g in tower.group.generators]
    return make_hom_cocycle(tower.levels[2], psi, target, tower.group.relators, tower=tower, level=2)


def test_criterion_01_freeness():
    t0 = time.perf_counter()
    tower = build_affine_tower(2, [2, 4, 8, 16])
    ratios = [fix_ratio(lv, UNIPOTENT) for lv in tower.levels[1:]]
    elapsed = time.perf_counter() - t0
    expect = [Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16)]
    verdict(1, ratios == expect, elapsed, 1, f"ratios={[str(r) for r in ratios]}")


def test_criterion_02_fix_theta_index():
    t0 = time.perf_counter()
    tower = build_affine_tower(2, [2, 4, 8, 16])
    idx = fix_theta_index(tower, UNIPOTENT)[1:]
    elapsed = time.perf_counter() - t0
    verdict(2, idx == [2, 4, 8, 16], elapsed, 1, f"index={idx}")


def test_criterion_03_cocycle_identity(sl_tower):
    t0 = time.perf_counter()
    v = make_transversal_cocycle(sl_tower, 2)
    n = check_cocycle_identity(v, trials=1000, max_len=8, seed=0)
    elapsed = time.perf_counter() - t0
    kernel = all(reduce_mod(g, 6).is_identity() for col in v.table for g in col)
    verdict(3, n == 1000 and kernel and v.size == 144, elapsed, 10, f"pairs={n}")


def test_criterion_04_projection_cross_validation(sl_tower):
    t0 = time.perf_counter()
    rng = random.Random(4)
    h = hom6(sl_tower)
    cocycles = [twist_by_coboundary(h, random_phi(rng, h.target, 144, rng.sample(range(144), k)))
                for k in (1, 5, 30, 144)]
    cocycles += [genuine_twisted_lift(sl_tower, s)[0] for s in range(3)]
    agree = 0
    for _ in range(100):
        w = rng.choice(cocycles)
        word = tuple(rng.choice((1, 2, -1, -2)) for _ in range(rng.randint(1, 6)))
        n = rng.randint(0, 2)
        value = projection_inner(sl_tower, w, word, n, check=True)
        agree += value == pair_projection(sl_tower, w, word, n)
    elapsed = time.perf_counter() - t0
    verdict(4, agree == 100, elapsed, 30, f"exact agreements={agree}/100")


def test_criterion_05_untwist_threshold(sl_tower):
    t0 = time.perf_counter()
    h = hom6(sl_tower)
    phi = [h.target.identity()] * 144
    phi[57] = h.target.word_eval((2, 1, 1))
    w = twist_by_coboundary(h, phi)
    gens = [(1,), (2,)]
    _, low, _ = threshold_gate(w, gens)
    bound_ok = low >= Fraction(142, 144) ** 2 > Fraction(7, 8)
    res = untwist_to_hom(w)
    recovered = res is not None and twist_by_coboundary(make_hom_cocycle(w.source, res[0], w.target),
                                                        res[1]) == w
    lv = Level(range(76), [list(range(1, 76)) + [0]])
    a, b, c = Perm([1, 0, 2]), Perm([0, 2, 1]), Perm([1, 2, 0])
    edge = Cocycle(lv, sym_context(3), [[a] * 71 + [b] * 3 + [c] * 2])
    passed, edge_low, _ = threshold_gate(edge, [(1,)])
    rejected = edge_low == Fraction(7, 8) and not passed
    elapsed = time.perf_counter() - t0
    verdict(5, bound_ok and recovered and rejected, elapsed, 10,
            f"min concentration={low}, 7/8 instance rejected={rejected}")


def test_criterion_06_round_trip(sl_tower):
    t0 = time.perf_counter()
    good = 0
    for seed in range(20):
        w, _ = genuine_twisted_lift(sl_tower, seed)
        rep = superrigidity_pipeline(sl_tower, w, profile=False)
        if rep.status is not Status.FACTORED or rep.N > 2:
            continue
        chain = twist_by_coboundary(w, rep.phi)
        if chain == lift_cocycle(sl_tower, rep.factored, 2) == rep.untwisted:
            good += 1
    elapsed = time.perf_counter() - t0
    verdict(6, good == 20, elapsed, 120, f"factored={good}/20")


def test_criterion_07_cohomology_oracles():
    t0 = time.perf_counter()
    rng = random.Random(7)
    exhaustive = agree = 0
    for size in range(1, 7):
        for target in SMALL_TARGETS:
            for _ in range(8):
                w1, w2 = random_pair(rng, size, target)
                phi, _ = cohomologous_finite(w1, w2)
                sols = exhaustive_phi(w1, w2, target.enumerate().elements)
                exhaustive += 1
                agree += (phi is None) == (not sols)
    tree_cases = tree_agree = 0
    for i in range(1000):
        target = SMALL_TARGETS[i % len(SMALL_TARGETS)]
        w1, w2 = random_pair(rng, rng.randint(1, 10), target, transitive=True)
        phi, _ = cohomologous_finite(w1, w2)
        v, _ = cohomologous_tree(w1, w2)
        tree_cases += 1
        tree_agree += (phi is not None) == (v is Verdict.COHOMOLOGOUS)
    elapsed = time.perf_counter() - t0
    verdict(7, agree == exhaustive and tree_agree == tree_cases, elapsed, 120,
            f"exhaustive {agree}/{exhaustive}, tree {tree_agree}/{tree_cases}")


def test_criterion_08_distinguisher():
    t0 = time.perf_counter()
    st = first_obstruction(distinguisher(2, [2, 3, 5], [3, 5, 7], 1))
    stage_ok = st is not None and (st.stage, st.product) == (1, 6)
    orders = all(sln_order(n, p) == len(enumerate_group(slmod_context(n, p)))
                 for n, p in [(2, 2), (2, 3), (2, 5), (3, 2)])
    elapsed = time.perf_counter() - t0
    verdict(8, stage_ok and orders, elapsed, 1, f"stage={st.stage if st else None}")


def test_criterion_09_s_invariant():
    t0 = time.perf_counter()
    cong = SInvariantSpec.congruence([6, 144])
    aff = SInvariantSpec.affine(2, [2, 4])
    m1 = s_invariant_membership(cong, Fraction(1, 4))
    m2 = s_invariant_membership(aff, Fraction(3, 16))
    witnesses = (m1.numerator, m1.index) == (36, 2) and (m2.numerator, m2.index) == (3, 2)
    rng = random.Random(9)
    closure = True
    for _ in range(20):
        spec = rng.choice((cong, aff))
        size = rng.choice(spec.sizes)
        t = Fraction(rng.randint(1, 2 * size), size)
        closure &= all(s_closure_check(spec, t, [rng.randint(1, 30) for _ in range(4)]))
    elapsed = time.perf_counter() - t0
    verdict(9, witnesses and closure, elapsed, 1, f"{m1} {m2}")


def test_criterion_10_weak_compactness(sl_tower):
    t0 = time.perf_counter()
    D = sl_tower.depth
    ok = True
    for n in range(D + 1):
        eta = weak_compact_witness(sl_tower, n)
        sets = []
        for m in range(n + 1):
            r = sl_tower.rmap(m, D)
            sets += [np.flatnonzero(r == b) for b in range(sl_tower.levels[m].size)]
        rep = check_wc_conditions(eta, sl_tower.levels[D], sets)
        ok &= rep.holds
        for m in range(D + 1):
            ok &= check_wc_conditions(push_witness(eta, sl_tower, m), sl_tower.levels[m]).holds
    elapsed = time.perf_counter() - t0
    verdict(10, ok, elapsed, 5)


def test_criterion_11_proposition_constants():
    t0 = time.perf_counter()
    tower = build_affine_tower(2, [5, 25])
    rep = partition_bound_check(tower, 1, 5)
    bound_ok = abs(rep.bound - (1 - 2 / sqrt(5))) < 1e-10
    pyth = all(xi_decomposition(tower, n).pythagoras_error < 1e-10 for n in range(3))
    six = build_congruence_tower(2, [2], 1).levels[1]
    est = spectral_gap_estimate(six, iterations=500, seed=0)
    gap_ok = abs(est.value - 1) < 1e-6 and est.iterations <= 500
    elapsed = time.perf_counter() - t0
    verdict(11, bound_ok and pyth and gap_ok, elapsed, 30,
            f"bound={rep.bound:.15f} estimate={est.value:.12g}")


TASK_CONFIGS = {
    "freeness": "affine.cfg",
    "tower-check": "congruence.cfg",
    "cocycle-check": "pipeline.cfg",
    "untwist": "pipeline.cfg",
    "pipeline": "pipeline.cfg",
    "distinguish": "distinguish.cfg",
    "s-invariant": "congruence.cfg",
    "spectral": "congruence.cfg",
    "wc-check": "congruence.cfg",
}


def test_criterion_12_determinism(tmp_path):
    t0 = time.perf_counter()
    assert set(TASK_CONFIGS) == set(TASKS)
    same = 0
    for task, name in TASK_CONFIGS.items():
        outs = []
        for run in range(2):
            out = tmp_path / f"{task}-{run}.tsv"
            main([task, "--config", str(CONFIGS / name), "--seed", "5", "--threads", "2", "--out", str(out)])
            outs.append(out.read_bytes())
        same += outs[0] == outs[1] and len(outs[0]) > 0
    elapsed = time.perf_counter() - t0
    verdict(12, same == len(TASK_CONFIGS), elapsed, 600, f"identical={same}/{len(TASK_CONFIGS)}")
