"""Batch front end: ``proflab <task> --config <path> [--seed N] [--threads N] [--out <path>]``.

Reports are tab-separated text with ``#``-prefixed header lines.  Exact
rationals are written as ``p/q``; floats with 12 significant digits.  The
report depends only on the configuration, the seed and the thread count;
elapsed time goes to stderr.
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .arithmetic import (
    SInvariantSpec,
    distinguisher,
    first_obstruction,
    s_closure_check,
    s_invariant_membership,
)
from .cocycles import (
    check_cocycle_identity,
    check_identity_pairs,
    check_relators,
    concentration,
    load_cocycle,
    make_hom_cocycle,
    make_transversal_cocycle,
    map_values,
    lift_cocycle,
    oe_cocycle,
    projection_inner,
    twist_by_coboundary,
    value_distribution,
)
from .config import SCHEMA, TASKS, ConfigError, RunConfig, parse_config
from .groups import context_from_descriptor, encode, reduce_mod, slmod_context
from .spectral import (
    check_wc_conditions,
    partition_bound_check,
    push_witness,
    spectral_gap_estimate,
    weak_compact_witness,
)
from .towers import build_affine_tower, build_congruence_tower, fix_theta_index, freeness_profile
from .untwist import Status, superrigidity_pipeline, untwist_to_hom

EXIT_OK, EXIT_CONFIG, EXIT_TASK, EXIT_INCONCLUSIVE = 0, 2, 3, 4


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, (tuple, list)):
        return " ".join(fmt(x) for x in v) if v else "-"
    if v is None:
        return "-"
    if hasattr(v, "inv"):
        return encode(v).hex()
    return str(v)


def word_text(w) -> str:
    return ",".join(str(a) for a in w) if w else "e"


class Report:
    def __init__(self, task: str, cfg: RunConfig, seed, threads):
        self.task = task
        self.head = [("proflab", __version__), ("task", task), ("config_sha256", cfg.digest()),
                     ("seed", fmt(seed)), ("threads", str(threads))]
        self.sections = []
        self.status = EXIT_OK
        self.add("config", ("key", "value"),
                 [(f"{sec}.{k}", cfg.raw[sec][k]) for sec, keys in SCHEMA.items() for k in keys])

    def add(self, name, columns, rows):
        self.sections.append((name, tuple(columns), [tuple(fmt(c) for c in r) for r in rows]))

    def text(self) -> str:
        out = [f"# {k}\t{v}" for k, v in self.head]
        for name, cols, rows in self.sections:
            out.append(f"## {name}")
            out.append("#" + "\t".join(cols))
            out += ["\t".join(r) for r in rows]
        return "\n".join(out) + "\n"


# --- builders ---------------------------------------------------------------


def build_tower(cfg: RunConfig):
    if not cfg.has("tower"):
        raise ConfigError("this task needs a [tower] section")
    g, t = cfg.values["group"], cfg.values["tower"]
    if g["kind"] == "sl":
        if t["primes"] is None:
            raise ConfigError("[tower] primes is required for kind = sl")
        return build_congruence_tower(g["n"], t["primes"], t["depth"], g["generators"], t["size_cap"])
    if t["moduli"] is None:
        raise ConfigError("[tower] moduli is required for kind = affine")
    moduli = t["moduli"] if t["depth"] is None else t["moduli"][: t["depth"]]
    return build_affine_tower(g["n"], moduli, t["size_cap"])


def _reducer(tower, m):
    n = tower.meta["n"]
    target = slmod_context(n, m, "elementary")
    return target, (lambda v: reduce_mod(v, m))


def _target_modulus(c, tower):
    if c["reduce"] is not None:
        return c["reduce"]
    if c["target"] is not None:
        ctx = context_from_descriptor(c["target"])
        if ctx.kind != "slmod":
            raise ConfigError("[cocycle] target must be an slmod descriptor")
        return ctx.modulus
    return None


def build_cocycle(cfg: RunConfig, tower):
    c = cfg.values["cocycle"]
    if not cfg.has("cocycle") or c["kind"] is None:
        raise ConfigError("this task needs a [cocycle] section with a kind")
    if tower.kind != "congruence" and c["kind"] != "load":
        raise ConfigError("cocycle constructions need a congruence tower (group kind = sl)")
    level = tower.depth if c["level"] is None else c["level"]
    if level > tower.depth:
        raise ConfigError(f"[cocycle] level {level} exceeds the tower depth {tower.depth}")
    rng = random.Random(c["seed"])
    kind = c["kind"]
    if kind == "load":
        return load_cocycle(Path(c["path"]).read_text(), tower)
    if kind == "oe":
        m = tower.moduli[level]
        if m < 2:
            raise ConfigError("[cocycle] oe needs a level with modulus at least 2")
        target = slmod_context(tower.meta["n"], m)
        lv = tower.levels[level]
        theta = list(range(lv.size))
        if c["theta"] == "random":
            rng.shuffle(theta)
        return oe_cocycle(lv, lv, target, theta, tower=tower, level=level)

    m = _target_modulus(c, tower)
    if kind in ("hom", "transversal"):
        base, base_level = kind, level
    else:
        base, base_level = c["base"], c["base_level"]
        if base_level > level:
            raise ConfigError("[cocycle] base_level must not exceed level")
    if base == "hom":
        if m is None:
            raise ConfigError("[cocycle] hom cocycles need a target modulus (target or reduce)")
        target, red = _reducer(tower, m)
        w = make_hom_cocycle(tower.levels[base_level], [red(g) for g in tower.group.generators],
                             target, tower.group.relators, tower=tower, level=base_level)
    else:
        w = make_transversal_cocycle(tower, base_level)
        if m is not None:
            target, red = _reducer(tower, m)
            w = map_values(w, red, target)
    if kind != "twist":
        return w
    if c["seed"] is not None and w.target.is_finite:
        conj = rng.choice(w.target.enumerate().elements)
        cinv = conj.inv()
        w = map_values(w, lambda v: conj * v * cinv, w.target)
    w = lift_cocycle(tower, w, level)
    if c["phi"] == "identity":
        return w
    if not w.target.is_finite:
        raise ConfigError("[cocycle] random phi needs a finite target (set reduce)")
    els = w.target.enumerate().elements
    e = w.target.identity()
    phi = [e] * w.size
    pts = list(range(w.size))
    if c["points"] is not None:
        pts = sorted(rng.sample(pts, min(c["points"], w.size)))
    for x in pts:
        phi[x] = rng.choice(els)
    return twist_by_coboundary(w, phi)


# --- tasks ------------------------------------------------------------------


def _gen_words(tower):
    return tuple((s + 1,) for s in range(len(tower.group.generators)))


def task_freeness(cfg, rep):
    tower = build_tower(cfg)
    words = cfg.get("task", "words") or _gen_words(tower)
    rows = []
    for w, ratios, trend in freeness_profile(tower, words):
        for k, r in enumerate(ratios):
            rows.append((word_text(w), k, tower.levels[k].size, r, trend))
    rep.add("fix_ratio", ("word", "level", "size", "ratio", "trend"), rows)
    if tower.kind == "affine":
        rows = []
        for w in words:
            g = tower.group.word_eval(w)
            if any(g.vec):
                continue
            for k, idx in enumerate(fix_theta_index(tower, w)):
                rows.append((word_text(w), k, idx))
        rep.add("fix_theta_index", ("word", "level", "index"), rows)


def task_tower_check(cfg, rep):
    tower = build_tower(cfg)
    tower.verify()
    rep.add("tower", ("kind", "depth", "digest"), [(tower.kind, tower.depth, tower.digest)])
    rep.add("levels", ("level", "label", "size", "fiber_over", "generators", "modulus", "transitive"),
            [row + (tower.moduli[row[0]], tower.levels[row[0]].is_transitive())
             for row in tower.summary_rows()])


def task_cocycle_check(cfg, rep):
    tower = build_tower(cfg)
    w = build_cocycle(cfg, tower)
    t = cfg.values["task"]
    n_ok = check_cocycle_identity(w, t["trials"], t["max_len"], t["seed"])
    relators = tower.group.relators if tower.group is not None else ()
    check_relators(w, relators)
    n_pairs = check_identity_pairs(w, relators, t["trials"], t["max_len"], t["seed"])
    rep.add("cocycle", ("points", "generators", "target", "level", "identity_trials", "relators",
                        "equal_word_trials"),
            [(w.size, w.ngens, w.target.describe(), w.level, n_ok, len(relators), n_pairs)])
    rows = []
    for s in range(w.ngens):
        for lam, mass in value_distribution(w, (s + 1,)).items():
            rows.append((s + 1, lam, mass))
    rep.add("value_distribution", ("generator", "value", "mass"), rows)
    rows = []
    for s in range(w.ngens):
        rows.append((s + 1, concentration(w, (s + 1,)),
                     [projection_inner(tower, w, (s + 1,), n) for n in range(w.level + 1)]))
    rep.add("concentration", ("generator", "concentration", "projection_by_level"), rows)


def task_untwist(cfg, rep):
    tower = build_tower(cfg)
    w = build_cocycle(cfg, tower)
    res = untwist_to_hom(w)
    if res is None:
        rep.add("untwist", ("status",), [("Inconclusive",)])
        rep.status = EXIT_INCONCLUSIVE
        return
    psi, phi = res
    rep.add("untwist", ("status",), [("Untwisted",)])
    rep.add("psi", ("generator", "value"), [(s + 1, v) for s, v in enumerate(psi)])
    rep.add("phi", ("point", "value"), [(x, v) for x, v in enumerate(phi)])


def task_pipeline(cfg, rep):
    tower = build_tower(cfg)
    w = build_cocycle(cfg, tower)
    r = superrigidity_pipeline(tower, w, cfg.get("task", "delta"))
    rep.add("header", ("status", "n", "a", "N", "delta", "gate"),
            [(r.status.value, r.n, r.a, r.N, r.delta, r.gate)])
    rep.add("notes", ("note",), [(n,) for n in r.notes])
    rep.add("level_profile", ("level", "min_projection"), r.level_profile)
    if r.best is not None:
        rep.add("best", ("n", "a", "min_concentration"), [r.best])
    rep.add("concentration", ("schreier_word", "concentration"),
            [(word_text(u), c) for u, c in r.concentrations])
    rep.add("psi", ("schreier_word", "value"), [(word_text(u), v) for u, v in r.psi])
    rep.add("phi", ("point", "value"), [(x, v) for x, v in enumerate(r.phi)])
    if r.factored is not None:
        rep.add("factored", ("generator", "point", "value"),
                [(s + 1, x, v) for s, col in enumerate(r.factored.table) for x, v in enumerate(col)])
    if r.status is Status.INCONCLUSIVE:
        rep.status = EXIT_INCONCLUSIVE


def task_distinguish(cfg, rep):
    t = cfg.values["task"]
    if t["I1"] is None or t["I2"] is None:
        raise ConfigError("[task] I1 and I2 are required for distinguish")
    stages = distinguisher(t["dim"], t["I1"], t["I2"], t["bound"], t["shift_bound"])
    rep.add("stages", ("stage", "shift", "missing", "product", "verdict"),
            [(s.stage, s.shift, s.missing, s.product, s.verdict) for s in stages])
    hit = first_obstruction(stages)
    rep.add("summary", ("verdict", "stage"),
            [("Obstructed", hit.stage) if hit else ("Consistent", "-")])


def _s_spec(cfg):
    t = cfg.values["task"]
    kind = t["s_kind"]
    if t["sizes"] is not None and kind in (None, "congruence"):
        return SInvariantSpec.congruence(t["sizes"])
    if t["moduli"] is not None and kind in (None, "affine"):
        return SInvariantSpec.affine(t["dim"], t["moduli"])
    if cfg.has("tower"):
        tower = build_tower(cfg)
        if tower.kind == "affine":
            return SInvariantSpec.affine(tower.meta["n"], tower.meta["moduli"])
        return SInvariantSpec.congruence(tower.sizes()[1:])
    raise ConfigError("[task] s-invariant needs sizes, moduli or a tower")


def task_s_invariant(cfg, rep):
    t = cfg.values["task"]
    if not t["t"]:
        raise ConfigError("[task] t is required for s-invariant")
    spec = _s_spec(cfg)
    rep.add("spec", ("kind", "sizes"), [(spec.kind, spec.sizes)])
    rows, closure = [], []
    for v in t["t"]:
        m = s_invariant_membership(spec, v)
        rows.append((v, "Member" if m.member else "NotAtTruncation", m.numerator, m.index))
        if m.member:
            for k, ok in zip(t["multipliers"], s_closure_check(spec, v, t["multipliers"])):
                closure.append((v, k, k * v, ok))
    rep.add("membership", ("t", "verdict", "numerator", "level"), rows)
    rep.add("closure", ("t", "multiplier", "product", "member"), closure)


def task_spectral(cfg, rep):
    tower = build_tower(cfg)
    t = cfg.values["task"]
    n = t["witness_level"]
    r = partition_bound_check(tower, n, t["k"])
    rep.add("decomposition", ("size", "witness_level", "xi", "xi0", "xi1", "xi2", "pythagoras_error"),
            [(r.size, r.n, r.norm_xi, r.norm_xi0, r.norm_xi1, r.norm_xi2, r.pythagoras_error)])
    rep.add("partition", ("k", "partition_norm", "projected_xi0", "bound"),
            [(r.k, r.partition_norm, r.projected_xi0, r.bound)])
    rep.add("scaling", ("j", "partitioned", "sqrt_k_scaled"), r.scaled)
    level = 1 if t["level"] is None else t["level"]
    g = spectral_gap_estimate(tower.levels[level], t["words"], t["iterations"], t["seed"])
    rep.add("gap", ("level", "size", "estimate", "residual", "iterations", "seed"),
            [(level, tower.levels[level].size, g.value, g.residual, g.iterations, g.seed)])


def task_wc_check(cfg, rep):
    tower = build_tower(cfg)
    D = tower.depth
    rows, pushed = [], []
    for n in range(D + 1):
        eta = weak_compact_witness(tower, n)
        sets = [tower.fiber(m, a) for m in range(n + 1) for a in range(tower.levels[m].size)]
        wc = check_wc_conditions(eta, tower.levels[D], sets)
        rows.append((n, wc.l1, wc.marginals_one, max((v for _, v in wc.leaks), default=Fraction(0)),
                     max(v for _, v in wc.invariance), wc.holds))
        for m in range(D + 1):
            p = push_witness(eta, tower, m)
            psets = [tower.fiber(j, a, m) for j in range(min(n, m) + 1)
                     for a in range(tower.levels[j].size)]
            pc = check_wc_conditions(p, tower.levels[m], psets)
            pushed.append((n, m, pc.l1, pc.marginals_one, pc.holds))
    rep.add("witness", ("level", "l1", "marginals_one", "max_saturated_leak", "max_invariance_defect",
                        "holds"), rows)
    rep.add("pushed", ("witness_level", "target_level", "l1", "marginals_one", "holds"), pushed)


DISPATCH = {
    "freeness": task_freeness,
    "tower-check": task_tower_check,
    "cocycle-check": task_cocycle_check,
    "untwist": task_untwist,
    "pipeline": task_pipeline,
    "distinguish": task_distinguish,
    "s-invariant": task_s_invariant,
    "spectral": task_spectral,
    "wc-check": task_wc_check,
}


def run_task(task: str, cfg: RunConfig, seed=None, threads: int = 1) -> Report:
    if task not in DISPATCH:
        raise ConfigError(f"unknown task {task!r}")
    named = cfg.get("task", "name")
    if named is not None and named != task:
        raise ConfigError(f"config names task {named!r} but {task!r} was requested")
    rep = Report(task, cfg, seed, threads)
    if seed is not None:
        cfg = parse_config(_with_seed(cfg, seed))
    DISPATCH[task](cfg, rep)
    return rep


def _with_seed(cfg: RunConfig, seed: int) -> str:
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k in keys:
            v = cfg.raw[sec][k]
            if k == "seed" and sec in ("cocycle", "task"):
                v = str(seed)
            if v is not None:
                lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="proflab", description="Run one proflab task and write a TSV report.")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1,
                    help="recorded in the report; computations run sequentially")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = parse_config(args.config.read_text())
        out = args.out or (Path(cfg.get("output", "path")) if cfg.get("output", "path") else None)
        rep = run_task(args.task, cfg, args.seed, args.threads)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # surfaced verbatim with context
        print(f"task {args.task} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TASK
    text = rep.text()
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
    print(f"elapsed\t{time.perf_counter() - start:.3f}s", file=sys.stderr)
    return rep.status


if __name__ == "__main__":
    sys.exit(main())
