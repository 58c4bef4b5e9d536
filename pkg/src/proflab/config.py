"""Line-based run configuration.

Format::

    # comment
    [section]
    key = value          # lists are space-separated tokens

Unknown sections or keys are rejected.  Every key has a declared type and
default; the canonical text (all sections and keys, defaults filled in,
fixed order) is what the report digest is computed from.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction


class ConfigError(ValueError):
    pass


def _int(s):
    return int(s)


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise ValueError("must be a nonnegative integer")
    return v


def _rational(s):
    return Fraction(s)


def _int_list(s):
    return tuple(int(t) for t in s.split())


def _rat_list(s):
    return tuple(Fraction(t) for t in s.split())


def _words(s):
    """``1 2 1,-2`` -> ``((1,), (2,), (1, -2))``; ``e`` is the empty word."""
    out = []
    for tok in s.split():
        out.append(() if tok == "e" else tuple(int(a) for a in tok.split(",")))
    return tuple(out)


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _text(s):
    return " ".join(s.split())


TASKS = ("freeness", "tower-check", "cocycle-check", "untwist", "pipeline",
         "distinguish", "s-invariant", "spectral", "wc-check")

# section -> key -> (parser, default); default None means "absent"
SCHEMA = {
    "group": {
        "kind": (_choice("sl", "affine"), "sl"),
        "n": (_pos_int, "2"),
        "generators": (_choice("elementary", "st"), "elementary"),
    },
    "tower": {
        "primes": (_int_list, None),
        "moduli": (_int_list, None),
        "depth": (_nonneg_int, None),
        "size_cap": (_pos_int, "2000000"),
    },
    "cocycle": {
        "kind": (_choice("hom", "transversal", "twist", "oe", "load"), None),
        "level": (_nonneg_int, None),
        "target": (_text, None),
        "base": (_choice("hom", "transversal"), "transversal"),
        "base_level": (_nonneg_int, "1"),
        "reduce": (_pos_int, None),
        "phi": (_choice("random", "identity"), "random"),
        "points": (_pos_int, None),
        "theta": (_choice("random", "identity"), "random"),
        "path": (_text, None),
        "seed": (_int, None),
    },
    "task": {
        "name": (_choice(*TASKS), None),
        "words": (_words, None),
        "delta": (_rational, "1/2"),
        "k": (_pos_int, "5"),
        "iterations": (_pos_int, "500"),
        "witness_level": (_nonneg_int, "1"),
        "level": (_nonneg_int, None),
        "trials": (_pos_int, "1000"),
        "max_len": (_nonneg_int, "8"),
        "dim": (_pos_int, "2"),
        "I1": (_int_list, None),
        "I2": (_int_list, None),
        "bound": (_rational, "1"),
        "shift_bound": (_nonneg_int, "8"),
        "s_kind": (_choice("congruence", "affine"), None),
        "sizes": (_int_list, None),
        "moduli": (_int_list, None),
        "t": (_rat_list, None),
        "multipliers": (_int_list, "1 2 3"),
        "seed": (_int, "0"),
    },
    "output": {
        "path": (_text, None),
    },
}


@dataclass
class RunConfig:
    values: dict
    raw: dict
    present: set = field(default_factory=set)

    def get(self, section, key):
        return self.values[section][key]

    def has(self, section):
        return section in self.present

    def canonical(self) -> str:
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for key in keys:
                v = self.raw[sec][key]
                lines.append(f"{key} = {'-' if v is None else v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def set(self, section, key, text):
        parser, _ = SCHEMA[section][key]
        self.values[section][key] = parser(text)
        self.raw[section][key] = _text(text)


def parse_config(text: str) -> RunConfig:
    raw = {sec: {} for sec in SCHEMA}
    present = set()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {body!r}")
            section = body[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            present.add(section)
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside of any section")
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in raw[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        raw[section][key] = value

    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (parser, default) in keys.items():
            text_v = raw[sec].get(key, default)
            if text_v is None:
                values[sec][key] = None
                raw[sec][key] = None
                continue
            try:
                values[sec][key] = parser(text_v)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from None
            raw[sec][key] = _text(text_v)
    cfg = RunConfig(values, raw, present)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    t = cfg.values["tower"]
    if t["primes"] is not None and t["moduli"] is not None:
        raise ConfigError("[tower] give either primes or moduli, not both")
    c = cfg.values["cocycle"]
    if c["kind"] == "twist" and c["phi"] == "random" and c["seed"] is None:
        raise ConfigError("[cocycle] seed is required for kind = twist with random phi")
    if c["kind"] == "oe" and c["theta"] == "random" and c["seed"] is None:
        raise ConfigError("[cocycle] seed is required for kind = oe with random theta")
    if c["kind"] == "load" and c["path"] is None:
        raise ConfigError("[cocycle] path is required for kind = load")
    d = cfg.values["task"]["delta"]
    if not 0 < d < 1:
        raise ConfigError("[task] delta must lie strictly between 0 and 1")
