"""Strict JSON run configurations.

Every experiment has a fixed set of keys with defaults; unknown keys and
out-of-range values are rejected with the offending field named.  The
resolved configuration (all defaults filled in) is what gets written to
``manifest.json``, and feeding that file back reproduces the run.
"""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .fokker_planck import SCHEMES
from .potentials import Potential, PotentialError

EXPERIMENTS = ("pullback", "fp-solve", "contraction", "figure1", "ou-validate", "ergodic")


class ConfigError(ValueError):
    pass


# validators -----------------------------------------------------------------

def _num(lo=None, lo_open=False, hi=None, allow_none=False):
    def check(name, v):
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"field '{name}': expected a finite number, got {v!r}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ConfigError(f"field '{name}': must be {'>' if lo_open else '>='} {lo}, got {v!r}")
        if hi is not None and v > hi:
            raise ConfigError(f"field '{name}': must be <= {hi}, got {v!r}")
        return float(v)
    return check


def _int(lo=None):
    def check(name, v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"field '{name}': expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(f"field '{name}': must be >= {lo}, got {v!r}")
        return int(v)
    return check


def _str(choices=None):
    def check(name, v):
        if not isinstance(v, str):
            raise ConfigError(f"field '{name}': expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(f"field '{name}': must be one of {list(choices)}, got {v!r}")
        return v
    return check


def _bool(name, v):
    if not isinstance(v, bool):
        raise ConfigError(f"field '{name}': expected true/false, got {v!r}")
    return v


def _list(item, min_len=1):
    def check(name, v):
        if not isinstance(v, list) or len(v) < min_len:
            raise ConfigError(f"field '{name}': expected a list with at least {min_len} entries")
        return [item(f"{name}[{i}]", x) for i, x in enumerate(v)]
    return check


def _potential(name, v):
    if not isinstance(v, dict):
        raise ConfigError(f"field '{name}': expected an object {{\"kind\": ..., \"params\": [...]}}")
    try:
        return Potential.from_dict(v).to_dict()
    except (PotentialError, KeyError, TypeError) as exc:
        raise ConfigError(f"field '{name}': {exc}") from None


_POS = _num(0.0, lo_open=True)
_NONNEG = _num(0.0)

COMMON = {
    "experiment": (_str(EXPERIMENTS), None),
    "master_seed": (_int(0), 0),
    "threads": (_int(1), 1),
    "output_dir": (_str(), "out"),
}

SCHEMA = {
    "pullback": {
        "potential": (_potential, {"kind": "quadratic", "params": [1.0]}),
        "sigma": (_POS, 0.5), "eta": (_NONNEG, 0.8),
        "dt": (_POS, 1e-3), "N": (_int(1), 200_000), "tau": (_NONNEG, 10.0),
        "p0": (_num(), 0.0), "n_cells": (_int(2), 1024), "half_width": (_num(0.0, True, allow_none=True), None),
        "converge_tol": (_num(0.0, True, allow_none=True), None),
        "l1_tol": (_POS, 0.05), "var_rel_tol": (_POS, 0.03),
    },
    "fp-solve": {
        "potential": (_potential, {"kind": "quadratic", "params": [1.0]}),
        "sigma": (_POS, 0.5), "eta": (_NONNEG, 0.8),
        "fp_dt": (_POS, 1e-4), "dx": (_POS, 0.01), "half_width": (_num(0.0, True, allow_none=True), None),
        "scheme": (_str(SCHEMES), "chang_cooper"), "path_dt": (_POS, 1e-4),
        "t1": (_POS, 1.0), "p0_mean": (_num(), 0.0), "p0_var": (_POS, 0.01),
        "snapshot_times": (_list(_num(0.0), 0), [0.5]),
        "mass_tol": (_POS, 1e-8), "l1_tol": (_POS, 5e-3),
    },
    "contraction": {
        "potential": (_potential, {"kind": "double_well", "params": [1.0]}),
        "sigma": (_POS, 1.0), "verify": (_bool, True), "eta": (_NONNEG, 0.5),
        "N": (_int(2), 20_000), "dt": (_POS, 1e-3), "checkpoints": (_list(_POS), [1.0, 2.0, 4.0, 8.0]),
        "n_seeds": (_int(1), 5), "x_pair": (_list(_num(), 2), [-1.0, 1.0]), "slack": (_POS, 1.1),
        "n_r": (_int(10), 4000),
    },
    "figure1": {
        "a": (_POS, 1.0), "noise_var": (_POS, 1.0),
        "etas": (_list(_NONNEG), [0.99, math.sqrt(2.0) / 2.0, 0.15]),
        "references": (_list(_num()), [0.04, 0.53, 0.90]),
        "N": (_int(1), 100_000), "T": (_POS, 500.0), "burn_in": (_NONNEG, 50.0),
        "dt": (_POS, 0.01), "dt_obs": (_POS, 0.1), "n_cells": (_int(2), 1024), "tol": (_POS, 0.05),
    },
    "ou-validate": {
        "a": (_POS, 1.0), "sigma": (_POS, 0.5), "eta": (_NONNEG, 0.8),
        "N": (_int(1), 200_000), "tau": (_POS, 10.0), "dt": (_POS, 1e-3),
        "fp_dt": (_POS, 1e-4), "dx": (_POS, 0.01), "path_dt": (_POS, 1e-5),
        "n_paths": (_int(2), 500),
    },
    "ergodic": {
        "potential": (_potential, {"kind": "quadratic", "params": [1.0]}),
        "sigma": (_POS, 0.5), "eta": (_NONNEG, 0.8),
        "observable": (_str(("variance", "mean", "second_moment", "one")), "variance"),
        "T": (_POS, 500.0), "burn_in": (_NONNEG, 50.0), "dt": (_POS, 0.01), "dt_obs": (_POS, 0.1),
        "N": (_int(1), 100_000), "n_paths": (_int(2), 400), "tau": (_POS, 20.0), "N_paths": (_int(1), 2000),
        "n_cells": (_int(2), 1024),
    },
}


def resolve(raw: dict, experiment=None, overrides=None) -> dict:
    """Validate ``raw`` and return the complete configuration with defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    exp = raw.get("experiment", experiment)
    if experiment is not None and exp != experiment:
        raise ConfigError(f"field 'experiment': config is for {exp!r} but subcommand is {experiment!r}")
    if exp not in SCHEMA:
        raise ConfigError(f"field 'experiment': must be one of {list(EXPERIMENTS)}, got {exp!r}")
    raw["experiment"] = exp
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    schema = {**COMMON, **SCHEMA[exp]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown field(s) for experiment {exp!r}: {unknown}")
    out = {}
    for key, (check, default) in schema.items():
        value = raw[key] if key in raw else copy.deepcopy(default)
        out[key] = check(key, value)
    _cross_checks(out)
    return out


def _cross_checks(cfg):
    exp = cfg["experiment"]
    if exp == "figure1":
        if len(cfg["references"]) != len(cfg["etas"]):
            raise ConfigError("field 'references': needs one value per entry of 'etas'")
        for i, e in enumerate(cfg["etas"]):
            if not e * e < cfg["noise_var"]:
                raise ConfigError(f"field 'etas[{i}]': eta^2 must be below noise_var")
    if exp in ("figure1", "ergodic") and not cfg["T"] > cfg["burn_in"]:
        raise ConfigError("field 'burn_in': must be smaller than T")
    if exp == "fp-solve":
        for i, t in enumerate(cfg["snapshot_times"]):
            if not t <= cfg["t1"]:
                raise ConfigError(f"field 'snapshot_times[{i}]': must be <= t1")
    if exp == "contraction" and cfg["x_pair"][0] == cfg["x_pair"][1]:
        raise ConfigError("field 'x_pair': the two starting points must differ")


def load(path, experiment=None, overrides=None) -> dict:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return resolve(raw, experiment, overrides)
