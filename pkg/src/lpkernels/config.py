"""Run configuration: YAML file -> validated RunConfig with field-path errors."""
from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .errors import ConfigError
from .potential import BUILTINS

SUBCOMMANDS = ("kato", "kernel", "decay", "summability", "lowfreq", "lpnorms", "sobolev",
               "oracle-compare", "thresholds")

DEFAULTS: dict = {
    "scenario": "unnamed",
    "seed": 0,
    "jobs": 1,
    "potential": {"kind": "yukawa", "amplitude": 0.5, "mu": 1.0},
    "profile": {"m": 3, "s": None},
    "thresholds": "auto",
    "series": {"max_n": 6, "mc_samples": 20000, "mc_budget": 80000, "term_tolerance": 1e-3,
               "lam_nodes": 24},
    "grids": {
        "quadrature": {"n_panels": 10, "n_radial": 3, "n_theta": 6},
        "lattice": {"N": [1.0, 2.0], "t": [0, 1, 2, 3, 5, 7, 10, 14, 20, 28, 40, 56, 80, 100],
                    "x0": [0.3, 0.0, 0.0], "direction": [0.6, 0.8, 0.0]},
    },
    "checks": ["kato", "kernel", "summability", "thresholds"],
    "kernel": {"points": [{"N": 1.0, "x": [0.3, 0.0, 0.0], "y": [0.0, 0.5, 0.4]}]},
    "decay": {"m": [1, 3]},
    "summability": {"n_max": 4, "q": None,
                    "triples": [{"N": 0.125, "x": [0, 0, 0], "y": [0.5, 0, 0]}]},
    "oracle_compare": {"tolerance": 0.05,
                       "triples": [{"N": 1.0, "x": [0, 0, 0], "y": [0.5, 0, 0]}]},
    "lpnorms": {"pairs": [[2, 2], [1, 2], [1, "inf"]], "N": [0.25, 0.5, 1, 2, 4, 8]},
    "sobolev": {"s": 1.0, "p": 2.0, "q": 6.0, "widths": [0.25, 0.5, 1, 2, 4, 8],
                "potential": None},
    "lowfreq": {"samples": 10, "n_max": 6, "m": 2, "N": None},
    "n1": {"eps": "kato", "include_resolvent_eps": False},
}


@dataclass
class RunConfig:
    scenario: str
    seed: int
    jobs: int
    potential: dict
    profile: dict
    thresholds: Any
    series: dict
    grids: dict
    checks: list
    sections: dict = field(default_factory=dict)
    source: Optional[str] = None

    def section(self, name: str) -> dict:
        return self.sections[name]

    def to_dict(self) -> dict:
        out = {"scenario": self.scenario, "seed": self.seed, "jobs": self.jobs,
               "potential": self.potential, "profile": self.profile,
               "thresholds": self.thresholds, "series": self.series, "grids": self.grids,
               "checks": self.checks}
        out.update(self.sections)
        return copy.deepcopy(out)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(f"unknown field {where!r}", field_path=where)
        if isinstance(base[k], dict) and isinstance(v, dict) and k != "potential":
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = v
    return out


def _number(value, path, positive=False, integer=False):
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        value = math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}", field_path=path)
    if integer and (not float(value).is_integer()):
        raise ConfigError(f"{path} must be an integer, got {value!r}", field_path=path)
    if positive and not value > 0:
        raise ConfigError(f"{path} must be positive, got {value!r}", field_path=path)
    return int(value) if integer else float(value)


def _point(value, path):
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{path} must be a list of three numbers", field_path=path)
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _triples(items, path):
    out = []
    for i, t in enumerate(items):
        where = f"{path}[{i}]"
        if not isinstance(t, dict) or set(t) != {"N", "x", "y"}:
            raise ConfigError(f"{where} needs exactly the keys N, x, y", field_path=where)
        out.append({"N": _number(t["N"], f"{where}.N", positive=True),
                    "x": _point(t["x"], f"{where}.x"), "y": _point(t["y"], f"{where}.y")})
    return out


def _potential(spec, path):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{path} needs a 'kind'", field_path=f"{path}.kind")
    if spec["kind"] not in BUILTINS:
        raise ConfigError(f"{path}.kind {spec['kind']!r} is not one of {sorted(BUILTINS)}",
                          field_path=f"{path}.kind")
    for k, v in spec.items():
        if k != "kind":
            _number(v, f"{path}.{k}")
    return dict(spec)


def validate(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping", field_path="")
    cfg = _merge(DEFAULTS, raw)
    cfg["seed"] = _number(cfg["seed"], "seed", integer=True)
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer", field_path="seed")
    cfg["jobs"] = _number(cfg["jobs"], "jobs", positive=True, integer=True)
    cfg["potential"] = _potential(cfg["potential"], "potential")
    m = _number(cfg["profile"]["m"], "profile.m", integer=True)
    if m < 0:
        raise ConfigError("profile.m must be nonnegative", field_path="profile.m")
    cfg["profile"]["m"] = m
    if cfg["profile"]["s"] is not None:
        cfg["profile"]["s"] = _number(cfg["profile"]["s"], "profile.s")
    th = cfg["thresholds"]
    if th != "auto":
        if not isinstance(th, dict) or set(th) - {"N0", "N1"}:
            raise ConfigError("thresholds must be 'auto' or a mapping with N0, N1",
                              field_path="thresholds")
        for k in th:
            th[k] = _number(th[k], f"thresholds.{k}", positive=True)
    s = cfg["series"]
    s["max_n"] = _number(s["max_n"], "series.max_n", integer=True)
    if s["max_n"] < 0:
        raise ConfigError("series.max_n must be nonnegative", field_path="series.max_n")
    for k in ("mc_samples", "mc_budget", "lam_nodes"):
        s[k] = _number(s[k], f"series.{k}", positive=True, integer=True)
    s["term_tolerance"] = _number(s["term_tolerance"], "series.term_tolerance", positive=True)
    q = cfg["grids"]["quadrature"]
    for k in q:
        q[k] = _number(q[k], f"grids.quadrature.{k}", positive=True, integer=True)
    lat = cfg["grids"]["lattice"]
    lat["N"] = [_number(v, f"grids.lattice.N[{i}]", positive=True) for i, v in enumerate(lat["N"])]
    lat["t"] = [_number(v, f"grids.lattice.t[{i}]") for i, v in enumerate(lat["t"])]
    lat["x0"] = _point(lat["x0"], "grids.lattice.x0")
    lat["direction"] = _point(lat["direction"], "grids.lattice.direction")
    if not isinstance(cfg["checks"], list):
        raise ConfigError("checks must be a list", field_path="checks")
    for i, c in enumerate(cfg["checks"]):
        if c not in SUBCOMMANDS:
            raise ConfigError(f"checks[{i}] = {c!r} is not one of {list(SUBCOMMANDS)}",
                              field_path=f"checks[{i}]")
    cfg["kernel"]["points"] = _triples(cfg["kernel"]["points"], "kernel.points")
    cfg["summability"]["triples"] = _triples(cfg["summability"]["triples"], "summability.triples")
    cfg["summability"]["n_max"] = _number(cfg["summability"]["n_max"], "summability.n_max",
                                          integer=True)
    cfg["oracle_compare"]["triples"] = _triples(cfg["oracle_compare"]["triples"],
                                                "oracle_compare.triples")
    pairs = []
    for i, pq in enumerate(cfg["lpnorms"]["pairs"]):
        if not isinstance(pq, (list, tuple)) or len(pq) != 2:
            raise ConfigError(f"lpnorms.pairs[{i}] must be [p, q]", field_path=f"lpnorms.pairs[{i}]")
        pairs.append([_number(pq[0], f"lpnorms.pairs[{i}][0]"),
                      _number(pq[1], f"lpnorms.pairs[{i}][1]")])
    cfg["lpnorms"]["pairs"] = pairs
    if cfg["sobolev"]["potential"] is not None:
        cfg["sobolev"]["potential"] = _potential(cfg["sobolev"]["potential"], "sobolev.potential")
    if cfg["n1"]["eps"] not in ("kato", "resolvent"):
        raise ConfigError("n1.eps must be 'kato' or 'resolvent'", field_path="n1.eps")
    sections = {k: cfg[k] for k in ("kernel", "decay", "summability", "oracle_compare", "lpnorms",
                                    "sobolev", "lowfreq", "n1")}
    return RunConfig(str(cfg["scenario"]), cfg["seed"], cfg["jobs"], cfg["potential"],
                     cfg["profile"], cfg["thresholds"], cfg["series"], cfg["grids"],
                     list(cfg["checks"]), sections)


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return validate({})
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}", field_path="--config") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path!r} is not valid YAML: {exc}", field_path="") from None
    cfg = validate(raw)
    cfg.source = os.path.abspath(path)
    return cfg


def apply_overrides(cfg: RunConfig, seed=None, jobs=None, environ=os.environ) -> RunConfig:
    """Command-line values win over LPKERNELS_SEED / LPKERNELS_JOBS, which win over the file."""
    env_seed, env_jobs = environ.get("LPKERNELS_SEED"), environ.get("LPKERNELS_JOBS")
    if seed is None and env_seed is not None:
        seed = env_seed
    if jobs is None and env_jobs is not None:
        jobs = env_jobs
    if seed is not None:
        try:
            cfg.seed = int(seed)
        except ValueError:
            raise ConfigError(f"seed {seed!r} is not an integer", field_path="seed") from None
        if not 0 <= cfg.seed < 2 ** 64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer", field_path="seed")
    if jobs is not None:
        try:
            cfg.jobs = int(jobs)
        except ValueError:
            raise ConfigError(f"jobs {jobs!r} is not an integer", field_path="jobs") from None
        if cfg.jobs < 1:
            raise ConfigError("jobs must be at least 1", field_path="jobs")
    return cfg
