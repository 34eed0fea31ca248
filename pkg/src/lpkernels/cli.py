"""lpkernels command line: diagnostics, sweeps and the acceptance run.

    lpkernels kato --config scenario.yaml --out results/
    lpkernels all --config scenario.yaml --seed 7 --out results/ --figures

Each subcommand writes <out>/<name>.json (verdict, resolved config, threshold
ledger, results) and one CSV per table.  Exit codes: 0 all verdicts pass,
1 some verdict fails, 2 usage or configuration error, 3 near-resonance flag.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import oracle, verify
from .born_series import SeriesConfig, build_resolvent_setup, free_LP_kernel, projection_kernel
from .config import SUBCOMMANDS, RunConfig, apply_overrides, load_config
from .errors import (BudgetExceeded, ConfigError, LPKernelError, NearResonanceError,
                     RegimeError)
from .multiplier import make_bump
from .potential import (FOUR_PI, kato_norm, l1_norm, make_potential, radial_kato_profile)
from .resolvent_ops import grid_for_potential

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RESONANCE = 0, 1, 2, 3
TIMESTAMP_FIELD = "generated_at"


def shipped_config(name: str) -> str:
    """Path of a scenario file shipped with the package (e.g. 'small-yukawa')."""
    path = resources.files("lpkernels") / "scenarios" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"no shipped scenario {name!r}", field_path="--config")
    return str(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Context:
    """Objects shared by the subcommands of one invocation."""

    def __init__(self, cfg: RunConfig, out: Path, use_cache: bool, figures: bool):
        self.cfg = cfg
        self.out = out
        self.figures = figures
        self.cache_dir = None
        if use_cache:
            self.cache_dir = os.environ.get(
                "LPKERNELS_CACHE", os.path.join(Path.home(), ".cache", "lpkernels"))
        self.V = make_potential(cfg.potential["kind"],
                                **{k: v for k, v in cfg.potential.items() if k != "kind"})
        self.profile = make_bump(sobolev_s=cfg.profile["s"])
        self.kato = kato_norm(self.V).value
        self._setup = None
        self._ledger = None

    # thresholds -----------------------------------------------------------

    def grid(self):
        q = self.cfg.grids["quadrature"]
        return grid_for_potential(self.V, q["n_panels"], q["n_radial"], q["n_theta"],
                                  seed=self.cfg.seed)

    def setup(self):
        if self._setup is None:
            self._setup = build_resolvent_setup(self.V, self.grid(), kato=self.kato)
        return self._setup

    def _ledger_cache_path(self):
        if not self.cache_dir:
            return None
        blob = json.dumps({"V": self.V.fingerprint(), "grid": self.cfg.grids["quadrature"],
                           "seed": self.cfg.seed, "n1": self.cfg.section("n1")},
                          sort_keys=True)
        key = hashlib.sha256(blob.encode()).hexdigest()[:20]
        return os.path.join(self.cache_dir, f"thresholds_{key}.json")

    def thresholds(self, full: bool = False) -> dict:
        """The threshold ledger; ``full`` forces eps, delta, N0 and N1 even when not needed."""
        if self._ledger is not None and (not full or "N1" in self._ledger):
            return self._ledger
        if self.V.is_zero:
            self._ledger = verify.threshold_ledger(self.V)
            return self._ledger
        th = self.cfg.thresholds
        if th != "auto":
            self._ledger = {"kato_norm": self.kato, "N0": th.get("N0"), "N1": th.get("N1"),
                            "source": "config"}
            return self._ledger
        if self.kato < FOUR_PI and not full:
            self._ledger = {"kato_norm": self.kato, "q": self.kato / FOUR_PI,
                            "regime": "small-potential", "N0": None, "N1": None,
                            "note": "||V||_K < 4 pi: the Born series converges at every N"}
            return self._ledger
        path = self._ledger_cache_path()
        if path and os.path.exists(path):
            with open(path) as fh:
                self._ledger = json.load(fh)
            return self._ledger
        n1 = self.cfg.section("n1")
        led = verify.threshold_ledger(self.V, setup=self.setup(), n1_eps=n1["eps"])
        if n1["include_resolvent_eps"]:
            from .resolvent_ops import find_N1
            led["N1_resolvent_eps"] = find_N1(self.V, led["eps"])
        led["regime"] = "small-potential" if self.kato < FOUR_PI else "thresholds"
        self._ledger = _jsonable(led)
        if path:
            os.makedirs(self.cache_dir, exist_ok=True)
            with open(path, "w") as fh:
                json.dump(self._ledger, fh, sort_keys=True)
        return self._ledger

    def series_config(self) -> SeriesConfig:
        s = self.cfg.series
        cfg = SeriesConfig(max_n=s["max_n"], term_tolerance=s["term_tolerance"],
                           mc_samples=s["mc_samples"], mc_budget=s["mc_budget"],
                           seed=self.cfg.seed, profile=self.profile, m=self.cfg.profile["m"],
                           lam_nodes=s["lam_nodes"])
        if self.kato >= FOUR_PI:
            led = self.thresholds()
            cfg.N0, cfg.N1 = led.get("N0"), led.get("N1")
            if self.cfg.thresholds == "auto":
                cfg.setup = self.setup()
        return cfg


# ---------------------------------------------------------------------------
# subcommands: each returns (verdict, results, tables)


def _rows_with_regime(rows, regime):
    return [dict(regime=regime, **r) for r in rows]


def cmd_kato(ctx: Context):
    est = kato_norm(ctx.V)
    closed = ctx.V.closed_form_kato
    rel = abs(est.value / closed - 1) if closed else None
    radii, K = radial_kato_profile(ctx.V) if ctx.V.radial and not ctx.V.is_zero else ([], [])
    step = max(1, len(radii) // 200)
    table = [{"a": float(a), "kato_integral": float(k)} for a, k in
             zip(radii[::step], K[::step])]
    ok = math.isfinite(est.value) and (rel is None or rel <= 1e-6)
    res = {"kato_norm": est.value, "method": est.method, "closed_form": closed,
           "relative_error": rel, "l1_norm": l1_norm(ctx.V) if not ctx.V.is_zero else 0.0,
           "q": est.value / FOUR_PI, "small_potential": est.value < FOUR_PI}
    return ok, res, {"profile": table}


def cmd_kernel(ctx: Context):
    cfg = ctx.series_config()
    rows = []
    for p in ctx.cfg.section("kernel")["points"]:
        x, y = np.array(p["x"]), np.array(p["y"])
        ev = projection_kernel(p["N"], x, y, ctx.V, cfg, ctx.kato)
        rho = float(np.linalg.norm(x - y))
        rows.append({"regime": ev.regime, "N": p["N"], "rho": rho, "n": "sum",
                     "value": ev.value, "stderr": ev.mc_stderr,
                     "envelope": ev.truncation_bound, "free": free_LP_kernel(p["N"], x, y,
                                                                              ctx.profile),
                     "imag_residue": ev.imag_residue})
    ok = all(math.isfinite(r["value"]) and abs(r["imag_residue"]) <= 1e-9 for r in rows)
    return ok, {"points": rows}, {"kernel": rows}


def cmd_decay(ctx: Context):
    cfg = ctx.series_config()
    lat = ctx.cfg.grids["lattice"]
    rows = verify.kernel_lattice(ctx.V, lat["N"], lat["t"], cfg, lat["x0"], lat["direction"],
                                 jobs=ctx.cfg.jobs)
    reports = [verify.decay_report(rows, m, rows[0]["regime"], ctx.cfg.scenario, ctx.profile)
               for m in ctx.cfg.section("decay")["m"]]
    ok = all(r.verdict == verify.PASS for r in reports)
    table = []
    for r in reports:
        for row in r.rows:
            table.append({"regime": row["regime"], "N": row["N"], "rho": row["rho"], "n": "sum",
                          "value": row["value"], "stderr": row["stderr"],
                          "envelope": r.fitted_constant * row["envelope"], "m": r.m})
    summary = [{k: v for k, v in r.as_dict().items() if k != "rows"} for r in reports]
    return ok, {"reports": summary}, {"decay": table}


def cmd_summability(ctx: Context):
    sec = ctx.cfg.section("summability")
    cfg = ctx.series_config()
    sweeps, table = [], []
    for t in sec["triples"]:
        rep = verify.summability_sweep(ctx.V, t["N"], np.array(t["x"]), np.array(t["y"]),
                                       sec["n_max"], cfg, q=sec["q"])
        sweeps.append(rep)
        rho = float(np.linalg.norm(np.array(t["x"]) - np.array(t["y"])))
        for row in rep["terms"]:
            table.append({"regime": "small-potential", "N": t["N"], "rho": rho, "n": row["n"],
                          "value": row["value"], "stderr": row["stderr"],
                          "envelope": row["envelope"]})
    ok = all(s["verdict"] == verify.PASS for s in sweeps)
    return ok, {"sweeps": sweeps}, {"terms": table}


def cmd_lowfreq(ctx: Context):
    if ctx.V.is_zero:
        return True, {"note": "zero potential: no correction"}, {}
    sec = ctx.cfg.section("lowfreq")
    setup = ctx.setup()
    rng = np.random.default_rng(ctx.cfg.seed)
    xs = verify._random_points(rng, sec["samples"], setup.grid)
    ys = verify._random_points(rng, sec["samples"], setup.grid)
    N = sec["N"] or setup.N0
    rep = verify.lowfreq_majorant_check(setup, N, list(zip(xs, ys)), sec["n_max"], sec["m"],
                                        ctx.profile)
    norms = [{"n": n, "norm": v, "bound": b} for n, (v, b) in
             enumerate(zip(rep["norms"], rep["norm_bounds"]))]
    return rep["verdict"] == verify.PASS, rep, {"norms": norms, "integral": rep["integral"]}


def cmd_lpnorms(ctx: Context):
    sec = ctx.cfg.section("lpnorms")
    reps = [verify.lp_lq_scaling(ctx.V, p, q, sec["N"]) for p, q in sec["pairs"]]
    table = []
    for r in reps:
        for N, v in zip(r.N_list, r.norms):
            table.append({"p": r.p, "q": r.q, "N": N, "norm_lower_bound": v})
    return all(r.verdict == verify.PASS for r in reps), {"reports": [r.as_dict() for r in reps]}, \
        {"norms": table}


def cmd_sobolev(ctx: Context):
    sec = ctx.cfg.section("sobolev")
    V = ctx.V
    if sec["potential"] is not None:
        spec = sec["potential"]
        V = make_potential(spec["kind"], **{k: v for k, v in spec.items() if k != "kind"})
    rep = verify.sobolev_check(V, sec["s"], sec["p"], sec["q"], sec["widths"])
    return rep["verdict"] == verify.PASS, rep, {"ratios": rep["rows"]}


def cmd_oracle_compare(ctx: Context):
    sec = ctx.cfg.section("oracle_compare")
    cfg = ctx.series_config()
    triples = [(t["N"], np.array(t["x"]), np.array(t["y"])) for t in sec["triples"]]
    rows = []
    for N, x, y in triples:
        ev = projection_kernel(N, x, y, ctx.V, cfg, ctx.kato)
        o = oracle.projection_kernel_oracle(N, x, y, ctx.V, cache_dir=ctx.cache_dir)
        rel = abs(ev.value - o) / abs(o)
        allowed = max(sec["tolerance"], 3 * ev.mc_stderr / abs(o))
        rows.append({"regime": ev.regime, "N": N, "rho": float(np.linalg.norm(x - y)),
                     "series": ev.value, "stderr": ev.mc_stderr, "oracle": o,
                     "relative_error": rel, "ok": rel <= allowed})
    return all(r["ok"] for r in rows), {"rows": rows}, {"compare": rows}


def cmd_thresholds(ctx: Context):
    led = ctx.thresholds(full=True)
    if ctx.V.is_zero:
        return True, led, {}
    ok = all(led.get(k) is not None for k in ("eps", "delta", "N0", "N1"))
    details = led.get("lambda_samples", [])
    return ok, led, {"lambda_samples": details}


HANDLERS = {"kato": cmd_kato, "kernel": cmd_kernel, "decay": cmd_decay,
            "summability": cmd_summability, "lowfreq": cmd_lowfreq, "lpnorms": cmd_lpnorms,
            "sobolev": cmd_sobolev, "oracle-compare": cmd_oracle_compare,
            "thresholds": cmd_thresholds}


# ---------------------------------------------------------------------------
# output


def _write_csv(path: Path, rows):
    if not rows:
        return
    cols = list(rows[0].keys())
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else
                            json.dumps(_jsonable(v)) if isinstance(v, (list, dict)) else v)
                        for k, v in r.items()})


def write_report(ctx: Context, name: str, ok: bool, results, tables) -> dict:
    report = {"subcommand": name, "verdict": "pass" if ok else "fail",
              "config": ctx.cfg.to_dict(), "threshold_ledger": ctx.thresholds(),
              "results": results, TIMESTAMP_FIELD: datetime.datetime.now(
                  datetime.timezone.utc).isoformat()}
    report = _jsonable(report)
    ctx.out.mkdir(parents=True, exist_ok=True)
    with open(ctx.out / f"{name}.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for tname, rows in tables.items():
        _write_csv(ctx.out / f"{name}_{tname}.csv", _jsonable(rows))
    if ctx.figures:
        from . import plotting
        plotting.write_figures(name, results, tables, ctx.out)
    return report


def canonical_report_bytes(out_dir) -> bytes:
    """All JSON and CSV outputs in name order, without the timestamp field."""
    out_dir = Path(out_dir)
    blob = []
    for path in sorted(out_dir.iterdir()):
        if path.suffix == ".json":
            data = json.loads(path.read_text())
            data.pop(TIMESTAMP_FIELD, None)
            blob.append(path.name.encode() + json.dumps(data, sort_keys=True).encode())
        elif path.suffix == ".csv":
            blob.append(path.name.encode() + path.read_bytes())
    return b"\n".join(blob)


def run(subcommand: str, ctx: Context) -> bool:
    names = ctx.cfg.checks if subcommand == "all" else [subcommand]
    verdicts = {}
    for name in names:
        ok, results, tables = HANDLERS[name](ctx)
        write_report(ctx, name, ok, results, tables)
        verdicts[name] = "pass" if ok else "fail"
        print(f"{name:15s} {verdicts[name]}")
    if subcommand == "all":
        write_report(ctx, "all", all(v == "pass" for v in verdicts.values()),
                     {"verdicts": verdicts}, {})
    return all(v == "pass" for v in verdicts.values())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpkernels", description="Littlewood-Paley projection kernels of -Delta + V")
    parser.add_argument("subcommand", choices=list(SUBCOMMANDS) + ["all"])
    parser.add_argument("--config", help="YAML run configuration (or a shipped scenario name)")
    parser.add_argument("--seed", type=int, help="64-bit seed (env LPKERNELS_SEED)")
    parser.add_argument("--out", default="lpkernels_out", help="output directory")
    parser.add_argument("--no-cache", action="store_true",
                        help="ignore and do not write the spectral/threshold cache")
    parser.add_argument("--jobs", type=int, help="worker threads (env LPKERNELS_JOBS)")
    parser.add_argument("--figures", action="store_true",
                        help="also render PNG figures next to the CSV tables")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        path = args.config
        if path and not os.path.exists(path) and not path.endswith((".yaml", ".yml")):
            path = shipped_config(path)
        cfg = apply_overrides(load_config(path), args.seed, args.jobs)
        ctx = Context(cfg, Path(args.out), not args.no_cache, args.figures)
        ok = run(args.subcommand, ctx)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NearResonanceError as exc:
        print(f"numeric flag: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except (BudgetExceeded, LPKernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
