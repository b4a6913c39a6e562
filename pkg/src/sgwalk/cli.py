"""Command-line front end: ``sgwalk <subcommand> [options]``.

Every run writes ``<name>.json`` (summary) and, for most subcommands,
``<name>.csv`` (detail) into the output directory.  Precedence of settings
is defaults < ``--config`` file < flags; the output directory may also come
from the SGWALK_OUT environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import numpy as np
import scipy

from . import __version__
from .address import Word, as_word, words
from .conductance import ConductanceParams
from .energy import (ALPHA, BETA_STAR, GasketFunction, coordinate, graph_energy, graph_energy_levels,
                     jump_energy, naim_comparability, naim_family, trace_inequality_check,
                     walk_dimension_scan)
from .graph import EdgeKind, build_graph, write_edge_csv
from .green import green_convergence, kernel_for, martin_comparison
from .harmonic import build_separating_function, harmonic_function
from .walk import escape_profile, make_rng, run_ctrw, sample_walks

SCHEMA_VERSION = 1
ENV_OUT = "SGWALK_OUT"


class ConfigError(ValueError):
    pass


# -- JSON with 17 significant digits --------------------------------------

def _fmt(obj: Any, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, Fraction):
        return _fmt(float(obj), indent)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return format(x, ".17g") if x != int(x) or abs(x) >= 1e17 else format(x, ".1f")
        return json.dumps(str(x))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_fmt(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + _fmt(v, indent + 1) for v in seq) + "\n" + end + "]"
    return json.dumps(str(obj))


def dumps(obj: Any) -> str:
    return _fmt(obj) + "\n"


def _num(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(x) for x in r])
    return buf.getvalue()


# -- options --------------------------------------------------------------

DEFAULTS = {
    "lambda": 0.25, "c1": 1.0, "c2": 1.0, "gamma": None, "a": math.log(2.0),
    "depth": None, "samples": None, "seed": None, "level": None, "workers": None,
    "out": None, "name": None,
}

COMMANDS = {}


def command(name, help, stochastic=False, regular=False, depth=None, **extra):
    def deco(fn):
        COMMANDS[name] = dict(fn=fn, help=help, stochastic=stochastic, regular=regular,
                              depth=depth, extra=extra)
        return fn
    return deco


def read_config(path: str) -> dict:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("_", "-").lstrip("-")] = v
    return out


def _coerce(key: str, value, kind):
    if value is None or kind is None:
        return value
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r}")


class RunConfig:
    """Resolved settings for one subcommand."""

    def __init__(self, subcommand: str, values: dict):
        self.subcommand = subcommand
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    def params(self) -> ConductanceParams:
        v = self.values
        return ConductanceParams(v["lambda"], v["c1"], v["c2"], v["gamma"])

    def echo(self) -> dict:
        return {k: v for k, v in sorted(self.values.items()) if k not in ("out",)}


_TYPES = {"lambda": float, "c1": float, "c2": float, "gamma": float, "a": float, "depth": int,
          "samples": int, "seed": int, "level": int, "workers": int, "out": str, "name": str,
          "p": str, "q": str, "x": str, "y": str, "start": str, "function": str, "beta": float,
          "lambda-min": float, "lambda-max": float, "steps": int, "levels": str,
          "max-level": int, "traces": int, "family-seed": int}


def resolve(sub: str, ns: argparse.Namespace) -> RunConfig:
    entry = COMMANDS[sub]
    cfg = read_config(ns.config) if ns.config else {}
    values = {}
    keys = list(DEFAULTS) + list(entry["extra"])
    for key in keys:
        default = entry["extra"].get(key, DEFAULTS.get(key))
        if key == "depth" and entry["depth"] is not None:
            default = entry["depth"]
        flag = getattr(ns, key.replace("-", "_"), None)
        raw = flag if flag is not None else cfg.get(key, default)
        values[key] = _coerce(key, raw, _TYPES.get(key))
    unknown = set(cfg) - set(keys) - {"config"}
    if unknown:
        raise ConfigError(f"unknown config keys for {sub}: {', '.join(sorted(unknown))}")
    if values["out"] is None:
        values["out"] = os.environ.get(ENV_OUT, ".")
    if values["name"] is None:
        values["name"] = sub
    rc = RunConfig(sub, values)
    validate(rc, entry)
    return rc


def validate(rc: RunConfig, entry: dict) -> None:
    v = rc.values
    try:
        params = rc.params()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if entry["regular"] and not params.regular:
        raise ConfigError(f"lambda must lie in (1/5,1/3) for subcommand {rc.subcommand}")
    if v["a"] is not None and v["a"] <= 0:
        raise ConfigError("a must be positive")
    if v["depth"] is not None and not 1 <= v["depth"] <= 13:
        raise ConfigError("depth must lie in [1, 13]")
    if entry["stochastic"]:
        if v["seed"] is None:
            raise ConfigError(f"--seed is required for subcommand {rc.subcommand}")
        if v["samples"] is None or v["samples"] <= 0:
            raise ConfigError("samples must be a positive integer")
    if v["workers"] is not None and v["workers"] <= 0:
        raise ConfigError("workers must be positive")
    if v["level"] is not None and v["level"] < 0:
        raise ConfigError("level must be >= 0")


def header(rc: RunConfig) -> dict:
    p = rc.params()
    return {
        "schema_version": SCHEMA_VERSION,
        "subcommand": rc.subcommand,
        "beta": p.beta,
        "alpha": ALPHA,
        "config": rc.echo(),
        "versions": {"sgwalk": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


# -- subcommands ----------------------------------------------------------

@command("build-graph", "build B_N and export its edge list", depth=5)
def cmd_build_graph(rc: RunConfig):
    g = build_graph(rc["depth"])
    u, v, k = g.edges()
    per_level = []
    for n in range(1, g.depth + 1):
        _, _, kk = g.horizontal_edges(n)
        per_level.append({"level": n, "type_I": int((kk == EdgeKind.HORIZONTAL_I).sum()),
                          "type_II": int((kk == EdgeKind.HORIZONTAL_II).sum())})
    buf = io.StringIO()
    write_edge_csv(g, buf)
    hdeg = np.bincount(np.concatenate([u[k != 0], v[k != 0]]), minlength=g.num_nodes)
    summary = {"nodes": g.num_nodes, "nodes_reference": sum(3**n for n in range(g.depth + 1)),
               "edges": int(u.size), "horizontal_by_level": per_level,
               "max_horizontal_degree": int(hdeg.max())}
    return summary, buf.getvalue()


@command("green", "Green function G_N(x, y) with depth convergence", depth=10, x="", y="")
def cmd_green(rc: RunConfig):
    p = rc.params()
    conv = green_convergence(p, rc["depth"], rc["x"], rc["y"])
    k = kernel_for(p, rc["depth"])
    x, y = as_word(rc["x"]), as_word(rc["y"])
    sym = k.green(x, y) * float(p.pi(y)) - k.green(y, x) * float(p.pi(x))
    summary = {
        "x": str(x), "y": str(y),
        "depths": list(conv.depths), "values": list(conv.values),
        "extrapolated": conv.extrapolated,
        "reference": conv.reference,
        "relative_error": None if conv.reference is None else abs(conv.values[0] / conv.reference - 1),
        "symmetry_defect": abs(sym),
        "residual": k.last_residual,
    }
    rows = zip(conv.depths, conv.values)
    return summary, csv_text(["depth", "green"], rows)


@command("passage", "first-passage probabilities F(x, o) against lam**|x|", depth=10, **{"max-level": 3})
def cmd_passage(rc: RunConfig):
    p = rc.params()
    k = kernel_for(p, rc["depth"])
    col = k.green_column("")
    rows, worst = [], 0.0
    for n in range(rc["max-level"] + 1):
        ref = float(p.lam) ** n
        for w in words(n):
            f = col[k.graph.index(w)] / col[0]
            err = abs(f / ref - 1)
            worst = max(worst, err)
            rows.append((str(w), n, f, ref, err))
    summary = {"max_relative_error": worst, "reference": "lambda**|x|", "count": len(rows)}
    return summary, csv_text(["word", "level", "passage", "reference", "relative_error"], rows)


@command("hitmeasure", "exit distribution over level-L cells", depth=10, level=2, x="")
def cmd_hitmeasure(rc: RunConfig):
    k = kernel_for(rc.params(), rc["depth"])
    L = rc["level"]
    if L > rc["depth"] - 3:
        raise ConfigError(f"level must be at most depth-3 = {rc['depth'] - 3}")
    mu = k.harmonic_measure(rc["x"], L)
    ref = 3.0**-L
    summary = {"x": str(as_word(rc["x"])), "level": L, "total": float(mu.sum()),
               "uniform_reference": ref, "max_deviation_from_uniform": float(np.abs(mu - ref).max())}
    rows = [(str(Word(L, c)), m, ref) for c, m in enumerate(mu)]
    return summary, csv_text(["cell", "mass", "uniform_reference"], rows)


@command("martin", "Martin kernel against lam**|x| (3/lam)**|x^xi|", depth=8, level=3, seed=0)
def cmd_martin(rc: RunConfig):
    p = rc.params()
    n = rc["depth"]
    k = kernel_for(p, n)
    rng = make_rng(rc["seed"])
    targets = [Word(n - 1, int(rng.integers(3 ** (n - 1)))) for _ in range(3)]
    xs = [w for m in range(min(rc["level"], n - 4) + 1) for w in words(m)]
    mc = martin_comparison(k, xs, targets)
    summary = {"pairs": len(mc.pairs), "band": mc.band, "ratio_min": float(mc.ratios.min()),
               "ratio_max": float(mc.ratios.max()), "targets": [str(t) for t in targets]}
    rows = [(str(x), str(t), g, m, pr) for (x, t), g, m, pr in
            zip(mc.pairs, mc.gromov, mc.measured, mc.predicted)]
    return summary, csv_text(["x", "xi", "gromov", "measured", "predicted"], rows)


def _walk_summary(p: ConductanceParams, s, level: int) -> dict:
    hit = s.hitting()
    n = s.size
    lt = s.lifetime[np.isfinite(s.lifetime)]
    ref_z = float(p.expected_lifetime(s.start.length))
    ret = (s.visits_root > 1).mean() if s.start.length == 0 else None
    return {
        "samples": n,
        "exhausted": s.exhausted,
        "exit_level": level,
        "hitting": hit.as_dict(),
        "hitting_max_deviation_from_uniform": hit.max_deviation(),
        "lifetime_mean": float(lt.mean()) if lt.size else None,
        "lifetime_sigma_of_mean": float(lt.std(ddof=1) / math.sqrt(lt.size)) if lt.size > 1 else None,
        "lifetime_reference": ref_z,
        "lifetime_finite_fraction": float(np.isfinite(s.lifetime).mean()),
        "tail_bound_mean": float(s.tail_bounds().mean()),
        "return_fraction": ret,
        "return_reference": float(p.lam) if ret is not None else None,
        "visits_root_mean": float(s.visits_root.mean()),
        "green_oo_reference": float(p.green_oo()),
        "hit_root_fraction": float(s.hit_root.mean()),
        "hit_root_reference": float(p.lam) ** s.start.length,
        "steps_mean": float(s.steps.mean()),
    }


@command("walk", "Monte Carlo exit cells and lifetimes", stochastic=True, level=2, start="",
         samples=10000)
def cmd_walk(rc: RunConfig):
    p = rc.params()
    s = sample_walks(p, rc["samples"], rc["seed"], start=rc["start"], level=rc["level"], ctrw=True,
                     workers=rc["workers"])
    rows = ((str(Word(rc["level"], c)) if c >= 0 else "", z, st)
            for c, z, st in zip(s.exit_code.tolist(), s.lifetime.tolist(), s.steps.tolist()))
    return _walk_summary(p, s, rc["level"]), csv_text(["exit_cell", "lifetime", "steps"], rows)


@command("lifetime", "lifetime of the variable-speed walk and escape profile", stochastic=True,
         level=2, start="", traces=20, samples=10000)
def cmd_lifetime(rc: RunConfig):
    p = rc.params()
    s = sample_walks(p, rc["samples"], rc["seed"], start=rc["start"], level=rc["level"], ctrw=True,
                     workers=rc["workers"])
    summary = _walk_summary(p, s, rc["level"])
    traces = [run_ctrw(p, rc["start"], make_rng(rc["seed"], 10**6 + i), level=rc["level"])
              for i in range(rc["traces"])]
    prof = escape_profile(traces, p)
    summary["escape"] = {"traces": len(traces), "all_finite": prof.all_finite,
                         "final_levels": prof.final_levels,
                         "median_time_to_level": {str(k): v for k, v in prof.median_time_to_level.items()},
                         "down_fraction": prof.down_fraction, "down_expected": prof.down_expected}
    rows = ((i, z, st, n) for i, (z, st, n) in
            enumerate(zip(s.lifetime.tolist(), s.steps.tolist(), s.final_level.tolist())))
    return summary, csv_text(["walk", "lifetime", "steps", "final_level"], rows)


def _energy_rows(rep):
    return [(n, h, v, r) for n, h, v, r in rep.rows()]


@command("separate", "per-level energies of the separating function", regular=True, depth=10,
         p="00", q="11")
def cmd_separate(rc: RunConfig):
    par = rc.params()
    try:
        v = build_separating_function(rc["p"], rc["q"], rc["depth"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rep = graph_energy_levels(par, v)
    summary = {"p": rc["p"], "q": rc["q"], "total": rep.total, "fitted_ratio": rep.ratio,
               "ratio_reference": 1 / (5 * float(par.lam)),
               "vertical_over_horizontal_reference": 14 / (25 * float(par.c1)),
               "classification": rep.classification.value,
               "interpolated_total": rep.interpolated_total(par)}
    return summary, csv_text(["level", "horizontal_energy", "vertical_energy", "ratio"], _energy_rows(rep))


FUNCTIONS = ("separating", "harmonic", "coordinate", "indicator")


@command("energy", "per-level graph energy of a named function", depth=8, function="separating")
def cmd_energy(rc: RunConfig):
    par = rc.params()
    n = rc["depth"]
    name = rc["function"]
    g = kernel_for(par, n).wg if name == "coordinate" else None
    if name == "separating":
        rep = graph_energy_levels(par, build_separating_function("00", "11", n))
    elif name == "harmonic":
        rep = graph_energy_levels(par, harmonic_function((1.0, 0.0, 0.0), n))
    elif name == "coordinate":
        from .harmonic import from_point_function
        rep = graph_energy(g, from_point_function(lambda xy: xy[:, 0], n).flat())
        rep.fit_from = 1
    elif name == "indicator":
        from .harmonic import LevelFunction
        vals = [np.zeros(3**m) for m in range(n + 1)]
        vals[0][0] = 1.0
        rep = graph_energy_levels(par, LevelFunction(vals))
    else:
        raise ConfigError(f"function must be one of {', '.join(FUNCTIONS)}")
    summary = {"function": name, "total": rep.total, "fitted_ratio": rep.ratio,
               "classification": rep.classification.value,
               "ratio_reference": 1 / (5 * float(par.lam))}
    return summary, csv_text(["level", "horizontal_energy", "vertical_energy", "ratio"], _energy_rows(rep))


@command("quad", "jump-form quadrature across cell levels", function="harmonic", levels="3,4,5,6",
         beta=None)
def cmd_quad(rc: RunConfig):
    par = rc.params()
    beta = par.beta if rc["beta"] is None else rc["beta"]
    try:
        levels = [int(s) for s in rc["levels"].split(",")]
    except ValueError:
        raise ConfigError("levels must be a comma-separated list of integers") from None
    if any(not 1 <= L <= 8 for L in levels):
        raise ConfigError("levels must lie in [1, 8]")
    name = rc["function"]
    if name == "harmonic":
        u = GasketFunction([1.0, 0.0, 0.0])
    elif name == "coordinate":
        u = coordinate(0)
    else:
        raise ConfigError("function must be harmonic or coordinate")
    vals = [jump_energy(u.cells(L), beta, L) for L in levels]
    summary = {"function": name, "beta": beta, "beta_star": BETA_STAR, "values": vals,
               "increments": list(np.diff(vals))}
    return summary, csv_text(["level", "jump_energy"], zip(levels, vals))


@command("naim", "graph energy of extensions against the jump quadrature", regular=True, depth=9,
         level=5, **{"family-seed": 0})
def cmd_naim(rc: RunConfig):
    k = kernel_for(rc.params(), rc["depth"])
    if rc["level"] > rc["depth"] - 3:
        raise ConfigError("level must be at most depth-3")
    rep = naim_comparability(k, rc["level"], naim_family(rc["family-seed"]))
    summary = {"band": rep.band, "ratio_min": float(rep.ratios.min()), "ratio_max": float(rep.ratios.max())}
    rows = zip(rep.names, rep.graph, rep.jump, rep.ratios)
    return summary, csv_text(["function", "graph_energy", "jump_energy", "ratio"], rows)


@command("trace-check", "trace inequality with the explicit constant", stochastic=True, regular=True,
         depth=8, level=4, samples=20)
def cmd_trace(rc: RunConfig):
    par = rc.params()
    k = kernel_for(par, rc["depth"])
    L = rc["level"]
    if L > rc["depth"] - 1:
        raise ConfigError("level must be below depth")
    rng = make_rng(rc["seed"])
    rows = []
    for i in range(rc["samples"]):
        u = np.ones(3**L) if i == 0 else rng.standard_normal(3**L)
        t = trace_inequality_check(k, u, L)
        rows.append((i, t.lhs, t.energy, t.l2, t.rhs, t.slack))
    slacks = [r[-1] for r in rows]
    summary = {"c2": float(par.trace_constant()), "min_slack": min(slacks),
               "all_hold": all(s >= 1 for s in slacks)}
    return summary, csv_text(["function", "lhs", "energy", "l2", "rhs", "slack"], rows)


@command("scan", "walk-dimension scan over lambda", depth=8, **{"lambda-min": 0.12, "lambda-max": 0.32,
         "steps": 11})
def cmd_scan(rc: RunConfig):
    lo, hi, steps = rc["lambda-min"], rc["lambda-max"], rc["steps"]
    if not 0 < lo < hi < 1 or steps < 2:
        raise ConfigError("need 0 < lambda-min < lambda-max < 1 and steps >= 2")
    grid = list(np.linspace(lo, hi, steps))
    out, rows = {}, []
    try:
        for route in ("ratio", "growth"):
            s = walk_dimension_scan(grid, rc["depth"], route)
            out[route] = {"lambda_hat": s.lam_hat, "beta_hat": s.beta_hat,
                          "classifications": [c.value for c in s.classes], "ratios": s.ratios}
            rows += [(route, lam, r, c.value) for lam, r, c in zip(s.lams, s.ratios, s.classes)]
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out["lambdas"] = grid
    out["beta_star_reference"] = BETA_STAR
    out["lambda_reference"] = 0.2
    return out, csv_text(["route", "lambda", "ratio", "classification"], rows)


# -- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgwalk", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, entry in COMMANDS.items():
        sp = sub.add_parser(name, help=entry["help"])
        sp.add_argument("--config", help="key=value file; flags take precedence")
        sp.add_argument("--lambda", dest="lambda", type=float)
        sp.add_argument("--c1", type=float)
        sp.add_argument("--c2", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--a", type=float, help="visual metric parameter")
        sp.add_argument("--depth", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--level", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUT} or .)")
        sp.add_argument("--name", help="output file stem (default: subcommand)")
        for key, default in entry["extra"].items():
            if key in DEFAULTS:
                continue
            sp.add_argument(f"--{key}", dest=key.replace("-", "_"), type=_TYPES.get(key, str))
    return ap


def run(rc: RunConfig) -> tuple[Path, Optional[Path]]:
    entry = COMMANDS[rc.subcommand]
    summary, detail = entry["fn"](rc)
    doc = header(rc)
    doc["result"] = summary
    out = Path(rc["out"])
    out.mkdir(parents=True, exist_ok=True)
    jpath = out / f"{rc['name']}.json"
    jpath.write_text(dumps(doc))
    cpath = None
    if detail is not None:
        cpath = out / f"{rc['name']}.csv"
        cpath.write_text(detail)
    return jpath, cpath


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        rc = resolve(ns.command, ns)
        jpath, cpath = run(rc)
    except (ConfigError, ValueError) as e:
        print(f"sgwalk {ns.command}: error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {jpath}" + (f" and {cpath}" if cpath else "") +
          f" in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
