"""Acceptance criteria: one PASS/FAIL line per criterion."""

import math
import random
import time
from fractions import Fraction as F

import numpy as np
import pytest

from sgwalk.address import Word, words
from sgwalk.cli import main
from sgwalk.conductance import ConductanceParams, WeightedGraph
from sgwalk.energy import (BETA_STAR, Classification, graph_energy,
                           graph_energy_levels, naim_comparability, naim_family, random_gasket_function,
                           trace_inequality_check, walk_dimension_scan)
from sgwalk.graph import build_graph
from sgwalk.green import TruncatedKernel, kernel_for, martin_comparison
from sgwalk.harmonic import (LevelFunction, build_separating_function, energy_recursion_check,
                             extend_to_boundary, harmonic_function, level_vertex_xy)
from sgwalk.walk import sample_walks


@pytest.fixture
def report(capsys):
    def emit(num, title, ok, detail):
        with capsys.disabled():
            print(f"\nAC{num:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def mc_sample():
    t0 = time.perf_counter()
    s = sample_walks(ConductanceParams(0.25, gamma=0.125), 100_000, 2024, level=2, ctrw=True)
    return s, time.perf_counter() - t0


def test_ac01_green_function(report):
    t0 = time.perf_counter()
    k = TruncatedKernel(WeightedGraph(build_graph(10), ConductanceParams(0.25)))
    g = k.green("", "")
    wall = time.perf_counter() - t0
    err = abs(g / (4 / 3) - 1)
    report(1, "G_N(o,o) at lambda=0.25, N=10", err < 1e-3 and wall <= 60,
           f"G={g:.10f} ref=4/3 rel.err={err:.2e} wall={wall:.2f}s")


def test_ac02_first_passage(report):
    worst = 0.0
    for lam in (0.22, 0.25, 0.30):
        k = kernel_for(ConductanceParams(lam), 10)
        col = k.green_column("")
        for n in range(4):
            for w in words(n):
                worst = max(worst, abs(col[k.graph.index(w)] / col[0] / lam**n - 1))
    report(2, "F(x,o) vs lambda^|x|, |x|<=3, N=10", worst < 1e-3, f"max rel.err={worst:.2e} over 120 (lambda, x)")


def test_ac03_energy_recursion(report):
    rnd = random.Random(12345)

    def rat():
        return F(rnd.randint(-1000, 1000), rnd.randint(1, 97))

    bad = 0
    for _ in range(1000):
        lam = F(rnd.randint(1, 99), 100)
        c1 = F(rnd.randint(1, 50), rnd.randint(1, 20))
        p = ConductanceParams(lam, c1, F(1), lam / 2)
        a1, a2, a3 = energy_recursion_check((rat(), rat(), rat()), rnd.randint(0, 6), p)
        bad += (a2 * 5 * lam != a1) or (a3 * 25 * c1 != 14 * a1)
    report(3, "A2*5lam=A1 and A3*25C1=14A1 (exact)", bad == 0, f"{1000 - bad}/1000 triangles exact")


def test_ac04_walk_dimension(report):
    grid = [round(0.12 + 0.01 * i, 2) for i in range(21)]
    s = walk_dimension_scan(grid, 8, "ratio")
    cls_ok = all((c == Classification.DIVERGENT) if lam < 0.2 - 1e-9 else
                 (c == Classification.CONVERGENT) if lam > 0.2 + 1e-9 else True
                 for lam, c in zip(s.lams, s.classes))
    g = walk_dimension_scan(grid, 8, "growth")
    e1 = abs(s.beta_hat - BETA_STAR)
    e2 = abs(g.beta_hat - BETA_STAR)
    report(4, "walk-dimension scan on [0.12, 0.32]", cls_ok and e1 < 1e-6 and e2 <= 0.05,
           f"classes ok={cls_ok}; ratio beta={s.beta_hat:.9f} (err {e1:.1e}); "
           f"growth beta={g.beta_hat:.4f} (err {e2:.3f}) at N=8")


def test_ac05_hitting_measure(report, mc_sample):
    k = kernel_for(ConductanceParams(0.25), 10)
    exact_dev = float(np.abs(k.harmonic_measure("", 2) - 1 / 9).max())
    s, wall = mc_sample
    mc_dev = s.hitting().max_deviation()
    ok = exact_dev < 1e-3 and mc_dev < 0.01 and wall <= 300 and s.exhausted == 0
    report(5, "level-2 hitting distribution", ok,
           f"solver dev={exact_dev:.1e}; MC dev={mc_dev:.4f} at {s.size} walks in {wall:.1f}s "
           f"(exhausted {s.exhausted})")


def test_ac06_lifetime(report, mc_sample):
    s, _ = mc_sample
    z = s.lifetime
    finite = bool(np.isfinite(z).all())
    mean = float(z.mean())
    se = float(z.std(ddof=1) / math.sqrt(z.size))
    ref = 32 / 63
    ok = finite and abs(mean - ref) <= 3 * se
    report(6, "E_o zeta at lambda=1/4, gamma=1/8", ok,
           f"mean={mean:.5f} ref={ref:.5f} sigma={se:.5f} ({abs(mean - ref) / se:.2f} sigma); "
           f"finite={100 * np.isfinite(z).mean():.1f}%; tail bound <= {s.tail_bounds().max():.1e}")


def test_ac07_martin_kernel(report):
    p = ConductanceParams(0.25)
    k = kernel_for(p, 10)
    rng = np.random.default_rng(77)
    targets = [Word(9, int(rng.integers(3**9))) for _ in range(4)]
    xs = [w for n in range(4) for w in words(n)]
    mc = martin_comparison(k, xs, targets)
    report(7, "Martin kernel comparability", len(mc.pairs) >= 100 and mc.band <= 100,
           f"{len(mc.pairs)} pairs, ratio in [{mc.ratios.min():.3f}, {mc.ratios.max():.3f}], band={mc.band:.2f}")


def test_ac08_naim(report):
    k = kernel_for(ConductanceParams(0.25), 9)
    rep = naim_comparability(k, 5, naim_family())
    report(8, "graph energy of Hu vs jump quadrature", len(rep.names) == 10 and rep.band <= 100,
           f"10 functions, ratio in [{rep.ratios.min():.4f}, {rep.ratios.max():.4f}], band={rep.band:.3f}")


def test_ac09_trace_inequality(report):
    p = ConductanceParams(0.25, gamma=0.125)
    k = kernel_for(p, 8)
    rng = np.random.default_rng(99)
    funcs = [np.ones(81)] + [rng.standard_normal(81) for _ in range(20)] + [u.cells(4) for u in naim_family(3)]
    slacks = [trace_inequality_check(k, u, 4).slack for u in funcs]
    report(9, f"trace inequality with C^2={float(p.trace_constant()):.6f}", min(slacks) >= 1,
           f"{len(funcs)} functions, min RHS/LHS={min(slacks):.3f}")


def test_ac10_boundary_extension(report):
    p = ConductanceParams(0.25)
    n = 8
    rng = np.random.default_rng(10)
    cells = rng.choice(3**5, 100, replace=False)
    checks = []
    sep = build_separating_function("00", "11", n + 2)
    c_sep = graph_energy_levels(p, sep).interpolated_total(p)
    checks.append(("separating", sep, c_sep))
    hf = harmonic_function((1.0, -0.5, 0.2), n + 2)
    checks.append(("harmonic", hf, graph_energy_levels(p, hf).interpolated_total(p)))
    u = random_gasket_function(np.random.default_rng(1), 2)
    pw = LevelFunction([np.zeros(3**m) for m in range(u.seed_level)]
                       + [u.level_values(m) for m in range(u.seed_level, n + 3)], u.seed_level)
    checks.append(("piecewise", pw, graph_energy_levels(p, pw).interpolated_total(p)))
    k = kernel_for(p, n + 2)
    hu = k.poisson(level_vertex_xy(n + 2)[:, 0])
    checks.append(("poisson", LevelFunction.from_flat(hu, n + 2), graph_energy(k.wg, hu).total))
    worst, lines = 0.0, []
    for name, v, c in checks:
        a = extend_to_boundary(p, v, 5, energy=c, depth=n)
        b = extend_to_boundary(p, v, 5, energy=c, depth=n + 2)
        diff = float(np.abs(a.values[cells] - b.values[cells]).max())
        worst = max(worst, diff / a.bound)
        lines.append(f"{name}: {diff:.2e}<={a.bound:.2e}")
    report(10, "certified tail bound, depths 8 vs 10 on 100 rays", worst <= 1, "; ".join(lines))


def test_ac11_determinism(report, tmp_path):
    runs = [["walk", "--samples", "3000", "--seed", "42"],
            ["lifetime", "--samples", "2000", "--seed", "7", "--traces", "5"],
            ["trace-check", "--seed", "3", "--samples", "5", "--depth", "6", "--level", "3"],
            ["martin", "--seed", "4", "--depth", "7"]]
    same = True
    for args in runs:
        outs = []
        for rep in ("a", "b"):
            d = tmp_path / f"{args[0]}-{rep}"
            assert main(args + ["--workers", "2", "--out", str(d)]) == 0
            outs.append({f.name: f.read_bytes() for f in sorted(d.iterdir())})
        same &= outs[0] == outs[1]
    report(11, "byte-identical reruns with the same seed", same, f"{len(runs)} subcommands rerun, JSON and CSV compared")
