"""Graph energies, the jump-form quadrature on the gasket, the trace
inequality and the walk-dimension scanner.

Graph energy uses the edge-once convention
E(u) = 1/2 sum_{x,y} c(x,y) (u(x)-u(y))**2 = sum over edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .conductance import ConductanceParams, WeightedGraph
from .graph import EdgeKind, _horizontal_edges
from .harmonic import (LevelFunction, build_separating_function, cell_barycenters,
                       harmonic_function, level_vertex_xy, propagate)

ALPHA = math.log(3.0) / math.log(2.0)
BETA_STAR = math.log(5.0) / math.log(2.0)
CRITICAL_BAND = (0.98, 1.02)


class Classification(str, Enum):
    CONVERGENT = "Convergent"
    DIVERGENT = "Divergent"
    CRITICAL = "Critical"


def classify(ratio: float, band: tuple[float, float] = CRITICAL_BAND) -> Classification:
    if ratio < band[0]:
        return Classification.CONVERGENT
    if ratio > band[1]:
        return Classification.DIVERGENT
    return Classification.CRITICAL


def fitted_ratio(values: Sequence[float]) -> float:
    """Geometric-mean ratio of consecutive positive entries (0 if < 2)."""
    v = [float(x) for x in values if x > 0]
    if len(v) < 2:
        return 0.0
    return math.exp((math.log(v[-1]) - math.log(v[0])) / (len(v) - 1))


@dataclass
class EnergyReport:
    """h[n]: horizontal energy on S_n; v[n]: vertical energy between S_n and S_{n+1}."""

    h: list
    v: list
    fit_from: int = 0
    band: tuple = CRITICAL_BAND

    @property
    def total(self):
        return sum(self.h) + sum(self.v)

    @property
    def ratio(self) -> float:
        series = self.h[self.fit_from:]
        if sum(1 for x in series if x > 0) < 2:
            series = self.v[self.fit_from:-1]
        return fitted_ratio(series)

    @property
    def classification(self) -> Classification:
        return classify(self.ratio, self.band)

    def interpolated_total(self, params: ConductanceParams) -> float:
        """Total energy on the whole graph when every level past the last
        stored one is produced by interpolation (geometric tail)."""
        r = 1.0 / (5.0 * float(params.lam))
        if r >= 1:
            return math.inf
        kappa = 14.0 / (25.0 * float(params.c1))
        hn = float(self.h[-1])
        return float(self.total) + hn * (kappa + (1 + kappa) * r / (1 - r))

    def rows(self):
        for n in range(len(self.h)):
            nxt = self.h[n + 1] / self.h[n] if n + 1 < len(self.h) and self.h[n] else float("nan")
            yield n, self.h[n], self.v[n], nxt


def graph_energy(wg: WeightedGraph, u) -> EnergyReport:
    """Per-level decomposition of the graph energy of u on B_N."""
    if isinstance(u, LevelFunction):
        return graph_energy_levels(wg.params, u)
    u = np.asarray(u, dtype=float)
    g = wg.graph
    a, b, c = wg.edge_conductances()
    e = c * (u[a] - u[b]) ** 2
    _, _, kind = g.edges()
    lv = np.minimum(g.level[a], g.level[b])
    horiz = kind != EdgeKind.VERTICAL
    h = np.bincount(lv[horiz], e[horiz], minlength=g.depth + 1)
    v = np.bincount(lv[~horiz], e[~horiz], minlength=g.depth + 1)
    return EnergyReport([float(x) for x in h], [float(x) for x in v])


def graph_energy_levels(params: ConductanceParams, lf: LevelFunction) -> EnergyReport:
    """Same decomposition computed level by level; exact for Fraction data."""
    h, v = [], []
    for n, vals in enumerate(lf.values):
        s = params.scale(n)
        if n >= 1:
            a, b, k = _horizontal_edges(n)
            mult = np.where(k == EdgeKind.HORIZONTAL_I, 1, 0)
            d = vals[a] - vals[b]
            sq1 = sum(d[mult == 1] ** 2) if d.dtype == object else float((d[mult == 1] ** 2).sum())
            sq2 = sum(d[mult == 0] ** 2) if d.dtype == object else float((d[mult == 0] ** 2).sum())
            h.append(params.c1 * s * sq1 + params.c2 * s * sq2)
        else:
            h.append(0 * s)
        if n < lf.depth:
            child = lf.values[n + 1]
            d = child - np.repeat(vals, 3)
            sq = sum(d**2) if d.dtype == object else float((d**2).sum())
            v.append(s * sq)
        else:
            v.append(0 * s)
    return EnergyReport(h, v, fit_from=max(lf.seed_level, 0))


def sphere_pullback_energy(params: ConductanceParams, f, n: int) -> float:
    """sum over horizontal edges of S_n of c(x,y) (f(Phi_n x) - f(Phi_n y))**2.

    ``f`` is a plane callable on (k, 2) arrays or a ``GasketFunction``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if hasattr(f, "level_values"):
        vals = f.level_values(n)
    else:
        vals = np.asarray(f(level_vertex_xy(n)), dtype=float)
    a, b, k = _horizontal_edges(n)
    mult = np.where(k == EdgeKind.HORIZONTAL_I, float(params.c1), float(params.c2))
    return float(params.scale(n) * (mult * (vals[a] - vals[b]) ** 2).sum())


def jump_energy(cell_values: np.ndarray, beta: float, level: int, alpha: float = ALPHA,
                block: int = 512) -> float:
    """sum_{w != w'} (u_w - u_w')**2 |x_w - x_w'|**-(alpha+beta) 3**-2L over W_L.

    Ordered pairs, barycenters of the corner sets, diagonal excluded.
    """
    if level > 8:
        raise ValueError("level above 8 is out of desk range")
    u = np.asarray(cell_values, dtype=float)
    if u.size != 3**level:
        raise ValueError(f"expected {3**level} cell values")
    x = cell_barycenters(level)
    p = -(alpha + beta) / 2.0
    total = 0.0
    for s in range(0, u.size, block):
        d2 = ((x[s:s + block, None, :] - x[None, :, :]) ** 2).sum(-1)
        du = (u[s:s + block, None] - u[None, :]) ** 2
        idx = np.arange(s, min(s + block, u.size))
        d2[idx - s, idx] = 1.0
        du[idx - s, idx] = 0.0
        total += float((du * d2**p).sum())
    return total * 9.0**-level


# -- test functions -------------------------------------------------------

class GasketFunction:
    """A continuous function on the gasket known through its vertex values.

    A ``seed`` of three values fixes a harmonic function; a seed over W_k
    (consistent on type-II pairs) gives a function that is harmonic on every
    level-(k-1) cell.
    """

    def __init__(self, seed: Sequence[float], name: str = ""):
        seed = np.asarray(seed, dtype=float)
        k = round(math.log(seed.size, 3))
        if 3**k != seed.size or k < 1:
            raise ValueError("seed must have 3**k entries, k >= 1")
        self.seed = seed
        self.seed_level = k
        self.name = name

    def level_values(self, n: int) -> np.ndarray:
        if n < self.seed_level:
            raise ValueError(f"values available from level {self.seed_level}")
        v = self.seed
        for _ in range(n - self.seed_level):
            v = propagate(v)
        return v

    def frontier(self, depth: int) -> np.ndarray:
        return self.level_values(depth)

    def cells(self, level: int) -> np.ndarray:
        """Mean of the three corner values of each level-L cell."""
        return self.level_values(level + 1).reshape(-1, 3).mean(axis=1)

    def scaled(self, c: float) -> "GasketFunction":
        return GasketFunction(c * self.seed, self.name)


class PointFunction:
    """A function given on the plane; cells use barycenters, the frontier
    uses the points Phi_N(w)."""

    def __init__(self, f: Callable[[np.ndarray], np.ndarray], name: str = ""):
        self.f = f
        self.name = name

    def frontier(self, depth: int) -> np.ndarray:
        return np.asarray(self.f(level_vertex_xy(depth)), dtype=float)

    def cells(self, level: int) -> np.ndarray:
        return np.asarray(self.f(cell_barycenters(level)), dtype=float)

    def scaled(self, c: float) -> "PointFunction":
        f = self.f
        return PointFunction(lambda xy: c * f(xy), self.name)


def coordinate(axis: int = 0) -> PointFunction:
    return PointFunction(lambda xy: xy[:, axis], "xy"[axis])


def random_gasket_function(rng: np.random.Generator, level: int = 2, name: str = "") -> GasketFunction:
    """Random values on V_level, lifted so type-II pairs agree."""
    xy = level_vertex_xy(level)
    keys = np.round(xy * 2**level * 4).astype(np.int64)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    vals = rng.standard_normal(inv.max() + 1)
    return GasketFunction(vals[inv.ravel()], name or f"random-V{level}")


def naim_family(seed: int = 0, size: int = 10) -> list:
    """Three harmonic basis functions plus random piecewise-harmonic ones."""
    fam = [GasketFunction(np.eye(3)[i], f"h{i}") for i in range(3)]
    rng = np.random.default_rng(seed)
    while len(fam) < size:
        fam.append(random_gasket_function(rng, 2, f"random-{len(fam) - 3}"))
    return fam[:size]


@dataclass
class NaimReport:
    names: list
    graph: np.ndarray
    jump: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return self.graph / self.jump

    @property
    def band(self) -> float:
        r = self.ratios
        return float(r.max() / r.min())


def naim_comparability(kernel, level: int, functions: Sequence, beta: Optional[float] = None) -> NaimReport:
    """graph energy of Hu on B_N against the jump quadrature of u at level L."""
    params = kernel.wg.params
    beta = params.beta if beta is None else beta
    wg = kernel.wg
    names, ge, je = [], [], []
    for u in functions:
        front = u.frontier(kernel.depth)
        cells = u.cells(level)
        if np.ptp(front) == 0 or np.ptp(cells) == 0:
            raise ValueError(f"function {getattr(u, 'name', u)!r} is constant")
        hu = kernel.poisson(front)
        names.append(getattr(u, "name", ""))
        ge.append(graph_energy(wg, hu).total)
        je.append(jump_energy(cells, beta, level))
    return NaimReport(names, np.array(ge), np.array(je))


@dataclass
class TraceCheck:
    lhs: float
    energy: float
    l2: float
    c2: float

    @property
    def rhs(self) -> float:
        return self.c2 * (self.energy + self.l2)

    @property
    def slack(self) -> float:
        return self.rhs / self.lhs if self.lhs > 0 else math.inf


def trace_inequality_check(kernel, cell_values: np.ndarray, level: int) -> TraceCheck:
    """int |u|^2 dnu against C^2 (E(Hu) + ||Hu||^2_m) on B_N."""
    from .harmonic import frontier_from_cells

    params = kernel.wg.params
    u = np.asarray(cell_values, dtype=float)
    lhs = float((u**2).sum() * 3.0**-level)
    hu = kernel.poisson(frontier_from_cells(u, level, kernel.depth))
    energy = graph_energy(kernel.wg, hu).total
    l2 = float((hu**2 * kernel.wg.measure_array()).sum())
    return TraceCheck(lhs, energy, l2, float(params.trace_constant()))


# -- walk dimension -------------------------------------------------------

@dataclass
class ScanResult:
    lams: list
    ratios: list
    classes: list
    lam_hat: float
    route: str
    extra: dict = field(default_factory=dict)

    @property
    def beta_hat(self) -> float:
        return -math.log(self.lam_hat) / math.log(2.0)


class NoBracket(ValueError):
    pass


def separating_ratio(lam: float, depth: int, p: str = "00", q: str = "11") -> float:
    params = ConductanceParams(lam)
    rep = graph_energy_levels(params, build_separating_function(p, q, depth))
    return rep.ratio


def growth_ratio(lam: float, depth: int, corners=(1.0, 0.0, 0.0)) -> float:
    """Ratio of consecutive energy increments of the Poisson extension of a
    harmonic function, from truncations at depths N-2, N-1, N."""
    from .green import TruncatedKernel
    from .graph import build_graph

    params = ConductanceParams(lam)
    u = GasketFunction(corners)
    e = []
    for n in (depth - 2, depth - 1, depth):
        k = TruncatedKernel(WeightedGraph(build_graph(n), params))
        e.append(graph_energy(k.wg, k.poisson(u.frontier(n))).total)
    return (e[2] - e[1]) / (e[1] - e[0])


def _bisect(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def walk_dimension_scan(lams: Sequence[float], depth: int, route: str = "ratio",
                        tol: Optional[float] = None) -> ScanResult:
    """Classify each lambda, then bisect the Convergent/Divergent boundary.

    ``route="ratio"`` uses the per-level energy ratio of the separating
    function; ``route="growth"`` uses energy increments of Poisson
    extensions across truncation depths.
    """
    if depth < 7:
        raise ValueError("depth must be at least 7")
    if route == "ratio":
        fn = lambda lam: separating_ratio(lam, depth)
        tol = 1e-13 if tol is None else tol
    elif route == "growth":
        fn = lambda lam: growth_ratio(lam, depth)
        tol = 1e-5 if tol is None else tol
    else:
        raise ValueError(f"unknown route {route!r}")
    lams = sorted(float(x) for x in lams)
    ratios = [fn(lam) for lam in lams]
    classes = [classify(r) for r in ratios]
    lo = hi = None
    for (l0, r0), (l1, r1) in zip(zip(lams, ratios), zip(lams[1:], ratios[1:])):
        if r0 > 1 >= r1:
            lo, hi = l0, l1
            break
    if lo is None:
        raise NoBracket("lambda grid does not straddle the critical point")
    lam_hat = _bisect(lambda lam: fn(lam) - 1.0, lo, hi, tol)
    return ScanResult(lams, ratios, classes, lam_hat, route)
