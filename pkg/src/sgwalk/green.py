"""Green functions of the walk killed on leaving B_N.

With C the conductance matrix and D = diag(pi), the killed kernel is
P = D^-1 C and I - P = D^-1 M for the symmetric positive definite
M = D - C.  Hence G_N = M^-1 D and every quantity below reduces to solves
with M, factorised once and shared by all right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import cg, splu

from .address import Word, WordLike, as_word
from .conductance import ConductanceParams, WeightedGraph
from .graph import build_graph, level_offset

CG_TOL = 1e-12


class SolverError(RuntimeError):
    pass


class TruncatedKernel:
    """Killed transition kernel on B_N with a cached factorisation of M.

    ``method="lu"`` uses a sparse LU factorisation (default);
    ``method="cg"`` uses Jacobi-preconditioned conjugate gradients.
    """

    def __init__(self, wg: WeightedGraph, method: str = "lu"):
        if method not in ("lu", "cg"):
            raise ValueError(f"unknown method {method!r}")
        self.wg = wg
        self.graph = wg.graph
        self.method = method
        self.pi = wg.pi
        self.C = wg.conductance_matrix()
        self.M = (diags(self.pi) - self.C).tocsc()
        self._lu = splu(self.M) if method == "lu" else None
        self.last_residual = 0.0

    @property
    def depth(self) -> int:
        return self.graph.depth

    @cached_property
    def P(self):
        return diags(1.0 / self.pi) @ self.C

    @cached_property
    def kill(self) -> np.ndarray:
        """Probability of stepping out of B_N from each node."""
        k = np.zeros(self.graph.num_nodes)
        sl = self.graph.level_slice(self.depth)
        k[sl] = 1.0 - np.asarray(self.P[sl].sum(axis=1)).ravel()
        return k

    def solve_m(self, rhs: np.ndarray) -> np.ndarray:
        """Solve M z = rhs (rhs may hold several columns)."""
        if self._lu is not None:
            z = self._lu.solve(rhs)
        else:
            cols = rhs if rhs.ndim == 2 else rhs[:, None]
            out = np.empty_like(cols, dtype=float)
            precond = diags(1.0 / self.pi)
            for j in range(cols.shape[1]):
                b = cols[:, j]
                sol, info = cg(self.M, b, rtol=CG_TOL, atol=0.0, M=precond, maxiter=20_000)
                if info != 0:
                    raise SolverError(f"CG did not converge (info={info})")
                out[:, j] = sol
            z = out if rhs.ndim == 2 else out[:, 0]
        r = rhs - self.M @ z
        scale = max(np.abs(rhs).max(), 1e-300)
        self.last_residual = float(np.abs(r).max() / scale)
        return z

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - P) h = rhs, i.e. h = G_N rhs."""
        rhs = np.asarray(rhs, dtype=float)
        d = self.pi if rhs.ndim == 1 else self.pi[:, None]
        return self.solve_m(d * rhs)

    def _idx(self, w: WordLike) -> int:
        return self.graph.index(as_word(w))

    def green_column(self, y: WordLike) -> np.ndarray:
        """G_N(., y) from (I - P) g = delta_y."""
        e = np.zeros(self.graph.num_nodes)
        e[self._idx(y)] = 1.0
        return self.solve(e)

    def green_row(self, x: WordLike) -> np.ndarray:
        """G_N(x, .) from the transposed system (I - P)^T h = delta_x.

        (I - P)^T = M D^-1, so h = D M^-1 delta_x.
        """
        e = np.zeros(self.graph.num_nodes)
        e[self._idx(x)] = 1.0
        return self.pi * self.solve_m(e)

    def green(self, x: WordLike, y: WordLike) -> float:
        return float(self.green_column(y)[self._idx(x)])

    def first_passage(self, x: WordLike, target: WordLike = "") -> float:
        """F_N(x, target) = G_N(x, target) / G_N(target, target)."""
        col = self.green_column(target)
        return float(col[self._idx(x)] / col[self._idx(target)])

    def frontier_ancestors(self, level: int) -> np.ndarray:
        """Level-L ancestor code of every level-N node."""
        if level > self.depth:
            raise ValueError("ancestor level beyond the graph depth")
        codes = self.graph.code[self.graph.level_slice(self.depth)]
        return codes // 3 ** (self.depth - level)

    def harmonic_measure(self, x: WordLike, level: int) -> np.ndarray:
        """Exit distribution of the killed walk from x, grouped by level-L cell."""
        if level > self.depth - 3:
            raise ValueError(f"level {level} needs depth >= {level + 3}")
        row = self.green_row(x)
        sl = self.graph.level_slice(self.depth)
        mass = row[sl] * self.kill[sl]
        return np.bincount(self.frontier_ancestors(level), mass, minlength=3**level)

    def exit_measures(self, level: int) -> np.ndarray:
        """nu_x(K_w) for every node x (rows) and level-L cell w (columns)."""
        sl = self.graph.level_slice(self.depth)
        anc = self.frontier_ancestors(level)
        rhs = np.zeros((self.graph.num_nodes, 3**level))
        rhs[np.arange(sl.start, sl.stop), anc] = self.kill[sl]
        return self.solve(rhs)

    def poisson(self, frontier_values: np.ndarray) -> np.ndarray:
        """h(x) = E_x[f(exit node)] for f given on the level-N frontier."""
        sl = self.graph.level_slice(self.depth)
        rhs = np.zeros(self.graph.num_nodes)
        rhs[sl] = self.kill[sl] * np.asarray(frontier_values, dtype=float)
        return self.solve(rhs)

    def martin_kernel(self, x: WordLike, y: WordLike) -> float:
        col = self.green_column(y)
        return float(col[self._idx(x)] / col[0])

    def martin_column(self, y: WordLike) -> np.ndarray:
        """K(., y) on all of B_N."""
        col = self.green_column(y)
        return col / col[0]


_CACHE: dict = {}


def kernel_for(params: ConductanceParams, depth: int, method: str = "lu") -> TruncatedKernel:
    key = (params, depth, method)
    if key not in _CACHE:
        if len(_CACHE) > 4:
            _CACHE.clear()
        _CACHE[key] = TruncatedKernel(WeightedGraph(build_graph(depth), params), method)
    return _CACHE[key]


def _kernel(wg_or_params, depth: Optional[int]) -> TruncatedKernel:
    if isinstance(wg_or_params, TruncatedKernel):
        return wg_or_params
    if isinstance(wg_or_params, WeightedGraph):
        if depth is None or depth == wg_or_params.depth:
            return TruncatedKernel(wg_or_params)
        return kernel_for(wg_or_params.params, depth)
    if depth is None:
        raise ValueError("depth required")
    return kernel_for(wg_or_params, depth)


def green(wg, depth: Optional[int], x: WordLike, y: WordLike) -> float:
    return _kernel(wg, depth).green(x, y)


def first_passage(wg, depth: Optional[int], x: WordLike, target: WordLike = "") -> float:
    return _kernel(wg, depth).first_passage(x, target)


def harmonic_measure(wg, depth: Optional[int], x: WordLike, level: int) -> np.ndarray:
    return _kernel(wg, depth).harmonic_measure(x, level)


def martin_kernel(wg, depth: Optional[int], x: WordLike, y: WordLike) -> float:
    return _kernel(wg, depth).martin_kernel(x, y)


@dataclass(frozen=True)
class Convergence:
    """A depth sequence of truncated values with an Aitken extrapolation."""

    depths: tuple[int, ...]
    values: tuple[float, ...]
    reference: Optional[float] = None

    @property
    def extrapolated(self) -> float:
        a, b, c = self.values[-3:]
        denom = (c - b) - (b - a)
        if abs(denom) < 1e-300 or len(self.values) < 3:
            return c
        return c - (c - b) ** 2 / denom

    @property
    def increments(self) -> np.ndarray:
        return np.abs(np.diff(self.values))


def green_convergence(params: ConductanceParams, depth: int, x: WordLike = "",
                      y: WordLike = "") -> Convergence:
    """G_n(x, y) for n = N, N+1, N+2."""
    depths = (depth, depth + 1, depth + 2)
    values = tuple(kernel_for(params, n).green(x, y) for n in depths)
    ref = float(params.green_oo()) if as_word(x).length == 0 and as_word(y).length == 0 else None
    return Convergence(depths, values, ref)


@dataclass
class MartinComparison:
    """Measured K(x, xi) against lam**|x| * (3/lam)**|x ^ xi|."""

    pairs: list
    measured: np.ndarray
    predicted: np.ndarray
    gromov: np.ndarray = field(repr=False)

    @property
    def ratios(self) -> np.ndarray:
        return self.measured / self.predicted

    @property
    def band(self) -> float:
        r = self.ratios
        return float(r.max() / r.min())


def martin_comparison(kernel: TruncatedKernel, xs: Sequence[WordLike], targets: Sequence[WordLike],
                      distance_depth: Optional[int] = None) -> MartinComparison:
    """Compare the truncated Martin kernel with its comparability estimate.

    ``targets`` are deep words standing in for boundary points; Gromov
    products are taken on a graph two levels deeper than the deepest word.
    """
    from .graph import distances_from

    lam = float(kernel.wg.params.lam)
    xs = [as_word(x) for x in xs]
    targets = [as_word(t) for t in targets]
    deepest = max(max(w.length for w in xs), max(t.length for t in targets))
    dg = build_graph(distance_depth or deepest + 2)
    dist = distances_from(dg, [dg.index(t) for t in targets])
    pairs, measured, predicted, gromov = [], [], [], []
    for r, t in enumerate(targets):
        col = kernel.martin_column(t)
        for x in xs:
            gp = 0.5 * (x.length + t.length - dist[r, dg.index(x)])
            pairs.append((x, t))
            measured.append(col[kernel.graph.index(x)])
            predicted.append(lam ** x.length * (3.0 / lam) ** gp)
            gromov.append(gp)
    return MartinComparison(pairs, np.array(measured), np.array(predicted), np.array(gromov))
