"""The 2/5-2/5-1/5 triangle interpolation and functions built from it.

A function on the graph is held level by level: ``LevelFunction.values[n]``
is an array over W_n in code order.  Propagating a level n >= 1 to level
n+1 works triangle by triangle on the sibling triples (u0, u1, u2): the
child u i i keeps v(u i), and the other two children of u i take the
interpolated value of the edge they sit on.

Values may be floats or ``Fraction`` (object arrays); the latter keep every
energy identity exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .address import Word, WordLike, as_word
from .conductance import ConductanceParams
from .graph import EdgeKind, _horizontal_edges, level_geometry, symbolic_horizontal_neighbors
from .address import SQRT3_2

TAIL_PATTERN = (0, 1, 2)


class TriangleValues(NamedTuple):
    a: object
    b: object
    c: object


def _fifth(s):
    if isinstance(s, (int, Fraction)):
        return Fraction(s) / 5
    return s / 5


def interpolate_triangle(t: Sequence) -> TriangleValues:
    """Values (x, y, z) on the midpoints of edges ab, bc, ca.

    Exact when the corners are ints or Fractions.
    """
    a, b, c = t
    return TriangleValues(_fifth(2 * a + 2 * b + c), _fifth(a + 2 * b + 2 * c), _fifth(2 * a + b + 2 * c))


def triangle_sum(a, b, c):
    return (a - b) ** 2 + (b - c) ** 2 + (a - c) ** 2


class RecursionResult(NamedTuple):
    a1: object
    a2: object
    a3: object

    @property
    def degenerate(self) -> bool:
        return self.a1 == 0


def energy_recursion_check(t: Sequence, n: int, params: ConductanceParams,
                           children: Optional[Sequence] = None) -> RecursionResult:
    """One triangle of S_n: its own energy A1, that of its three child
    triangles A2, and the nine vertical edges between them A3.

    All three are direct sums.  With the default (interpolated) children
    the identities A2 * 5 lam = A1 and A3 * 25 C1 = 14 A1 are asserted.
    Pass ``children`` to evaluate A2 and A3 for other midpoint values.
    """
    a, b, c = t
    x, y, z = children if children is not None else interpolate_triangle(t)
    s = params.scale(n)
    a1 = params.c1 * s * triangle_sum(a, b, c)
    a2 = params.c1 * s / (3 * params.lam) * (
        triangle_sum(a, x, z) + triangle_sum(x, b, y) + triangle_sum(z, y, c))
    # u_i i keeps its parent's value, so three of the nine vertical terms vanish
    a3 = s * ((a - x) ** 2 + (a - z) ** 2 + (b - x) ** 2 + (b - y) ** 2 + (c - y) ** 2 + (c - z) ** 2)
    res = RecursionResult(a1, a2, a3)
    if children is None:
        exact = all(isinstance(v, (int, Fraction)) for v in (a, b, c, params.lam, params.c1))
        if exact:
            assert a2 * 5 * params.lam == a1 and a3 * 25 * params.c1 == 14 * a1
        else:
            tol = 1e-12 * max(abs(float(a1)), 1e-300)
            assert abs(float(a2 * 5 * params.lam - a1)) <= tol
            assert abs(float(a3 * 25 * params.c1 - 14 * a1)) <= 14 * tol
    return res


# Propagation matrix: level n+1 values (3 x 3 per triangle) from the 3 corners.
def _propagation_weights(exact: bool) -> np.ndarray:
    one = Fraction(1) if exact else 1.0
    w = np.zeros((3, 3, 3), dtype=object if exact else float)
    if exact:
        w[...] = Fraction(0)
    for i in range(3):
        for k in range(3):
            if i == k:
                w[i, k, i] = one
            else:
                l = 3 - i - k
                w[i, k, i] = w[i, k, k] = 2 * one / 5
                w[i, k, l] = one / 5
    return w.reshape(9, 3)


_W_FLOAT = _propagation_weights(False)
_W_EXACT = _propagation_weights(True)


def propagate(values: np.ndarray) -> np.ndarray:
    """Level n -> n+1 by triangle interpolation (n >= 1)."""
    values = np.asarray(values)
    if values.size < 3 or values.size % 3:
        raise ValueError("propagation needs a level n >= 1 array")
    tri = values.reshape(-1, 3)
    w = _W_EXACT if values.dtype == object else _W_FLOAT
    return (tri @ w.T).ravel()


@dataclass
class LevelFunction:
    """A function on B_N stored level by level."""

    values: list
    seed_level: int = 0  # levels above this were produced by propagation

    @property
    def depth(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, w: WordLike):
        w = as_word(w)
        return self.values[w.length][w.code]

    def flat(self) -> np.ndarray:
        """Values in graph order (level-major, code-minor)."""
        return np.concatenate([np.asarray(v, dtype=float) for v in self.values])

    def extended(self, depth: int) -> "LevelFunction":
        vals = list(self.values)
        while len(vals) <= depth:
            vals.append(propagate(vals[-1]))
        return LevelFunction(vals, self.seed_level)

    def scaled(self, factor) -> "LevelFunction":
        return LevelFunction([factor * np.asarray(v) for v in self.values], self.seed_level)

    @classmethod
    def from_flat(cls, array: np.ndarray, depth: int) -> "LevelFunction":
        out, start = [], 0
        for n in range(depth + 1):
            out.append(np.asarray(array[start:start + 3**n]))
            start += 3**n
        return cls(out)


def level_vertex_xy(n: int) -> np.ndarray:
    """Plane coordinates of Phi_n(w) for every w in W_n, shape (3**n, 2)."""
    a, b = level_geometry(n)
    last = np.tile(np.arange(3), 3 ** (n - 1)) if n else np.zeros(1, dtype=int)
    a = a + (last == 1)
    b = b + (last == 2)
    s = 2.0**-n
    return np.column_stack(((a + 0.5 * b) * s, SQRT3_2 * b * s))


def from_point_function(f: Callable[[np.ndarray], np.ndarray], depth: int) -> LevelFunction:
    """Level n value f(Phi_n(w)); the root gets the mean of level 1."""
    vals = [None] + [np.asarray(f(level_vertex_xy(n)), dtype=float) for n in range(1, depth + 1)]
    vals[0] = np.array([vals[1].mean()]) if depth else np.zeros(1)
    return LevelFunction(vals)


def harmonic_function(corners: Sequence, depth: int) -> LevelFunction:
    """The gasket-harmonic function with the given values at p0, p1, p2,
    sampled at Phi_n(w) on every level (root: mean of the corners)."""
    level1 = np.array(list(corners), dtype=object if _is_exact(corners) else float)
    vals = [np.array([sum(level1) / 3]), level1]
    while len(vals) <= depth:
        vals.append(propagate(vals[-1]))
    return LevelFunction(vals[:depth + 1], seed_level=1)


def _is_exact(xs) -> bool:
    return all(isinstance(x, (int, Fraction)) for x in xs)


def type2_defect(lf: LevelFunction, level: int) -> float:
    """max |v(x) - v(y)| over the type-II edges of S_level."""
    if level < 2:
        return 0.0
    u, v, k = _horizontal_edges(level)
    sel = k == EdgeKind.HORIZONTAL_II
    vals = lf.values[level]
    diff = [abs(vals[i] - vals[j]) for i, j in zip(u[sel].tolist(), v[sel].tolist())]
    return float(max(diff)) if diff else 0.0


class SeedConflict(RuntimeError):
    pass


def build_separating_function(p_cell: WordLike, q_cell: WordLike, depth: int,
                              exact: bool = False) -> LevelFunction:
    """Zero on B_m, one on the children of p and their horizontal
    neighbours, zero on the rest of S_{m+1}, interpolated down to depth."""
    p, q = as_word(p_cell), as_word(q_cell)
    m = p.length
    if q.length != m:
        raise ValueError("p_cell and q_cell must lie on the same level")
    if m < 1:
        raise ValueError("cells must have level >= 1")
    if p == q or any(y == q for y, _ in symbolic_horizontal_neighbors(p)):
        raise ValueError(f"cells {p} and {q} intersect; the construction needs disjoint cells")
    if depth < m + 1:
        raise ValueError(f"depth must be at least {m + 1}")
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    dtype = object if exact else float
    vals = [np.full(3**n, zero, dtype=dtype) for n in range(m + 1)]
    seed = np.full(3 ** (m + 1), zero, dtype=dtype)
    ones = set()
    for i in range(3):
        c = p.child(i)
        ones.add(c.code)
        ones.update(y.code for y, _ in symbolic_horizontal_neighbors(c))
    forced_zero = {q.child(i).code for i in range(3)}
    if ones & forced_zero:
        raise SeedConflict(f"seed assigns both values on {sorted(ones & forced_zero)}")
    for c in ones:
        seed[c] = one
    vals.append(seed)
    while len(vals) <= depth:
        vals.append(propagate(vals[-1]))
    return LevelFunction(vals, seed_level=m + 1)


# -- Poisson integrals ----------------------------------------------------

def frontier_from_cells(cell_values: np.ndarray, level: int, depth: int) -> np.ndarray:
    """Level-N data constant on each level-L cell."""
    cell_values = np.asarray(cell_values, dtype=float)
    if cell_values.size != 3**level:
        raise ValueError(f"expected {3**level} cell values, got {cell_values.size}")
    return np.repeat(cell_values, 3 ** (depth - level))


def cell_barycenters(level: int) -> np.ndarray:
    """Barycenters of the corner sets of all level-L cells, shape (3**L, 2)."""
    a, b = level_geometry(level)
    s = 2.0**-level
    a = a + 1.0 / 3.0
    b = b + 1.0 / 3.0
    return np.column_stack(((a + 0.5 * b) * s, SQRT3_2 * b * s))


def poisson_integral(kernel, cell_values: np.ndarray, level: int, margin: int = 4) -> np.ndarray:
    """Hu on B_{N-margin} for u piecewise constant on level-L cells.

    Hu(x) = sum_w nu_x(K_w) u(w), which is the Poisson extension of the
    level-N data u(ancestor); one solve serves every x.
    """
    if level > kernel.depth - 3:
        raise ValueError(f"level {level} needs depth >= {level + 3}")
    full = kernel.poisson(frontier_from_cells(cell_values, level, kernel.depth))
    return full[: sum(3**n for n in range(kernel.depth - margin + 1))]


def martin_density(kernel, x: WordLike, level: int) -> np.ndarray:
    """K^(x, w) = nu_x(K_w) / nu_o(K_w) over W_L."""
    return kernel.harmonic_measure(x, level) / kernel.harmonic_measure("", level)


def poisson_frontier(kernel, frontier_values: np.ndarray) -> LevelFunction:
    return LevelFunction.from_flat(kernel.poisson(frontier_values), kernel.depth)


# -- boundary traces ------------------------------------------------------

def ray(cell: WordLike, depth: int, tail: Sequence[int] = TAIL_PATTERN) -> Word:
    """The level-``depth`` node on the vertical ray into ``cell``."""
    w = as_word(cell)
    i = 0
    while w.length < depth:
        w = w.child(tail[i % len(tail)])
        i += 1
    return w


def tail_bound(params: ConductanceParams, energy: float, n: int) -> float:
    """sqrt(2C) / (1 - sqrt(3 lam)) * sqrt(3 lam)**n."""
    lam = float(params.lam)
    if lam >= 1 / 3:
        raise ValueError("the tail bound needs lambda < 1/3")
    r = math.sqrt(3 * lam)
    return math.sqrt(2 * energy) / (1 - r) * r**n


@dataclass
class BoundaryTrace:
    level: int
    depth: int
    values: np.ndarray
    bound: float
    energy: float
    tail: tuple = field(default=TAIL_PATTERN)

    def cells(self) -> list[Word]:
        return [Word(self.level, c) for c in range(3**self.level)]


def extend_to_boundary(params: ConductanceParams, v: LevelFunction, level: int,
                       energy: Optional[float] = None, depth: Optional[int] = None,
                       tail: Sequence[int] = TAIL_PATTERN) -> BoundaryTrace:
    """Values of v along the rays into every level-L cell, taken at depth N.

    ``energy`` defaults to the graph energy of v on its stored levels; pass
    the full energy when v continues beyond them.
    """
    if float(params.lam) >= 1 / 3:
        raise ValueError("lambda must be below 1/3 for the extension to be certified")
    n = v.depth if depth is None else depth
    if n > v.depth or level > n:
        raise ValueError("need level <= depth <= stored depth")
    if energy is None:
        from .energy import graph_energy_levels
        energy = graph_energy_levels(params, v).total
    vals = np.array([float(v[ray(Word(level, c), n, tail)]) for c in range(3**level)])
    return BoundaryTrace(level, n, vals, tail_bound(params, energy, n), float(energy), tuple(tail))
