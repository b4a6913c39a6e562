"""Lambda-return-ratio conductances, stationary weights and the measure m.

Conductances are never stored per edge; they follow from (kind, level):

* vertical edge between levels n and n+1: (3*lam)**-n
* horizontal type-I edge on level n:       C1 * (3*lam)**-n
* horizontal type-II edge on level n:      C2 * (3*lam)**-n

Parameters may be floats or ``fractions.Fraction``; the scalar helpers keep
exact arithmetic when given exact inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix

from .address import Word, WordLike, as_word
from .graph import EdgeKind, Graph, level_offset, symbolic_horizontal_neighbors

REGULAR_LOW = Fraction(1, 5)
REGULAR_HIGH = Fraction(1, 3)


@dataclass(frozen=True)
class ConductanceParams:
    """lam: return ratio; c1, c2: horizontal constants; gamma: measure base."""

    lam: Real = 0.25
    c1: Real = 1.0
    c2: Real = 1.0
    gamma: Optional[Real] = None

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.lam / 2)
        if not 0 < self.lam < 1:
            raise ValueError(f"lambda must lie in (0,1), got {self.lam}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("C1 and C2 must be positive")
        if not 0 < self.gamma < self.lam:
            raise ValueError(f"gamma must lie in (0, lambda) = (0, {self.lam}), got {self.gamma}")

    @property
    def beta(self) -> float:
        return -math.log(self.lam) / math.log(2.0)

    @property
    def regular(self) -> bool:
        return REGULAR_LOW < self.lam < REGULAR_HIGH

    def scale(self, n: int):
        """(3*lam)**-n."""
        return (3 * self.lam) ** (-n)

    def vertical(self, n: int):
        """Conductance of an edge between levels n and n+1."""
        return self.scale(n)

    def horizontal(self, kind: EdgeKind, n: int):
        if kind == EdgeKind.HORIZONTAL_I:
            return self.c1 * self.scale(n)
        if kind == EdgeKind.HORIZONTAL_II:
            return self.c2 * self.scale(n)
        raise ValueError(f"{kind!r} is not horizontal")

    def local_weights(self, w: WordLike):
        """Neighbour weights of w in units of (3*lam)**-|w|.

        Returns (father, child, [(neighbor, weight), ...]); level-free for
        |w| >= 1, which is what the walk engine relies on.
        """
        w = as_word(w)
        if w.length == 0:
            return 0, 1, []
        horiz = [(y, self.c1 if k == EdgeKind.HORIZONTAL_I else self.c2)
                 for y, k in symbolic_horizontal_neighbors(w)]
        return 3 * self.lam, 1, horiz

    def pi(self, w: WordLike):
        """pi(w) on the infinite graph, exact when the parameters are."""
        w = as_word(w)
        if w.length == 0:
            return 3 * self.vertical(0)
        father, child, horiz = self.local_weights(w)
        return self.scale(w.length) * (father + 3 * child + sum(c for _, c in horiz))

    def measure(self, n: int):
        """m(x) for |x| = n."""
        return (self.gamma / (3 * self.lam)) ** n

    def total_mass(self):
        """m(X) = 1 / (1 - gamma/lam)."""
        return 1 / (1 - self.gamma / self.lam)

    def green_oo(self):
        """G(o,o) = 1 / (1 - lam)."""
        return 1 / (1 - self.lam)

    def expected_lifetime(self, n: int = 0):
        """E_x zeta for |x| = n, in closed form.

        The level of the continuous-time walk is a birth-death process with
        rates 3/gamma**k (up) and 3*lam/gamma**k (down), so

            E_n zeta = 1/(3(1-lam)) * sum_k F(n,k) gamma**k,

        with F(n,k) = lam**(n-k) for k < n and 1 otherwise.
        """
        lam, g = self.lam, self.gamma
        below = sum(lam ** (n - k) * g**k for k in range(n))
        above = g**n / (1 - g)
        return (below + above) / (3 * (1 - lam))

    def trace_constant(self):
        """C**2 = max(14 G(o,o)/pi(o), 4/m(o))."""
        return max(14 * self.green_oo() / self.pi(Word(0, 0)), 4 / self.measure(0))


@dataclass
class WeightedGraph:
    """A truncated graph together with conductance parameters."""

    graph: Graph
    params: ConductanceParams
    _pi: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def depth(self) -> int:
        return self.graph.depth

    def edge_conductances(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unordered edges (u, v) with float conductances."""
        u, v, k = self.graph.edges()
        lo = np.minimum(self.graph.level[u], self.graph.level[v]).astype(float)
        s = (3.0 * float(self.params.lam)) ** (-lo)
        mult = np.array([1.0, float(self.params.c1), float(self.params.c2)])[k]
        return u, v, s * mult

    @property
    def pi(self) -> np.ndarray:
        """pi on B_N, counting the (unmaterialised) children of level N."""
        if self._pi is None:
            g = self.graph
            u, v, c = self.edge_conductances()
            pi = np.bincount(u, c, minlength=g.num_nodes) + np.bincount(v, c, minlength=g.num_nodes)
            last = g.level_slice(g.depth)
            pi[last] += 3.0 * (3.0 * float(self.params.lam)) ** (-g.depth)
            self._pi = pi
        return self._pi

    def conductance_matrix(self) -> csr_matrix:
        u, v, c = self.edge_conductances()
        n = self.graph.num_nodes
        return csr_matrix((np.concatenate([c, c]), (np.concatenate([u, v]), np.concatenate([v, u]))),
                          shape=(n, n))

    def measure_array(self) -> np.ndarray:
        base = float(self.params.gamma) / (3.0 * float(self.params.lam))
        return base ** self.graph.level.astype(float)


def conductance(wg: WeightedGraph, x: WordLike, y: WordLike):
    """c(x, y) for graph neighbours x ~ y."""
    x, y = as_word(x), as_word(y)
    kind = wg.graph.edge_kind(x, y)
    if kind is None:
        raise ValueError(f"{x} and {y} are not adjacent")
    if kind == EdgeKind.VERTICAL:
        return wg.params.vertical(min(x.length, y.length))
    return wg.params.horizontal(kind, x.length)


def pi_weight(wg: WeightedGraph, x: WordLike):
    x = as_word(x)
    if x.length > wg.depth:
        raise ValueError(f"{x} lies outside B_{wg.depth}")
    return wg.params.pi(x)


def transition(wg: WeightedGraph, x: WordLike, y: WordLike):
    """P(x, y) = c(x, y) / pi(x)."""
    return conductance(wg, x, y) / pi_weight(wg, x)


def measure_m(params: ConductanceParams, x: WordLike):
    return params.measure(as_word(x).length)


def return_ratio(params: ConductanceParams, x: WordLike):
    """c(x, x^-) / sum over children of c(x, child); equals lam for |x| >= 1."""
    x = as_word(x)
    return params.vertical(x.length - 1) / (3 * params.vertical(x.length))


def level_pi_sum(wg: WeightedGraph, n: int) -> float:
    return float(wg.pi[level_offset(n):level_offset(n + 1)].sum())
