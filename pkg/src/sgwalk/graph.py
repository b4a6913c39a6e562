"""The Sierpinski graph X = (V, E) truncated to the ball B_N.

Nodes are addressed by a global integer index: level n occupies the block
``offset(n) .. offset(n) + 3**n - 1`` and the position inside the block is
the packed word code.  Horizontal adjacency is decided by grouping exact
integer cell corners, so no floating point comparison is involved.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .address import CORNERS, Word, WordLike, as_word, barycenter

DEFAULT_MAX_NODES = 3_000_000


class EdgeKind(IntEnum):
    VERTICAL = 0
    HORIZONTAL_I = 1
    HORIZONTAL_II = 2


def level_offset(n: int) -> int:
    """Global index of the first node of level n."""
    return (3**n - 1) // 2


def ball_size(n: int) -> int:
    return (3 ** (n + 1) - 1) // 2


class GraphDepthError(ValueError):
    pass


def level_geometry(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Lattice coordinates of f_w(p0) for every w in W_n (units 2**-n)."""
    a = np.zeros(1, dtype=np.int64)
    b = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        a2 = np.repeat(2 * a, 3)
        b2 = np.repeat(2 * b, 3)
        a2[1::3] += 1
        b2[2::3] += 1
        a, b = a2, b2
    return a, b


def _horizontal_edges(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Same-level pairs whose cells share a corner, with their edge kind."""
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    a, b = level_geometry(n)
    stride = (1 << n) + 1
    cells = np.arange(3**n, dtype=np.int64)
    keys = np.concatenate([(a + da) * stride + (b + db) for da, db in CORNERS])
    owner = np.tile(cells, 3)
    order = np.argsort(keys, kind="stable")
    keys, owner = keys[order], owner[order]
    dup = np.flatnonzero(keys[1:] == keys[:-1])
    if dup.size and np.any(dup[1:] == dup[:-1] + 1):
        raise AssertionError("a lattice point is shared by more than two cells")
    x, y = owner[dup], owner[dup + 1]
    last = cells % 3
    phi = (a + np.array([0, 1, 0])[last]) * stride + (b + np.array([0, 0, 1])[last])
    kind = np.where(phi[x] == phi[y], EdgeKind.HORIZONTAL_II, EdgeKind.HORIZONTAL_I)
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    return lo, hi, kind.astype(np.int8)


def symbolic_horizontal_neighbors(w: WordLike) -> list[tuple[Word, EdgeKind]]:
    """Horizontal neighbors of w from its letters alone.

    For each corner letter i of K_w: if w = v j i^k with j != i, the cell
    sharing that corner is v i j^k (a sibling when k = 0, a type-II partner
    otherwise); if w = i^n the corner is an outer corner of K.
    """
    w = as_word(w)
    n = w.length
    out = []
    if n == 0:
        return out
    for i in range(3):
        k = 0
        c = w.code
        while k < n and c % 3 == i:
            c //= 3
            k += 1
        if k == n:
            continue
        c, j = divmod(c, 3)
        pk = 3**k
        code = (3 * c + i) * pk + j * (pk - 1) // 2
        out.append((Word(n, code), EdgeKind.HORIZONTAL_I if k == 0 else EdgeKind.HORIZONTAL_II))
    return out


@dataclass(frozen=True)
class Graph:
    """Leveled adjacency store for B_N.

    ``indptr/indices/kinds`` form a symmetric CSR adjacency; ``level`` and
    ``code`` give the word of every global index.
    """

    depth: int
    level: np.ndarray
    code: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    kinds: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.level.size)

    @property
    def root(self) -> Word:
        return Word(0, 0)

    def index(self, w: WordLike) -> int:
        w = as_word(w)
        if w.length > self.depth:
            raise GraphDepthError(f"word {w} is deeper than the graph depth {self.depth}")
        return level_offset(w.length) + w.code

    def word(self, idx: int) -> Word:
        return Word(int(self.level[idx]), int(self.code[idx]))

    def level_slice(self, n: int) -> slice:
        return slice(level_offset(n), level_offset(n + 1))

    def neighbors(self, w: WordLike) -> list[tuple[Word, EdgeKind]]:
        i = self.index(w)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(self.word(j), EdgeKind(k)) for j, k in zip(self.indices[lo:hi], self.kinds[lo:hi])]

    def degree(self, w: WordLike) -> int:
        i = self.index(w)
        return int(self.indptr[i + 1] - self.indptr[i])

    def edge_kind(self, x: WordLike, y: WordLike) -> Optional[EdgeKind]:
        i, j = self.index(x), self.index(y)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        hit = np.flatnonzero(self.indices[lo:hi] == j)
        if hit.size == 0:
            return None
        return EdgeKind(int(self.kinds[lo + hit[0]]))

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unordered edges (u < v) as index arrays plus kinds."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        keep = rows < self.indices
        return rows[keep], self.indices[keep], self.kinds[keep]

    def horizontal_edges(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        u, v, k = self.edges()
        sel = (k != EdgeKind.VERTICAL) & (self.level[u] == n)
        return u[sel], v[sel], k[sel]

    def adjacency(self) -> csr_matrix:
        n = self.num_nodes
        data = np.ones(self.indices.size, dtype=np.float64)
        return csr_matrix((data, self.indices, self.indptr), shape=(n, n))


def build_graph(depth: int, max_nodes: int = DEFAULT_MAX_NODES) -> Graph:
    """Construct B_N with typed vertical and horizontal edges."""
    if depth < 1:
        raise ValueError("graph depth must be >= 1")
    total = ball_size(depth)
    if total > max_nodes:
        raise GraphDepthError(f"depth {depth} needs {total} nodes, over the budget of {max_nodes}")

    us, vs, ks = [], [], []
    for n in range(1, depth + 1):
        child = np.arange(3**n, dtype=np.int64)
        us.append(level_offset(n - 1) + child // 3)
        vs.append(level_offset(n) + child)
        ks.append(np.zeros(child.size, dtype=np.int8))
        lo, hi, kind = _horizontal_edges(n)
        us.append(level_offset(n) + lo)
        vs.append(level_offset(n) + hi)
        ks.append(kind)
    u = np.concatenate(us)
    v = np.concatenate(vs)
    k = np.concatenate(ks)

    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    kind = np.concatenate([k, k])
    order = np.lexsort((dst, src))
    src, dst, kind = src[order], dst[order], kind[order]
    indptr = np.zeros(total + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=total), out=indptr[1:])

    level = np.concatenate([np.full(3**n, n, dtype=np.int64) for n in range(depth + 1)])
    code = np.concatenate([np.arange(3**n, dtype=np.int64) for n in range(depth + 1)])
    return Graph(depth, level, code, indptr, dst, kind)


def write_edge_csv(g: Graph, path) -> None:
    """Edge list with columns (from, to, kind, level_from, level_to)."""
    u, v, k = g.edges()
    names = {EdgeKind.VERTICAL: "vertical", EdgeKind.HORIZONTAL_I: "horizontal_I",
             EdgeKind.HORIZONTAL_II: "horizontal_II"}
    def emit(fh):
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["from", "to", "kind", "level_from", "level_to"])
        for a, b, kind in zip(u.tolist(), v.tolist(), k.tolist()):
            out.writerow([str(g.word(a)), str(g.word(b)), names[EdgeKind(kind)],
                          int(g.level[a]), int(g.level[b])])

    if hasattr(path, "write"):
        emit(path)
    else:
        with open(path, "w", newline="") as fh:
            emit(fh)


# -- metric ---------------------------------------------------------------

def _check_margin(g: Graph, *ws: Word) -> None:
    worst = max(w.length for w in ws)
    if worst > g.depth - 2:
        raise GraphDepthError(
            f"distances need a 2-level margin: level {worst} > depth {g.depth} - 2")


def distances_from(g: Graph, sources: Sequence[int]) -> np.ndarray:
    """BFS hop counts from each source index to every node of the ball."""
    d = shortest_path(g.adjacency(), method="D", unweighted=True, indices=np.asarray(sources))
    return np.rint(d).astype(np.int64)


def graph_distance(g: Graph, x: WordLike, y: WordLike) -> int:
    x, y = as_word(x), as_word(y)
    _check_margin(g, x, y)
    if x == y:
        return 0
    return int(distances_from(g, [g.index(x)])[0, g.index(y)])


def gromov_product(g: Graph, x: WordLike, y: WordLike) -> Fraction:
    """|x ^ y| = (|x| + |y| - d(x, y)) / 2 with o as base point."""
    x, y = as_word(x), as_word(y)
    return Fraction(x.length + y.length - graph_distance(g, x, y), 2)


def rho_a(g: Graph, x: WordLike, y: WordLike, a: float = math.log(2.0)) -> float:
    if a <= 0:
        raise ValueError("a must be positive")
    x, y = as_word(x), as_word(y)
    if x == y:
        return 0.0
    return math.exp(-a * float(gromov_product(g, x, y)))


def gromov_matrix(g: Graph, nodes: Sequence[int]) -> np.ndarray:
    """Pairwise Gromov products (as floats, exact half-integers)."""
    nodes = np.asarray(nodes)
    worst = int(g.level[nodes].max())
    if worst > g.depth - 2:
        raise GraphDepthError(f"level {worst} exceeds depth {g.depth} - 2")
    d = distances_from(g, nodes)[:, nodes]
    lv = g.level[nodes]
    return 0.5 * (lv[:, None] + lv[None, :] - d)


def ultrametric_constant(g: Graph, level: int, a: float = math.log(2.0)) -> float:
    """Smallest K with rho(x,y) <= K * max(rho(x,z), rho(z,y)) on B_level.

    The paper's constant is 1 + a'; this returns the measured K.
    """
    nodes = np.arange(ball_size(level))
    rho = np.exp(-a * gromov_matrix(g, nodes))
    np.fill_diagonal(rho, 0.0)
    worst = 0.0
    for z in range(nodes.size):
        bound = np.maximum(rho[:, z][:, None], rho[z, :][None, :])
        mask = bound > 0
        if mask.any():
            worst = max(worst, float((rho[mask] / bound[mask]).max()))
    return worst


# -- Hoelder comparison of rho_a with the Euclidean metric ----------------

@dataclass(frozen=True)
class HolderReport:
    slope: float
    ratio_min: float
    ratio_max: float
    pairs: int
    exponent: float

    @property
    def ratio_band(self) -> float:
        return self.ratio_max / self.ratio_min


def sample_deep_pairs(depth: int, count: int, rng: np.random.Generator) -> list[tuple[Word, Word]]:
    """Random pairs of length-``depth`` words spread over all divergence levels."""
    pairs = []
    for t in range(count):
        split = t % (depth - 1)
        x = Word(depth, int(rng.integers(3**depth)))
        head = x.ancestor(split)
        while True:
            y = head.extend(int(c) for c in rng.integers(0, 3, size=depth - split))
            if y.ancestor(split + 1) != x.ancestor(split + 1):
                break
        pairs.append((x, y))
    return pairs


def holder_check(g: Graph, pairs: Sequence[tuple[WordLike, WordLike]],
                 a: float = math.log(2.0)) -> HolderReport:
    """Compare |Phi(xi) - Phi(eta)| with rho_a(xi, eta)**(log2/a).

    Deep words stand in for boundary points: Phi is evaluated at the
    barycenter of the deepest cell and the Gromov product on the graph.
    """
    pairs = [(as_word(x), as_word(y)) for x, y in pairs]
    if not pairs:
        raise ValueError("empty sample")
    sources = sorted({g.index(x) for x, _ in pairs})
    worst = max(max(x.length, y.length) for x, y in pairs)
    if worst > g.depth - 2:
        raise GraphDepthError(f"pairs at level {worst} need depth >= {worst + 2}")
    dist = distances_from(g, sources)
    row = {s: r for r, s in enumerate(sources)}
    exponent = math.log(2.0) / a
    eu, rh = [], []
    for x, y in pairs:
        if x == y:
            continue
        d = dist[row[g.index(x)], g.index(y)]
        gp = 0.5 * (x.length + y.length - d)
        bx, by = barycenter(x), barycenter(y)
        e = math.hypot(bx[0] - by[0], bx[1] - by[1])
        if e == 0.0:
            continue
        eu.append(e)
        rh.append(math.exp(-a * gp) ** exponent)
    if not eu:
        raise ValueError("degenerate sample: every pair maps to the same point")
    eu, rh = np.array(eu), np.array(rh)
    ratio = eu / rh
    x = np.log(rh ** (1.0 / exponent))
    slope = np.polyfit(x, np.log(eu), 1)[0] if np.ptp(x) > 0 else math.nan
    return HolderReport(float(slope), float(ratio.min()), float(ratio.max()), eu.size, exponent)


def iter_ball(g: Graph) -> Iterator[Word]:
    for i in range(g.num_nodes):
        yield g.word(i)
