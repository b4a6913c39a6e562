"""Monte Carlo for the discrete walk Z_n and the variable-speed walk X_t.

Walks run on the infinite graph: neighbours come from the symbolic rule in
:mod:`sgwalk.graph`, so there is no truncation boundary.  A walk is
stopped once it has spent ``K`` consecutive steps at level >= L + delta
inside one level-L subtree; that subtree is its exit cell.

Random streams are Philox generators keyed by (seed, chunk index).  Chunks
have a fixed size, so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .address import Word, WordLike, as_word
from .conductance import ConductanceParams

DEFAULT_K = 50
DEFAULT_DELTA = 4
DEFAULT_BUDGET = 1_000_000
CHUNK = 2000
_BLOCK = 8192


class StepBudgetExceeded(RuntimeError):
    pass


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for stream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


class _Uniforms:
    __slots__ = ("rng", "buf", "pos")

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = []
        self.pos = 0

    def draw(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.rng.random(_BLOCK).tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


_POW3 = [1]


def _pow3(n: int) -> int:
    while len(_POW3) <= n:
        _POW3.append(_POW3[-1] * 3)
    return _POW3[n]


def _type2_neighbor(n: int, code: int, d: int) -> int:
    k = 0
    c = code
    while c % 3 == d:
        c //= 3
        k += 1
    c, j = divmod(c, 3)
    pk = _pow3(k)
    return (3 * c + d) * pk + j * (pk - 1) // 2


def _step(n: int, code: int, u: float, lam3: float, c1: float, c2: float):
    """One transition from (n, code); returns (level, code, total weight)."""
    if n == 0:
        return 1, int(3.0 * u), 3.0
    d = code % 3
    has2 = code != d * (_pow3(n) - 1) // 2
    s = 3.0 + lam3 + 2.0 * c1 + (c2 if has2 else 0.0)
    x = u * s
    if x < 3.0:
        return n + 1, 3 * code + int(x), s
    x -= 3.0
    if x < lam3:
        return n - 1, code // 3, s
    x -= lam3
    if x < 2.0 * c1 or not has2:
        other = (d + 1) % 3, (d + 2) % 3
        i = min(other) if x < c1 else max(other)
        return n, code - d + i, s
    return n, _type2_neighbor(n, code, d), s


def transition_probabilities(params: ConductanceParams, x: WordLike) -> dict[Word, float]:
    """Exact P(x, .) on the infinite graph."""
    x = as_word(x)
    father, child, horiz = params.local_weights(x)
    weights = {x.child(i): float(child) for i in range(3)}
    if x.length > 0:
        weights[x.parent] = float(father)
    for y, c in horiz:
        weights[y] = float(c)
    total = sum(weights.values())
    return {y: c / total for y, c in weights.items()}


def step_walk(params: ConductanceParams, x: WordLike, rng: np.random.Generator) -> Word:
    """Sample one neighbour of x with probability c(x, y) / pi(x)."""
    x = as_word(x)
    n, code, _ = _step(x.length, x.code, float(rng.random()), 3.0 * float(params.lam),
                       float(params.c1), float(params.c2))
    return Word(n, code)


@dataclass
class WalkTrace:
    nodes: list
    holding_times: Optional[list]
    lifetime: float
    exit_cell: Word
    steps: int
    rng_seed: Optional[int] = None
    tail_bound: float = 0.0

    @property
    def levels(self) -> list[int]:
        return [w.length for w in self.nodes]


def _simulate(params: ConductanceParams, start: Word, level: int, k_stay: int, delta: int,
              budget: int, uni: _Uniforms, ctrw: bool, record: bool):
    lam3 = 3.0 * float(params.lam)
    c1, c2, gam = float(params.c1), float(params.c2), float(params.gamma)
    n, code = start.length, start.code
    deep = level + delta
    run = 0
    anc = -1
    steps = 0
    visits_root = 1 if n == 0 else 0
    hit_root = n == 0
    time = 0.0
    nodes = [(n, code)] if record else None
    holds = [] if (record and ctrw) else None
    while True:
        if run >= k_stay:
            break
        if steps >= budget:
            raise StepBudgetExceeded(f"walk from {start} not converged after {budget} steps")
        u = uni.draw()
        n2, code2, s = _step(n, code, u, lam3, c1, c2)
        if ctrw:
            # holding at the current node: rate alpha = pi/m = s / gamma**n (3 at the root)
            rate = 3.0 if n == 0 else s / gam**n
            t = -math.log1p(-uni.draw()) / rate
            time += t
            if holds is not None:
                holds.append(t)
        n, code = n2, code2
        steps += 1
        if n == 0:
            visits_root += 1
            hit_root = True
        if record:
            nodes.append((n, code))
        if n >= deep:
            a = code // _pow3(n - level)
            if a == anc:
                run += 1
            else:
                anc = a
                run = 1
        else:
            run = 0
            anc = -1
    return n, anc, steps, visits_root, hit_root, time, nodes, holds


def run_discrete(params: ConductanceParams, start: WordLike, level: int, rng: np.random.Generator,
                 k_stay: int = DEFAULT_K, delta: int = DEFAULT_DELTA,
                 budget: int = DEFAULT_BUDGET, seed: Optional[int] = None) -> WalkTrace:
    start = as_word(start)
    n, anc, steps, _, _, _, nodes, _ = _simulate(params, start, level, k_stay, delta, budget,
                                                 _Uniforms(rng), False, True)
    return WalkTrace([Word(a, b) for a, b in nodes], None, math.inf, Word(level, anc), steps, seed)


def run_ctrw(params: ConductanceParams, start: WordLike, rng: np.random.Generator, level: int = 2,
             k_stay: int = DEFAULT_K, delta: int = DEFAULT_DELTA, budget: int = DEFAULT_BUDGET,
             seed: Optional[int] = None) -> WalkTrace:
    """Variable-speed walk; the lifetime is the sum of holding times until
    the stopping rule, with the expected remaining lifetime as tail bound."""
    start = as_word(start)
    n, anc, steps, _, _, time, nodes, holds = _simulate(params, start, level, k_stay, delta, budget,
                                                        _Uniforms(rng), True, True)
    return WalkTrace([Word(a, b) for a, b in nodes], holds, time, Word(level, anc), steps, seed,
                     float(params.expected_lifetime(n)))


# -- batches --------------------------------------------------------------

@dataclass
class WalkSample:
    """Per-walk summaries of a batch, ordered by walk number."""

    params: ConductanceParams
    start: Word
    level: int
    seed: int
    exit_code: np.ndarray
    lifetime: np.ndarray
    steps: np.ndarray
    visits_root: np.ndarray
    hit_root: np.ndarray
    final_level: np.ndarray
    exhausted: int = 0

    @property
    def size(self) -> int:
        return int(self.exit_code.size)

    def hitting(self) -> "EmpiricalHitting":
        ok = self.exit_code >= 0
        counts = np.bincount(self.exit_code[ok], minlength=3**self.level)
        return EmpiricalHitting(self.level, counts, int(ok.sum()))

    def tail_bounds(self) -> np.ndarray:
        cache: dict[int, float] = {}
        out = np.empty(self.size)
        for i, n in enumerate(self.final_level.tolist()):
            if n not in cache:
                cache[n] = float(self.params.expected_lifetime(n))
            out[i] = cache[n]
        return out


@dataclass
class EmpiricalHitting:
    level: int
    counts: np.ndarray
    total: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    def as_dict(self) -> dict[str, int]:
        return {str(Word(self.level, c)): int(v) for c, v in enumerate(self.counts)}

    def max_deviation(self, reference: Optional[np.ndarray] = None) -> float:
        if reference is None:
            reference = np.full(self.counts.size, 3.0**-self.level)
        return float(np.abs(self.frequencies - reference).max())


def _run_chunk(args):
    params, start, level, seed, chunk, count, k_stay, delta, budget, ctrw = args
    uni = _Uniforms(make_rng(seed, chunk))
    out = np.zeros((count, 7))
    out[:, 0] = -1
    exhausted = 0
    for i in range(count):
        try:
            n, anc, steps, visits, hit, time, _, _ = _simulate(
                params, start, level, k_stay, delta, budget, uni, ctrw, False)
        except StepBudgetExceeded:
            exhausted += 1
            out[i] = (-1, math.nan, budget, 0, 0, -1, 0)
            continue
        out[i] = (anc, time if ctrw else math.inf, steps, visits, hit, n, 0)
    return out, exhausted


def sample_walks(params: ConductanceParams, samples: int, seed: int, start: WordLike = "",
                 level: int = 2, ctrw: bool = False, workers: Optional[int] = None,
                 k_stay: int = DEFAULT_K, delta: int = DEFAULT_DELTA,
                 budget: int = DEFAULT_BUDGET) -> WalkSample:
    """Run ``samples`` independent walks in fixed-size chunks."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    if level > 39:
        raise ValueError("exit level above 39 does not fit the packed exit code")
    start = as_word(start)
    workers = workers or os.cpu_count() or 1
    tasks = []
    for chunk, lo in enumerate(range(0, samples, CHUNK)):
        tasks.append((params, start, level, seed, chunk, min(CHUNK, samples - lo),
                      k_stay, delta, budget, ctrw))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]
    data = np.concatenate([r[0] for r in results])
    return WalkSample(
        params=params, start=start, level=level, seed=seed,
        exit_code=data[:, 0].astype(np.int64),
        lifetime=data[:, 1],
        steps=data[:, 2].astype(np.int64),
        visits_root=data[:, 3].astype(np.int64),
        hit_root=data[:, 4].astype(bool),
        final_level=data[:, 5].astype(np.int64),
        exhausted=sum(r[1] for r in results),
    )


# -- escape profile -------------------------------------------------------

@dataclass
class EscapeProfile:
    records: list = field(repr=False)
    final_levels: list
    elapsed: list
    median_time_to_level: dict
    down_fraction: float
    down_expected: float

    @property
    def all_finite(self) -> bool:
        return all(math.isfinite(t) for t in self.elapsed)


def escape_profile(traces: Sequence[WalkTrace], params: ConductanceParams) -> EscapeProfile:
    """Record levels against elapsed time, plus a one-step kernel check.

    ``down_fraction`` is the share of steps that went to a child;
    ``down_expected`` averages the exact child probability over the nodes
    the steps started from.
    """
    if not traces:
        raise ValueError("need at least one trace")
    records, finals, elapsed = [], [], []
    first_times: dict[int, list[float]] = {}
    moves = down = 0
    expected = 0.0
    for tr in traces:
        holds = tr.holding_times or [1.0] * (len(tr.nodes) - 1)
        t = 0.0
        best = tr.nodes[0].length
        rec = [(best, 0.0)]
        for w, nxt, h in zip(tr.nodes[:-1], tr.nodes[1:], holds):
            t += h
            probs = transition_probabilities(params, w)
            expected += sum(p for y, p in probs.items() if y.length == w.length + 1)
            moves += 1
            if nxt.length == w.length + 1:
                down += 1
            if nxt.length > best:
                best = nxt.length
                rec.append((best, t))
                first_times.setdefault(best, []).append(t)
        records.append(rec)
        finals.append(best)
        elapsed.append(t)
    medians = {lv: float(np.median(ts)) for lv, ts in sorted(first_times.items())}
    return EscapeProfile(records, finals, elapsed, medians, down / moves, expected / moves)
