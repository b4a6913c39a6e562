import math

import numpy as np
import pytest

from sgwalk.address import Word, as_word
from sgwalk.conductance import ConductanceParams, WeightedGraph, transition
from sgwalk.graph import build_graph, symbolic_horizontal_neighbors
from sgwalk.walk import (StepBudgetExceeded, _step, _Uniforms, escape_profile, make_rng, run_ctrw,
                         run_discrete, sample_walks, step_walk, transition_probabilities)

P25 = ConductanceParams(0.25)


def adjacent(x: Word, y: Word) -> bool:
    if abs(x.length - y.length) == 1:
        lo, hi = (x, y) if x.length < y.length else (y, x)
        return hi.parent == lo
    return x.length == y.length and any(z == y for z, _ in symbolic_horizontal_neighbors(x))


def test_transition_probabilities_match_graph():
    p = ConductanceParams(0.3, 1.7, 0.4)
    wg = WeightedGraph(build_graph(6), p)
    for w in ["", "0", "01", "0122", "21110"]:
        probs = transition_probabilities(p, w)
        assert abs(sum(probs.values()) - 1) < 1e-12
        for y, pr in probs.items():
            assert abs(pr - transition(wg, w, y)) < 1e-12


def test_father_to_children_ratio():
    for w in ["1", "20", "0121"]:
        probs = transition_probabilities(P25, w)
        x = as_word(w)
        kids = sum(probs[x.child(i)] for i in range(3))
        assert abs(probs[x.parent] / kids - 0.25) < 1e-12


def test_from_root_uniform():
    rng = make_rng(11)
    counts = {}
    n = 30000
    for _ in range(n):
        y = step_walk(P25, "", rng)
        counts[y] = counts.get(y, 0) + 1
    assert set(counts) == {Word(1, 0), Word(1, 1), Word(1, 2)}
    sd = math.sqrt(n * (1 / 3) * (2 / 3))
    assert all(abs(c - n / 3) < 4 * sd for c in counts.values())


def test_one_step_frequencies_from_node_0():
    exact = transition_probabilities(P25, "0")
    uni = _Uniforms(make_rng(7))
    n = 10**6
    counts = {}
    for _ in range(n):
        lv, code, _ = _step(1, 0, uni.draw(), 0.75, 1.0, 1.0)
        counts[(lv, code)] = counts.get((lv, code), 0) + 1
    for y, pr in exact.items():
        c = counts.get((y.length, y.code), 0)
        assert abs(c - n * pr) < 4 * math.sqrt(n * pr * (1 - pr))
    assert sum(counts.values()) == n


def test_type2_move():
    # node 001 has the type-II neighbour 010; the step must be able to reach it
    uni = _Uniforms(make_rng(0))
    seen = set()
    for _ in range(20000):
        lv, code, _ = _step(3, 1, uni.draw(), 0.75, 1.0, 1.0)
        seen.add(Word(lv, code))
    assert set(transition_probabilities(P25, "001")) == seen


def test_trace_adjacency_and_stop_rule():
    tr = run_discrete(P25, "", 2, make_rng(3))
    assert all(adjacent(a, b) for a, b in zip(tr.nodes, tr.nodes[1:]))
    assert tr.steps == len(tr.nodes) - 1
    tail = tr.nodes[-50:]
    assert all(w.length >= 6 and w.ancestor(2) == tr.exit_cell for w in tail)
    assert tr.lifetime == math.inf


def test_ctrw_holding_times():
    tr = run_ctrw(P25, "", make_rng(9), level=2)
    assert len(tr.holding_times) == tr.steps
    assert all(h > 0 for h in tr.holding_times)
    assert abs(tr.lifetime - sum(tr.holding_times)) < 1e-12
    assert 0 < tr.tail_bound < 1e-3


def test_mean_holding_time_at_root():
    first = [run_ctrw(P25, "", make_rng(5, i), level=1, k_stay=1, delta=0).holding_times[0]
             for i in range(4000)]
    m = np.mean(first)
    se = np.std(first) / math.sqrt(len(first))
    assert abs(m - 1 / 3) < 4 * se


def test_budget_exhaustion():
    with pytest.raises(StepBudgetExceeded):
        run_discrete(P25, "", 3, make_rng(1), budget=5)
    s = sample_walks(P25, 50, 1, level=3, budget=5, workers=1)
    assert s.exhausted == 50 and (s.exit_code < 0).all()


def test_samples_validation():
    with pytest.raises(ValueError):
        sample_walks(P25, 0, 1)


@pytest.mark.parametrize("lam", [0.22, 0.25, 0.30])
def test_renewal_green(lam):
    p = ConductanceParams(lam)
    s = sample_walks(p, 20000, 100, level=1, workers=1)
    v = s.visits_root
    assert abs(v.mean() - 1 / (1 - lam)) < 3 * v.std() / math.sqrt(v.size)
    ret = (v > 1).mean()
    assert abs(ret - lam) < 3 * math.sqrt(lam * (1 - lam) / v.size)


@pytest.mark.parametrize("start", ["0", "12", "000", "201"])
def test_first_passage_law(start):
    s = sample_walks(P25, 12000, 7, start=start, level=1, workers=1)
    f = 0.25 ** len(start)
    assert abs(s.hit_root.mean() - f) < 3 * math.sqrt(f * (1 - f) / s.size)


def test_exit_level1_uniform():
    s = sample_walks(P25, 9000, 3, level=1, workers=1)
    c = s.hitting().counts
    n = c.sum()
    assert all(abs(x - n / 3) < 4 * math.sqrt(n * 2 / 9) for x in c)


def test_hitting_counts_sum():
    s = sample_walks(P25, 500, 3, level=2, workers=1)
    h = s.hitting()
    assert h.counts.sum() == h.total == 500
    assert all(len(k) == 2 for k in h.as_dict())


def test_reproducible_and_worker_invariant():
    a = sample_walks(P25, 4500, 42, level=2, ctrw=True, workers=1)
    b = sample_walks(P25, 4500, 42, level=2, ctrw=True, workers=1)
    c = sample_walks(P25, 4500, 42, level=2, ctrw=True, workers=3)
    for x, y in ((a, b), (a, c)):
        assert np.array_equal(x.exit_code, y.exit_code)
        assert np.array_equal(x.lifetime, y.lifetime)
        assert np.array_equal(x.steps, y.steps)
    d = sample_walks(P25, 4500, 43, level=2, ctrw=True, workers=1)
    assert not np.array_equal(a.lifetime, d.lifetime)


def test_lifetimes_finite_with_tail():
    s = sample_walks(ConductanceParams(0.25, gamma=0.125), 3000, 8, ctrw=True, workers=1)
    assert np.isfinite(s.lifetime).all()
    assert (s.tail_bounds() < 1e-4).all()


def test_escape_profile():
    traces = [run_ctrw(P25, "", make_rng(21, i), level=2) for i in range(300)]
    prof = escape_profile(traces, P25)
    assert prof.all_finite
    assert prof.final_levels == [max(t.levels) for t in traces]
    assert all(rec[-1][0] == fl for rec, fl in zip(prof.records, prof.final_levels))
    n = sum(t.steps for t in traces)
    p = prof.down_expected
    assert abs(prof.down_fraction - p) < 4 * math.sqrt(p * (1 - p) / n)
    with pytest.raises(ValueError):
        escape_profile([], P25)
