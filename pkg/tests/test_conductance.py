from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgwalk.address import Word, words
from sgwalk.conductance import (ConductanceParams, WeightedGraph, conductance, level_pi_sum, measure_m,
                                pi_weight, return_ratio, transition)
from sgwalk.graph import build_graph

EXACT = ConductanceParams(F(1, 4), F(1), F(1))


def test_defaults():
    p = ConductanceParams()
    assert p.lam == 0.25 and p.gamma == 0.125 and p.c1 == p.c2 == 1.0
    assert p.beta == 2.0 and p.regular


@pytest.mark.parametrize("kw", [dict(lam=0), dict(lam=1), dict(lam=0.3, gamma=0.3), dict(lam=0.3, gamma=0),
                                dict(c1=0), dict(c2=-1)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        ConductanceParams(**kw)


def test_conductance_examples():
    wg = WeightedGraph(build_graph(4), EXACT)
    assert conductance(wg, "", "0") == 1
    assert conductance(wg, "0", "01") == F(4, 3)
    assert conductance(wg, "000", "001") == F(64, 27)
    with pytest.raises(ValueError):
        conductance(wg, "00", "22")


def test_pi_examples():
    wg = WeightedGraph(build_graph(3), EXACT)
    assert pi_weight(wg, "") == 3
    assert pi_weight(wg, "0") == F(23, 3)
    # the float array agrees with the exact values
    for w in list(words(1)) + list(words(2)):
        assert abs(wg.pi[wg.graph.index(w)] - float(EXACT.pi(w))) < 1e-12


def test_pi_outside_ball():
    wg = WeightedGraph(build_graph(2), EXACT)
    with pytest.raises(ValueError):
        pi_weight(wg, "000")


def test_pi_from_edge_sums():
    # pi computed edge by edge equals the symbolic value on every interior node
    p = ConductanceParams(0.27, 1.3, 0.6)
    wg = WeightedGraph(build_graph(6), p)
    for i in range(wg.graph.num_nodes):
        w = wg.graph.word(i)
        assert abs(wg.pi[i] - p.pi(w)) <= 1e-12 * wg.pi[i]


def test_return_ratio_exact():
    for w in list(words(1)) + list(words(3)):
        assert return_ratio(EXACT, w) == F(1, 4)


@pytest.mark.parametrize("seed", range(20))
def test_reversibility_random_params(seed):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.05, 0.95)
    p = ConductanceParams(lam, rng.uniform(0.1, 5), rng.uniform(0.1, 5), lam * rng.uniform(0.05, 0.95))
    wg = WeightedGraph(build_graph(6), p)
    g = wg.graph
    u, v, c = wg.edge_conductances()
    P = wg.conductance_matrix().multiply(1.0 / wg.pi[:, None]).tocsr()
    lhs = wg.pi[u] * np.asarray(P[u, v]).ravel()
    rhs = wg.pi[v] * np.asarray(P[v, u]).ravel()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)
    # father weight / total child weight = lambda on every non-root node of B_5
    lv = g.level
    vert = lv[u] != lv[v]
    child_sum = np.bincount(u[vert], c[vert], minlength=g.num_nodes)
    father = np.zeros(g.num_nodes)
    father[v[vert]] = c[vert]
    inner = (lv >= 1) & (lv <= 5)
    assert np.allclose(father[inner] / child_sum[inner], lam, rtol=1e-12)


def test_transition_row_sums():
    wg = WeightedGraph(build_graph(5), ConductanceParams(0.3))
    for w in ["", "0", "12", "2101"]:
        tot = sum(transition(wg, w, y) for y, _ in wg.graph.neighbors(w))
        assert abs(tot - 1.0) < 1e-12


def test_measure():
    p = ConductanceParams(F(1, 4), gamma=F(1, 8))
    assert measure_m(p, "") == 1
    assert p.total_mass() == 2
    assert 9 * p.measure(2) == F(1, 4)
    partial = sum(3**n * float(p.measure(n)) for n in range(60))
    assert abs(partial - 2.0) < 1e-12


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_total_mass_closed_form(lam, frac):
    p = ConductanceParams(lam, gamma=lam * frac)
    per_level = 3 * p.measure(1)  # mass of a whole level is per_level**n
    partial = sum(per_level**n for n in range(2000))
    assert abs(partial - p.total_mass()) < 1e-9 * p.total_mass()


def test_measure_array():
    wg = WeightedGraph(build_graph(3), ConductanceParams(F(1, 4), gamma=F(1, 8)))
    m = wg.measure_array()
    assert np.allclose(m, (1 / 6) ** wg.graph.level)


def test_level_pi_sum():
    wg = WeightedGraph(build_graph(3), ConductanceParams())
    assert level_pi_sum(wg, 0) == 3.0


def test_closed_forms():
    p = ConductanceParams(F(1, 4), gamma=F(1, 8))
    assert p.green_oo() == F(4, 3)
    assert p.expected_lifetime(0) == F(32, 63)
    assert p.trace_constant() == F(56, 9)
