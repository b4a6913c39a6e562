import numpy as np
import pytest

from sgwalk.address import Word, words
from sgwalk.conductance import ConductanceParams, WeightedGraph
from sgwalk.graph import build_graph
from sgwalk.green import (TruncatedKernel, first_passage, green, green_convergence, harmonic_measure,
                          kernel_for, martin_comparison, martin_kernel)


@pytest.fixture(scope="module")
def k8():
    return kernel_for(ConductanceParams(0.25), 8)


def dense_green(wg):
    """Oracle: invert I - P densely."""
    C = wg.conductance_matrix().toarray()
    P = C / wg.pi[:, None]
    return np.linalg.inv(np.eye(len(P)) - P)


def test_matches_dense_inverse():
    wg = WeightedGraph(build_graph(5), ConductanceParams(0.28, 1.5, 0.7))
    k = TruncatedKernel(wg)
    G = dense_green(wg)
    for y in ["", "0", "21", "1201"]:
        j = wg.graph.index(Word.parse(y))
        assert np.allclose(k.green_column(y), G[:, j], rtol=1e-10, atol=1e-13)
    assert np.allclose(k.green_row("12"), G[wg.graph.index(Word.parse("12"))], rtol=1e-10)


def test_cg_matches_lu():
    wg = WeightedGraph(build_graph(7), ConductanceParams(0.25))
    a = TruncatedKernel(wg, "lu").green_column("0")
    b = TruncatedKernel(wg, "cg").green_column("0")
    assert np.allclose(a, b, rtol=1e-9)


def test_kill_only_on_frontier(k8):
    P = k8.P
    rows = np.asarray(P.sum(axis=1)).ravel()
    assert np.all(rows <= 1 + 1e-14)
    last = k8.graph.level == k8.depth
    assert np.allclose(rows[~last], 1.0, atol=1e-14)
    assert np.all(rows[last] < 1)


def test_green_oo_within_bounds():
    p = ConductanceParams(0.25)
    g = green(p, 10, "", "")
    assert 1.30 <= g <= 4 / 3 and abs(g - 4 / 3) < 1e-3


def test_green_monotone_in_depth():
    p = ConductanceParams(0.25)
    vals = [green(p, n, "", "") for n in range(2, 10)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(v < 4 / 3 for v in vals)


def test_green_symmetry(k8):
    pairs = [("", "0"), ("01", "122"), ("2", "2222"), ("0120", "0121")]
    for x, y in pairs:
        gx = k8.green(x, y) / k8.pi[k8.graph.index(Word.parse(y))]
        gy = k8.green(y, x) / k8.pi[k8.graph.index(Word.parse(x))]
        assert abs(gx - gy) <= 1e-10 * abs(gx)


def test_row_column_agreement(k8):
    for x, y in [("0", "11"), ("", "2"), ("012", "")]:
        a = k8.green_row(x)[k8.graph.index(Word.parse(y))]
        b = k8.green_column(y)[k8.graph.index(Word.parse(x))]
        assert abs(a - b) <= 1e-10 * abs(b)


def test_depth_increments_shrink():
    conv = green_convergence(ConductanceParams(0.25), 6)
    inc = conv.increments
    assert inc[1] < inc[0]
    assert abs(conv.extrapolated - 4 / 3) < abs(conv.values[-1] - 4 / 3)


def test_first_passage_examples():
    assert first_passage(ConductanceParams(0.25), 8, "", "") == 1.0
    f = first_passage(ConductanceParams(0.25), 10, "01", "")
    assert abs(f / (1 / 16) - 1) < 1e-3
    f = first_passage(ConductanceParams(0.3), 10, "2", "")
    assert abs(f / 0.3 - 1) < 1e-3


def test_harmonic_measure_examples():
    k = kernel_for(ConductanceParams(0.25), 10)
    mu1 = k.harmonic_measure("", 1)
    assert np.allclose(mu1, 1 / 3, atol=1e-12)
    mu2 = k.harmonic_measure("", 2)
    assert np.abs(mu2 - 1 / 9).max() < 1e-3
    mu0 = k.harmonic_measure("0", 1)
    assert mu0[0] > 1 / 3 and abs(mu0.sum() - 1) < 1e-9


def test_harmonic_measure_level_guard(k8):
    with pytest.raises(ValueError):
        k8.harmonic_measure("", 6)


def test_martin_density_normalised(k8):
    nu_o = k8.harmonic_measure("", 3)
    for x in ["0", "12", "201"]:
        K = k8.harmonic_measure(x, 3) / nu_o
        assert abs((K * 3.0**-3).sum() - 1) < 1e-6


def test_exit_measures_rows_sum_to_one(k8):
    E = k8.exit_measures(2)
    assert np.allclose(E.sum(axis=1), 1.0, atol=1e-9)


def test_martin_kernel_basic(k8):
    y = Word(7, 1234)
    assert martin_kernel(k8, None, "", y) == 1.0


def test_martin_comparison_band():
    p = ConductanceParams(0.25)
    k = kernel_for(p, 9)
    rng = np.random.default_rng(3)
    targets = [Word(8, int(rng.integers(3**8))) for _ in range(3)]
    xs = [w for n in range(4) for w in words(n)]
    mc = martin_comparison(k, xs, targets)
    assert len(mc.pairs) >= 100
    assert mc.band <= 100
    # along the geodesic to xi the prediction is 3**|x|
    geo = martin_comparison(k, [targets[0].ancestor(n) for n in range(5)], targets[:1])
    assert np.allclose(geo.predicted, 3.0 ** np.arange(5))
    assert geo.band <= 100


def test_poisson_constant(k8):
    h = k8.poisson(np.ones(3**8))
    assert np.allclose(h, 1.0, atol=1e-9)


def test_bad_method():
    with pytest.raises(ValueError):
        TruncatedKernel(WeightedGraph(build_graph(2), ConductanceParams()), "qr")
