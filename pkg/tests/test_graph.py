from collections import Counter

import numpy as np
import pytest
from scipy import stats

from fppcm.degrees import DegreeSequence, TailParams, synthesize
from fppcm.graph import (
    ErasedGraph, MultiGraph, build, erase, export_graph, import_graph, same_graph,
)
from fppcm.weights import Constant, Exponential

from oracle import exact_class_probs, labelled_class


def test_enumeration_oracle_counts():
    probs, total = exact_class_probs([2, 2, 2])
    assert total == 15
    tri = ((1, 2), (1, 3), (2, 3))
    assert probs[tri] == pytest.approx(8 / 15)
    assert probs[((1, 1), (2, 2), (3, 3))] == pytest.approx(1 / 15)


def test_double_edge_probability():
    hits = 0
    N = 10**4
    for s in range(N):
        g = build([2, 2], Constant(1), s)
        hits += labelled_class(zip(g.u.tolist(), g.v.tolist())) == ((1, 2), (1, 2))
    p = hits / N
    assert abs(p - 2 / 3) <= 3 * np.sqrt(2 / 9 / N)


def test_build_rejects():
    with pytest.raises(ValueError):
        build(DegreeSequence([2], strict=False, fix_parity=False), Constant(1), 0)
    with pytest.raises(ValueError):
        build([2, 3], Constant(1), 0)


def test_handshake_and_degrees():
    ds = synthesize(10**4, TailParams(2.5), 4)
    g = build(ds, Exponential(1), 5)
    assert ds.total_half_edges == 2 * g.m
    assert np.array_equal(g.degree_array()[1:], ds.degrees)
    assert g.degree_of(1) == ds.degrees[0]
    # each half-edge used exactly once
    assert np.array_equal(np.sort(g.half_edges.ravel()), np.arange(ds.total_half_edges))


def test_build_deterministic():
    ds = synthesize(2000, TailParams(2.5), 1)
    a, b = build(ds, Exponential(1), 9), build(ds, Exponential(1), 9)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.weight, b.weight)


def test_matching_uniformity_small():
    probs, _ = exact_class_probs([2, 2, 2])
    keys = sorted(probs)
    N = 30000
    counts = Counter()
    for s in range(N):
        g = build([2, 2, 2], Constant(1), s)
        counts[labelled_class(zip(g.u.tolist(), g.v.tolist()))] += 1
    assert set(counts) <= set(keys)
    obs = np.array([counts[k] for k in keys])
    exp = np.array([probs[k] for k in keys]) * N
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_weights_iid_ks():
    ds = synthesize(10**5, TailParams(2.5), 2)
    g = build(ds, Exponential(2.0), 3)
    assert np.all(g.weight >= 0)
    assert stats.kstest(g.weight, "expon", args=(0, 0.5)).pvalue > 0.01


def _multi(edges, weights, n):
    u, v = zip(*edges)
    return MultiGraph(n, np.array(u), np.array(v), np.array(weights, dtype=float))


def test_erase_triple_edge_uniform():
    g = _multi([(1, 2)] * 3, [0.1, 5.0, 2.0], 2)
    N = 10**4
    counts = Counter(float(erase(g, s).weight[0]) for s in range(N))
    for w in (0.1, 5.0, 2.0):
        assert abs(counts[w] / N - 1 / 3) <= 3 * np.sqrt(2 / 9 / N)


def test_erase_self_loop_only():
    g = _multi([(1, 1), (2, 3)], [1.0, 2.0], 3)
    e = erase(g, 0)
    assert e.edges == [(2, 3, 2.0)]
    g2 = _multi([(2, 2)], [1.0], 2)
    assert erase(g2, 0).m == 0


def test_erase_simple_identity():
    g = _multi([(1, 2), (2, 3), (1, 3)], [0.5, 1.5, 2.5], 3)
    e = erase(g, 1)
    assert same_graph(e, g)


def test_erase_structure_large():
    ds = synthesize(10**4, TailParams(2.5), 6)
    g = build(ds, Exponential(1), 7)
    e = erase(g, 8)
    assert np.all(e.u != e.v)
    key = np.minimum(e.u, e.v).astype(np.int64) * (g.n + 1) + np.maximum(e.u, e.v)
    assert np.unique(key).size == e.m
    # every kept weight is the weight of its source edge, between the same endpoints
    assert np.array_equal(e.weight, g.weight[e.provenance])
    src = np.sort(np.stack([g.u[e.provenance], g.v[e.provenance]]), axis=0)
    assert np.array_equal(src, np.sort(np.stack([e.u, e.v]), axis=0))
    # pair count = number of distinct non-loop pairs in g
    nl = g.u != g.v
    gk = np.minimum(g.u[nl], g.v[nl]).astype(np.int64) * (g.n + 1) + np.maximum(g.u[nl], g.v[nl])
    assert np.unique(gk).size == e.m


def test_erase_weight_independence():
    # survivor indicator vs weight rank inside a parallel class
    rng = np.random.default_rng(0)
    N = 10**4
    ranks = []
    for s in range(N):
        w = rng.random(4)
        g = _multi([(1, 2)] * 4, w, 2)
        kept = erase(g, s).weight[0]
        ranks.append(int(np.sum(w < kept)))
    ranks = np.array(ranks)
    # uniform survivor => rank uniform on {0,1,2,3}; correlation of indicator
    # "survivor is the lightest" with weight rank has mean 1/4
    assert abs(np.mean(ranks == 0) - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / N)
    assert stats.chisquare(np.bincount(ranks, minlength=4)).pvalue > 0.01


def test_export_examples(tmp_path):
    g = _multi([(1, 2), (1, 2)], [0.25, 0.75], 2)
    g.seed = 3
    p = tmp_path / "g.txt"
    export_graph(g, p)
    assert p.read_text().splitlines() == ["# n=2 type=multi seed=3", "1 2 0.25", "1 2 0.75"]
    empty = ErasedGraph(4, [], [], [], seed=1)
    export_graph(empty, p)
    assert p.read_text().splitlines() == ["# n=4 type=erased seed=1"]
    assert isinstance(import_graph(p), ErasedGraph)


def test_export_roundtrip(tmp_path):
    ds = synthesize(3000, TailParams(2.5), 1)
    g = build(ds, Exponential(1), 2)
    p = tmp_path / "g.txt"
    export_graph(g, p)
    back = import_graph(p)
    assert isinstance(back, MultiGraph) and back.seed == 2
    assert same_graph(back, g)
    e = erase(g, 4)
    export_graph(e, p)
    assert same_graph(import_graph(p), e)


def test_export_io_error(tmp_path):
    g = _multi([(1, 2)], [1.0], 2)
    with pytest.raises(OSError, match="nope"):
        export_graph(g, tmp_path / "nope" / "g.txt")
