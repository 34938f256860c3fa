import json
import math

import numpy as np
import pytest
from scipy import stats

from fppcm.bp import (
    DiscretePareto, Empirical, PointMass, SizeBiasedPareto, check_invariants, davies_trend,
    explosion_evidence, generations_to_degree, positive_stable, simulate, simulate_many,
)
from fppcm.degrees import ParetoLimit
from fppcm.weights import Constant, DoubleExp, Exponential, Uniform


@pytest.mark.parametrize("a", [0.3, 0.5, 0.7])
def test_stable_laplace_transform(a):
    rng = np.random.default_rng(1)
    s = positive_stable(rng, a, 200000)
    assert np.all(s > 0)
    for lam in (0.5, 1.0, 2.0):
        x = np.exp(-lam * s)
        assert abs(x.mean() - math.exp(-lam ** a)) <= 5 * x.std() / math.sqrt(x.size)


def test_stable_half_has_closed_form():
    # a = 1/2: S is Levy with scale 1/2, i.e. S = 1 / (4 G) with G ~ Gamma(1/2, 1)
    rng = np.random.default_rng(2)
    s = positive_stable(rng, 0.5, 50000)
    assert stats.kstest(s, stats.levy(scale=0.5).cdf).pvalue > 0.001


def test_size_biased_sampler_matches_law():
    lim = ParetoLimit(2.5)
    law = SizeBiasedPareto(2.5)
    b = law.sample(np.random.default_rng(3), 200000)
    assert b.min() >= 1
    ks = np.arange(1, 30)
    obs = np.array([np.sum(b == k) for k in ks] + [np.sum(b >= 30)])
    exp = np.concatenate([lim.pmf_B(ks), lim.sf_B(30)]) * b.size
    assert stats.chisquare(obs, exp).pvalue > 0.001
    # deep tail, both below and beyond the table
    for m in (10**4, 10**7):
        p = float(lim.sf_B(m)[0])
        assert abs(np.mean(b >= m) - p) <= 5 * math.sqrt(p / b.size)


def test_aggregate_sum_matches_explicit():
    # log-sum of N i.i.d. offspring: stable approximation against direct sums
    law = SizeBiasedPareto(2.5)
    rng = np.random.default_rng(4)
    N = 10**4
    direct = [math.log(law.sample(rng, N).sum()) for _ in range(400)]
    approx = [law.log_sum(rng, math.log(N)) for _ in range(400)]
    assert stats.ks_2samp(direct, approx).pvalue > 0.001


def test_log_max_matches_explicit():
    law = SizeBiasedPareto(2.5)
    rng = np.random.default_rng(5)
    N = 10**4
    direct = [math.log(law.sample(rng, N).max()) for _ in range(400)]
    approx = [law.log_max(rng, math.log(N)) for _ in range(400)]
    assert stats.ks_2samp(direct, approx).pvalue > 0.001


def test_unary_tree():
    r = simulate(PointMass(1), PointMass(1), Exponential(1), 10, seed=1)
    assert r.generation_sizes == [1.0] * 11
    assert r.front == pytest.approx(np.concatenate([[0], np.cumsum(r.gen_min)]))
    assert check_invariants(r) == []


def test_binary_tree_normalisation():
    r = simulate(PointMass(2), PointMass(2), Constant(1), 10, seed=1, tau=2.5)
    k = np.arange(11)
    assert r.y_norm == pytest.approx(0.5 ** k * k * math.log(2))
    assert r.front == list(map(float, k))


def test_binary_tree_aggregated():
    # node cap forces aggregation; sizes stay exact for a point mass
    r = simulate(PointMass(2), PointMass(2), Constant(1), 30, node_cap=1000, seed=1)
    assert r.explicit_generations == 9
    assert r.log_sizes == pytest.approx(np.arange(31) * math.log(2))
    assert r.front == pytest.approx(np.arange(31))
    assert all(r.front_exact)


def test_extinction_status():
    r = simulate(PointMass(1), PointMass(0), Exponential(1), 5, seed=0)
    assert r.status.startswith("extinct")


def test_empirical_law():
    law = Empirical({1: 0.5, 3: 0.5})
    x = law.sample(np.random.default_rng(0), 10000)
    assert set(np.unique(x)) == {1.0, 3.0}
    assert abs(x.mean() - 2) < 0.05
    with pytest.raises(ValueError):
        Empirical({1: 0.5})


def test_invariants_pareto_runs():
    runs = simulate_many(50, DiscretePareto(2.5), SizeBiasedPareto(2.5), Exponential(1), 8,
                         seed=7, node_cap=10**6)
    for r in runs:
        assert check_invariants(r) == []
        assert all(np.diff(r.log_sizes) >= 0)
    d = davies_trend(runs)
    # increments of the normalised log size shrink geometrically, which is how convergence shows
    assert all(b < a for a, b in zip(d.increment_std[3:], d.increment_std[4:]))


def test_run_json():
    r = simulate(DiscretePareto(2.5), SizeBiasedPareto(2.5), Uniform(0, 1), 6, seed=3, node_cap=10**5)
    d = json.loads(json.dumps(r.to_json()))
    assert set(d) >= {"generation_sizes", "y_norm", "front"}
    assert len(d["front"]) == 7


def test_evidence_constant():
    runs = simulate_many(20, DiscretePareto(2.5), SizeBiasedPareto(2.5), Constant(1), 8, seed=1,
                         node_cap=10**5)
    for r in runs:
        assert r.front == list(map(float, range(9)))
    ev = explosion_evidence(runs, Constant(1))
    assert ev.status == "non-explosive" and ev.agrees


def test_evidence_exponential():
    runs = simulate_many(30, DiscretePareto(2.5), SizeBiasedPareto(2.5), Exponential(1), 8, seed=2,
                         node_cap=10**5)
    ev = explosion_evidence(runs, Exponential(1))
    assert ev.status == "explosive" and ev.agrees
    inc = np.array(ev.median_increments)
    assert inc[-1] < 0.01 * inc[0]


def test_evidence_double_exp_tracks_terms():
    w = DoubleExp(2.0)
    runs = simulate_many(30, DiscretePareto(2.5), SizeBiasedPareto(2.5), w, 8, seed=3, node_cap=10**5)
    ev = explosion_evidence(runs, w)
    assert all(0.1 <= r <= 10 for r in ev.term_ratios[2:8])
    assert ev.status == "non-explosive" and ev.agrees


def test_evidence_needs_runs():
    runs = simulate_many(5, PointMass(2), PointMass(2), Constant(1), 6)
    with pytest.raises(ValueError):
        explosion_evidence(runs, Constant(1))


def test_generations_to_degree():
    runs = simulate_many(100, DiscretePareto(2.5), SizeBiasedPareto(2.5), Exponential(1), 6,
                         seed=4, node_cap=10**5)
    rep = generations_to_degree(runs, 1000, 2, 2.5)
    assert rep.k_star == 4 and rep.ok
    assert generations_to_degree(runs, 10**4, 2, 2.5).ok
    with pytest.raises(ValueError):
        generations_to_degree(runs, 1000, 1, 2.5)
    flat = simulate_many(100, PointMass(1), PointMass(1), Exponential(1), 6, seed=5)
    bad = generations_to_degree(flat, 1000, 2, 2.5)
    assert bad.failure_fraction == 1.0 and bad.note
