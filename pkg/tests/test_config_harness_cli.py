import json
import math
from collections import Counter

import numpy as np
import pytest

from fppcm.cli import main
from fppcm.config import ConfigError, parse_config, stage_seed
from fppcm.harness import (
    COLUMNS, ExperimentRefused, ExperimentResult, emit, multiedge_rate, ratio_quantiles,
    read_csv_rows, run, sample_pairs,
)
from fppcm.weights import Constant

SMALL_RATIO = """
experiment = ratio
n_list = 2000, 4000
tau = 2.5
weight = constant(1)
pairs_per_graph = 20
replicas = 2
seed = 11
"""
EXP_RATIO = SMALL_RATIO.replace("constant(1)", "exponential(1)")


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_values_and_comments():
    cfg = parse_config(SMALL_RATIO + "mode = erased  # simple graph\nktilde = auto\n")
    assert cfg.n_list == (2000, 4000)
    assert isinstance(cfg.weight, Constant)
    assert cfg.mode == "erased" and cfg.ktilde is None
    assert cfg.ktilde_for(10**6) == math.ceil(math.log(10**6) ** 0.8)
    assert parse_config("n_list = 1e5\nweight = exponential(2)\n").n_list == (10**5,)


@pytest.mark.parametrize("text", [
    "colour = blue\n",
    "n_list = 10\n",
    "n_list = 100.5\n",
    "mode = simple\n",
    "experiment = nothing\n",
    "weight = constant(0)\n",
    "tau = 3.5\n",
    "pairs_per_graph = 0\n",
    "this is not a key value line\n",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_stage_seeds_independent():
    a = np.random.default_rng(stage_seed(1, 100, 0, 0)).random()
    b = np.random.default_rng(stage_seed(1, 100, 0, 1)).random()
    c = np.random.default_rng(stage_seed(1, 100, 1, 0)).random()
    assert len({a, b, c}) == 3
    assert a == np.random.default_rng(stage_seed(1, 100, 0, 0)).random()


def test_sample_pairs():
    p = sample_pairs(50, 200, 3)
    assert len(p) == 200 and all(1 <= u <= 50 and 1 <= v <= 50 and u != v for u, v in p)
    assert p == sample_pairs(50, 200, 3)


def test_empty_result_csv_header(tmp_path):
    res = ExperimentResult("ratio", {})
    emit(res, "csv", tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(COLUMNS) + "\n"
    assert read_csv_rows(tmp_path / "e.csv") == []


def test_single_row_roundtrip(tmp_path):
    row = dict(zip(COLUMNS, (100, 0, 3, 7, 2, 2.5, 3, 0.75, None, None)))
    res = ExperimentResult("ratio", {}, [row])
    emit(res, "csv", tmp_path / "r.csv")
    assert read_csv_rows(tmp_path / "r.csv") == [row]
    emit(res, "json", tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["columns"] == list(COLUMNS) and doc["rows"][0][5] == 2.5


def test_emit_errors(tmp_path):
    res = ExperimentResult("ratio", {})
    with pytest.raises(OSError):
        emit(res, "csv", tmp_path / "missing" / "x.csv")
    with pytest.raises(ValueError):
        emit(res, "xml", tmp_path / "x.xml")


def test_ratio_run_and_aggregates():
    res = run(parse_config(SMALL_RATIO))
    assert len(res.rows) == 2 * 2 * 20 - res.report["disconnected_pairs"]
    # aggregates are recomputable from the rows
    for n, q in res.aggregates.items():
        vals = [r["ratio"] for r in res.rows if r["n"] == n]
        assert list(q.values()) == pytest.approx(np.quantile(vals, [0.05, 0.25, 0.5, 0.75, 0.95]))
    assert res.aggregates == ratio_quantiles(res.rows)
    for r in res.rows:
        assert r["d_G"] <= r["d_H"] and r["d_L"] == r["d_H"]  # constant(1) weights


def test_erased_ratio_monotone():
    res = run(parse_config(EXP_RATIO + "mode = erased\n"), force=True)
    assert res.checks["erased_monotone"]


def test_refuses_explosive_weights():
    cfg = parse_config(EXP_RATIO)
    with pytest.raises(ExperimentRefused):
        run(cfg)
    assert run(cfg, force=True).rows


def test_determinism_and_workers(tmp_path):
    cfg = write(tmp_path, SMALL_RATIO)
    outs = []
    for i, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"o{i}"
        assert main(["run", "--experiment", "ratio", "--config", str(cfg), "--out", str(out),
                     "--workers", workers]) in (0, 2)
        outs.append((out / "ratio.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    other = tmp_path / "o3"
    main(["run", "--experiment", "ratio", "--config", str(cfg), "--out", str(other), "--seed", "12"])
    assert (other / "ratio.csv").read_bytes() != outs[0]


def test_cli_exit_codes(tmp_path, capsys):
    cfg = write(tmp_path, EXP_RATIO)
    assert main(["run", "--experiment", "ratio", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "explosive" in capsys.readouterr().err
    bad = write(tmp_path, "colour = red\n", "bad.cfg")
    assert main(["run", "--experiment", "ratio", "--config", str(bad)]) == 1
    assert main(["run", "--experiment", "ratio", "--config", str(tmp_path / "none.cfg")]) == 1
    code = main(["run", "--experiment", "ratio", "--config", str(cfg), "--out", str(tmp_path),
                 "--force"])
    assert code in (0, 2)
    assert ("PASS" in capsys.readouterr().out) or code == 2


def test_multiedge_rate_between_degree_two_vertices():
    # every linked pair of distinct degree-2 vertices in n = 10^4 graphs
    from fppcm.degrees import TailParams, synthesize
    from fppcm.graph import build
    mult = []
    for s in range(5):
        ds = synthesize(10**4, TailParams(2.5), s)
        g = build(ds, Constant(1), 50 + s)
        d = g.degree_array()
        a, b = g.u, g.v
        sel = (a != b) & (d[a] == 2) & (d[b] == 2)
        pairs = Counter(zip(np.minimum(a, b)[sel].tolist(), np.maximum(a, b)[sel].tolist()))
        mult += list(pairs.values())
    assert len(mult) > 500
    rate, bound = multiedge_rate(mult, [6 * 2 * 2 / 2e4] * len(mult))
    assert rate <= 0.01 and bound == 0.05


def test_multiedge_rate_negative_control():
    # four degree-3 vertices: exact P(>= 2 edges | >= 1 edge) between 1 and 2
    from fppcm.graph import build
    from fppcm.harness import _multiplicities
    from oracle import perfect_matchings
    owner = [v for v in (1, 2, 3, 4) for _ in range(3)]
    linked = multi = 0
    for m in perfect_matchings(list(range(12))):
        k = sum({owner[x], owner[y]} == {1, 2} for x, y in m)
        linked += k >= 1
        multi += k >= 2
    exact = multi / linked
    mult = [_multiplicities(build([3, 3, 3, 3], Constant(1), s), [1, 2])[0] for s in range(20000)]
    rate, bound = multiedge_rate(mult, [6 * 9 / 12] * len(mult))
    n_linked = sum(x >= 1 for x in mult)
    assert abs(rate - exact) <= 4 * math.sqrt(exact * (1 - exact) / n_linked)
    assert rate > 0.2


def test_multiedge_rate_zero_after_erasure():
    from fppcm.graph import build, erase
    from fppcm.harness import _multiplicities
    mult = []
    for s in range(50):
        e = erase(build([3, 3, 3, 3], Constant(1), s), s)
        mult += _multiplicities(e, [1, 2, 3, 4])
    assert multiedge_rate(mult, [1] * len(mult))[0] == 0


def test_upper_path_small():
    cfg = parse_config("""
experiment = upper-path
n_list = 1e5
weight = constant(1)
ktilde = 1000
delta = 0.05
pairs_per_graph = 10
seed = 3
""")
    res = run(cfg)
    assert res.checks["profile_dominates"] and res.checks["length_at_least_exact"]
    assert res.report["pairs"] >= 1


def test_bp_and_tail_small():
    cfg = parse_config("experiment = bp-explosion\nweight = exponential(1)\nbp_runs = 20\n"
                       "bp_batches = 2\nbp_kmax = 6\nnode_cap = 1e4\n")
    res = run(cfg)
    assert res.checks["invariants"] and res.checks["evidence_consistent"]
    tail = run(parse_config("experiment = tail-check\nn_list = 2e4\nreplicas = 3\n"))
    assert tail.checks["percolated_tail_below"] and tail.checks["degree_envelope"]
