"""Monte Carlo experiments, aggregation and output."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bp
from .config import DEGREES, ERASE, GRAPH, PAIRS, PERCOLATE, ConfigError, ExperimentConfig, stage_seed
from .degrees import check_tail_bounds, synthesize
from .fpp import climb_to_degree, graph_distance, greedy_layer_path, hub_connect, weighted_distance
from .graph import build, erase
from .percolation import (
    edge_percolate, equality_test, kn_from_ktilde, layer_recursion, post_percolation_tail_test,
)
from .weights import characteristic_sum, classify_explosive

COLUMNS = ("n", "replica", "u", "v", "d_G", "d_L", "d_H", "ratio", "constructed_len",
           "constructed_hops")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class ExperimentRefused(RuntimeError):
    pass


@dataclass
class ExperimentResult:
    experiment: str
    config: dict
    rows: list = field(default_factory=list)          # dicts keyed by COLUMNS
    aggregates: dict = field(default_factory=dict)    # n -> {quantile: value}
    report: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)        # name -> bool

    @property
    def ok(self):
        return all(self.checks.values())


def ratio_quantiles(rows):
    """Per-n quantiles (numpy's default linear interpolation, i.e. type 7) of the ratio."""
    by_n = {}
    for r in rows:
        if r["ratio"] is not None and math.isfinite(r["ratio"]):
            by_n.setdefault(r["n"], []).append(r["ratio"])
    return {n: dict(zip(map(str, QUANTILES), np.quantile(v, QUANTILES).tolist()))
            for n, v in sorted(by_n.items())}


def sample_pairs(n, k, seed):
    """k uniform pairs with replacement; u = v is redrawn."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < k:
        u, v = rng.integers(1, n + 1, size=2).tolist()
        if u != v:
            out.append((u, v))
    return out


def _row(n, r, u, v, dg=None, dl=None, dh=None, ratio=None, clen=None, chops=None):
    return dict(zip(COLUMNS, (n, r, u, v, dg, dl, dh, ratio, clen, chops)))


def _graph(cfg, n, r):
    ds = synthesize(n, cfg.tail_params, stage_seed(cfg.seed, n, r, DEGREES))
    return build(ds, cfg.weight, stage_seed(cfg.seed, n, r, GRAPH))


def _exact(g, u, v):
    res = weighted_distance(g, u, v, path=False)
    if not res.connected:
        return None
    return graph_distance(g, u, v), res.weighted, res.hopcount


# --- per-(n, replica) tasks ------------------------------------------------

def _ratio_task(cfg: ExperimentConfig, n, r):
    g = _graph(cfg, n, r)
    pairs = sample_pairs(n, cfg.pairs_per_graph, stage_seed(cfg.seed, n, r, PAIRS))
    two_char = 2 * characteristic_sum(cfg.weight, n, cfg.tau)
    multi = [_exact(g, u, v) for u, v in pairs]
    recs = []
    if cfg.mode == "erased":
        g._csr = None
        e = erase(g, stage_seed(cfg.seed, n, r, ERASE))
        del g
        target = [_exact(e, u, v) for u, v in pairs]
    else:
        target = multi
    for (u, v), m, t in zip(pairs, multi, target):
        if t is None:
            recs.append({"row": None, "monotone": True})
            continue
        dg, dl, dh = t
        ratio = dl / two_char if two_char > 0 else math.inf
        mono = m is None or dl >= m[1] * (1 - 1e-12)
        recs.append({"row": _row(n, r, u, v, dg, dl, dh, ratio), "monotone": mono})
    return recs


def _construct_side(pg, g, q, plan, kt, deg):
    """Climb from q to degree >= kt, then ascend the layers; returns (walk, greedy) or a status."""
    c = climb_to_degree(g, q, kt, degrees=deg)
    if not c.ok:
        return None, "climb"
    x = c.path[-1]
    if pg.dr[x - 1] < plan.thresholds[0]:
        return None, "kept degree below the first layer"
    gr = greedy_layer_path(pg, x, plan.thresholds)
    if not gr.ok:
        return None, "greedy " + gr.status
    return (c, gr), "ok"


def _upper_task(cfg: ExperimentConfig, n, r, keep_paths=False):
    g = _graph(cfg, n, r)
    if cfg.mode == "erased":
        g = erase(g, stage_seed(cfg.seed, n, r, ERASE))
    pairs = sample_pairs(n, cfg.pairs_per_graph, stage_seed(cfg.seed, n, r, PAIRS))
    two_char = 2 * characteristic_sum(cfg.weight, n, cfg.tau)
    pg = edge_percolate(g, cfg.percolation, cfg.weight, seed=stage_seed(cfg.seed, n, r, PERCOLATE))
    deg = g.degree_array()
    kt = cfg.ktilde_for(n)
    alpha = cfg.tail_params.alpha
    plan, plan_err = None, ""
    try:
        kn = kn_from_ktilde(cfg.percolation, kt)
        plan = layer_recursion(kn, cfg.tau, cfg.gamma, cfg.layer_D, n, alpha)
    except ValueError as exc:
        plan_err = f"layer plan: {exc}"
    recs = []
    for u, v in pairs:
        ex = _exact(g, u, v)
        if ex is None:
            recs.append({"row": None, "status": "disconnected"})
            continue
        dg, dl, dh = ex
        rec = {"status": plan_err or "ok", "dominates": True}
        if plan is not None:
            sides = []
            for q in (u, v):
                side, st = _construct_side(pg, g, q, plan, kt, deg)
                if side is None:
                    rec["status"] = st
                    break
                sides.append(side)
            if len(sides) == 2:
                (cu, gu), (cv, gv) = sides
                h = hub_connect(pg, gu.path[-1], gv.path[-1], alpha, cfg.delta)
                if not h.ok:
                    rec["status"] = "hub " + h.status
                else:
                    walk = (cu.path + gu.path[1:] + h.path[1:] + gv.path[::-1][1:]
                            + cv.path[::-1][1:])
                    wts = cu.weights + gu.weights + h.weights + gv.weights[::-1] + cv.weights[::-1]
                    rec["length"] = float(sum(wts))
                    rec["hops"] = len(wts)
                    lower = plan.lower_capped()
                    rec["dominates"] = all(p >= lower[i] * (1 - 1e-12)
                                           for gr in (gu, gv) for i, p in enumerate(gr.profile))
                    if keep_paths:
                        rec["walk"] = walk
        clen, chops = rec.get("length"), rec.get("hops")
        rec["row"] = _row(n, r, u, v, dg, dl, dh, dl / two_char if two_char > 0 else math.inf,
                          clen, chops)
        if keep_paths and "walk" in rec:
            rec["multiplicity"] = _multiplicities(g, rec["walk"])
            rec["bound"] = [6 * deg[x] * deg[y] / (2 * g.m)
                            for x, y in zip(rec["walk"][:-1], rec["walk"][1:])]
        recs.append(rec)
    return recs


def _multiplicities(g, walk):
    indptr, nbr, _, _ = g.csr()
    return [int(np.count_nonzero(nbr[indptr[x]:indptr[x + 1]] == y))
            for x, y in zip(walk[:-1], walk[1:])]


def _multiedge_task(cfg, n, r):
    return _upper_task(cfg, n, r, keep_paths=True)


def _tail_task(cfg, n, r):
    ds = synthesize(n, cfg.tail_params, stage_seed(cfg.seed, n, r, DEGREES))
    env = check_tail_bounds(ds, cfg.tail_params)
    post = post_percolation_tail_test(ds, cfg.percolation, 1, seed=[cfg.seed, n, r],
                                      params=cfg.tail_params)
    return [{"row": None, "degree_violations": env.count(), "hill": post.hill[0],
             "upper_ok": post.upper_ok[0], "envelope_violations": post.envelope_violations[0]}]


_TASKS = {"ratio": _ratio_task, "upper-path": _upper_task, "multi-edge": _multiedge_task,
          "tail-check": _tail_task}


def _call(args):
    name, cfg, n, r = args
    return _TASKS[name](cfg, n, r)


def _run_tasks(name, cfg, workers):
    jobs = [(name, cfg, n, r) for n in cfg.n_list for r in range(cfg.replicas)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_call, jobs))
    else:
        out = [_call(j) for j in jobs]
    return [rec for recs in out for rec in recs]


# --- experiments -----------------------------------------------------------

def _require_non_explosive(cfg, force):
    v = classify_explosive(cfg.weight, tau=cfg.tau)
    if v.status != "non-explosive" and not force:
        raise ExperimentRefused(
            f"weight law {cfg.weight.to_string()} is classified {v.status}; the distance "
            "asymptotics assume non-explosive weights (use --force to run anyway)")
    return v.status


def run_ratio_experiment(cfg, workers=1, force=False) -> ExperimentResult:
    verdict = _require_non_explosive(cfg, force)
    recs = _run_tasks("ratio", cfg, workers)
    rows = [r["row"] for r in recs if r["row"] is not None]
    agg = ratio_quantiles(rows)
    res = ExperimentResult("ratio", cfg.to_dict(), rows, agg)
    res.report = {
        "weight_verdict": verdict,
        "disconnected_pairs": sum(r["row"] is None for r in recs),
        "two_characteristic_sum": {n: 2 * characteristic_sum(cfg.weight, n, cfg.tau)
                                   for n in cfg.n_list},
        "iqr": {n: q["0.75"] - q["0.25"] for n, q in agg.items()},
        "median": {n: q["0.5"] for n, q in agg.items()},
    }
    res.checks["median_window"] = all(0.5 <= m <= 1.5 for m in res.report["median"].values())
    ns = sorted(agg)
    if len(ns) >= 2:
        res.checks["iqr_shrinks"] = res.report["iqr"][ns[-1]] < res.report["iqr"][ns[0]]
    if cfg.mode == "erased":
        bad = sum(not r["monotone"] for r in recs)
        res.report["erased_below_multigraph"] = bad
        res.checks["erased_monotone"] = bad == 0
    return res


def _hop_bound(cfg, n):
    return (1 + cfg.epsilon) * 2 * math.log(math.log(n)) / abs(math.log(cfg.tau - 2)) + 5


def _upper_summary(cfg, recs):
    ok = [r for r in recs if r.get("length") is not None]
    tried = [r for r in recs if r["row"] is not None]
    length_bad = sum(r["length"] < r["row"]["d_L"] * (1 - 1e-12) - 1e-12 for r in ok)
    hop_ok = sum(r["hops"] <= _hop_bound(cfg, r["row"]["n"]) for r in ok)
    len_ok = sum(r["length"] <= (1 + cfg.epsilon) * 2
                 * characteristic_sum(cfg.weight, r["row"]["n"], cfg.tau) for r in ok)
    rep = {
        "pairs": len(tried),
        "successes": len(ok),
        "success_fraction": len(ok) / len(tried) if tried else 0.0,
        "failures": dict(Counter(r["status"] for r in recs if r.get("length") is None)),
        "profile_not_dominating": sum(not r["dominates"] for r in ok),
        "length_below_exact": length_bad,
        "hop_bound_fraction": hop_ok / len(ok) if ok else 0.0,
        "length_bound_fraction": len_ok / len(ok) if ok else 0.0,
        "ktilde": {n: cfg.ktilde_for(n) for n in cfg.n_list},
    }
    checks = {
        "success_fraction": rep["success_fraction"] >= 0.8,
        "profile_dominates": rep["profile_not_dominating"] == 0,
        "length_at_least_exact": length_bad == 0,
        "hop_bound": rep["hop_bound_fraction"] >= 0.8,
    }
    return rep, checks


def run_upper_path_experiment(cfg, workers=1, force=False) -> ExperimentResult:
    _require_non_explosive(cfg, force)
    recs = _run_tasks("upper-path", cfg, workers)
    rows = [r["row"] for r in recs if r["row"] is not None]
    res = ExperimentResult("upper-path", cfg.to_dict(), rows, ratio_quantiles(rows))
    res.report, res.checks = _upper_summary(cfg, recs)
    return res


def multiedge_rate(multiplicities, bounds):
    """Empirical P(>= 2 edges | >= 1 edge) over consecutive path vertices, and its bound."""
    m = np.asarray(multiplicities)
    linked = m >= 1
    if not linked.any():
        return 0.0, 0.05
    rate = float(np.mean(m[linked] >= 2))
    return rate, max(0.05, float(np.mean(np.asarray(bounds)[linked])))


def run_multiedge_experiment(cfg, workers=1, force=False) -> ExperimentResult:
    if cfg.mode != "multigraph":
        raise ConfigError("the multi-edge experiment needs mode = multigraph")
    _require_non_explosive(cfg, force)
    recs = _run_tasks("multi-edge", cfg, workers)
    rows = [r["row"] for r in recs if r["row"] is not None]
    mult = [x for r in recs for x in r.get("multiplicity", [])]
    bnd = [x for r in recs for x in r.get("bound", [])]
    rate, bound = multiedge_rate(mult, bnd)
    res = ExperimentResult("multi-edge", cfg.to_dict(), rows, ratio_quantiles(rows))
    res.report = {"consecutive_pairs": len(mult), "rate": rate, "bound": bound,
                  "paths": sum("multiplicity" in r for r in recs)}
    res.checks["multi_edge_rate"] = rate <= bound
    return res


def run_percolation_eq_experiment(cfg, workers=1, force=False) -> ExperimentResult:
    n = cfg.n_list[0]
    if n > 100:
        raise ConfigError("percolation-eq needs n <= 100")
    ds = synthesize(n, cfg.tail_params, stage_seed(cfg.seed, n, 0, DEGREES))
    good = equality_test(ds, cfg.percolation, cfg.weight, cfg.eq_replicas, seed=cfg.seed)
    bad = equality_test(ds, cfg.percolation, cfg.weight, cfg.eq_replicas, seed=cfg.seed,
                        broken=True)
    res = ExperimentResult("percolation-eq", cfg.to_dict())
    res.report = {"n": n, "replicas": cfg.eq_replicas, "p_values": good.p_values,
                  "broken_p_values": bad.p_values, "bins": good.bins}
    res.checks["forms_agree"] = (good.p_values["kept_edges"] > 0.01
                                 and good.p_values["sorted_degrees"] > 0.01)
    res.checks["broken_rejected"] = min(bad.p_values["kept_edges"],
                                        bad.p_values["sorted_degrees"]) < 1e-3
    return res


def run_bp_experiment(cfg, workers=1, force=False) -> ExperimentResult:
    root, off = bp.DiscretePareto(cfg.tau), bp.SizeBiasedPareto(cfg.tau)
    batches, invariant_bad, davies = [], 0, []
    for b in range(cfg.bp_batches):
        runs = bp.simulate_many(cfg.bp_runs, root, off, cfg.weight, cfg.bp_kmax,
                                seed=[cfg.seed, b], node_cap=cfg.node_cap, beam=cfg.beam)
        invariant_bad += sum(bool(bp.check_invariants(r)) for r in runs)
        davies.append(bp.davies_trend(runs))
        batches.append(runs)
    first = batches[0]
    ev = bp.explosion_evidence(first, cfg.weight, tau=cfg.tau)
    gens = {k: bp.generations_to_degree(first, k, 2, cfg.tau) for k in (10**3, 10**4)
            if math.ceil(2 * math.log(math.log(k))) < cfg.bp_kmax}
    frac = float(np.mean([d.non_increasing for d in davies]))
    res = ExperimentResult("bp-explosion", cfg.to_dict())
    res.report = {
        "runs_per_batch": cfg.bp_runs, "batches": cfg.bp_batches,
        "invariant_violations": invariant_bad,
        "davies_fraction": frac,
        "y_std": [d.std for d in davies],
        "y_increment_std": [d.increment_std for d in davies],
        "evidence": ev.status, "classifier": ev.classifier_status,
        "decay_exponent": ev.decay_exponent, "median_front": ev.median_front,
        "generations_failure": {k: g.failure_fraction for k, g in gens.items()},
    }
    res.checks["invariants"] = invariant_bad == 0
    res.checks["davies_trend"] = frac >= 0.8
    res.checks["evidence_consistent"] = ev.agrees or ev.status == "inconclusive"
    res.checks["generations_to_degree"] = all(g.ok for g in gens.values())
    return res


def run_tail_check(cfg, workers=1, force=False) -> ExperimentResult:
    recs = _run_tasks("tail-check", cfg, workers)
    hill = [r["hill"] for r in recs]
    within = [abs(h - (cfg.tau - 1)) <= 0.4 for h in hill]
    res = ExperimentResult("tail-check", cfg.to_dict())
    res.report = {"hill": hill, "hill_within": sum(within), "replicas": len(recs),
                  "degree_envelope_violations": sum(r["degree_violations"] for r in recs),
                  "post_envelope_violations": sum(r["envelope_violations"] for r in recs)}
    res.checks["hill_within"] = sum(within) >= 0.9 * len(within)
    res.checks["percolated_tail_below"] = all(r["upper_ok"] for r in recs)
    res.checks["degree_envelope"] = res.report["degree_envelope_violations"] == 0
    return res


EXPERIMENT_RUNNERS = {
    "ratio": run_ratio_experiment,
    "upper-path": run_upper_path_experiment,
    "multi-edge": run_multiedge_experiment,
    "percolation-eq": run_percolation_eq_experiment,
    "bp-explosion": run_bp_experiment,
    "tail-check": run_tail_check,
}


def run(cfg: ExperimentConfig, workers=1, force=False) -> ExperimentResult:
    return EXPERIMENT_RUNNERS[cfg.experiment](cfg, workers=workers, force=force)


# --- output ----------------------------------------------------------------

def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "nan")
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def emit(result: ExperimentResult, fmt, path):
    """Write the rows as CSV, or rows plus aggregates and report as JSON."""
    path = Path(path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(COLUMNS)
                for r in result.rows:
                    w.writerow([_cell(r[c]) for c in COLUMNS])
        elif fmt == "json":
            doc = {"experiment": result.experiment, "config": result.config,
                   "columns": list(COLUMNS),
                   "rows": [[r[c] for c in COLUMNS] for r in result.rows],
                   "aggregates": result.aggregates, "report": result.report,
                   "checks": result.checks}
            with open(path, "w") as fh:
                json.dump(_jsonable(doc), fh, indent=1, sort_keys=True)
                fh.write("\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {fmt} output to {path}: {exc}") from exc


def read_csv_rows(path):
    """Parse an emitted CSV back into row dicts."""
    ints = {"n", "replica", "u", "v", "d_G", "d_H", "constructed_hops"}
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for c in COLUMNS:
                s = rec[c]
                row[c] = None if s == "" else int(s) if c in ints else float(s)
            out.append(row)
    return out
