"""Age-dependent branching process with heavy-tailed offspring.

Generations are simulated individual by individual until their size passes
``node_cap``.  After that the generation sizes continue in aggregate (sums of
many i.i.d. offspring counts are replaced by their stable limit) and the
first-passage front is followed on a beam of the earliest individuals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .degrees import ParetoLimit, pareto_degrees
from .weights import classify_explosive


def _open_uniform(rng, size=None):
    k = rng.integers(0, 2**53, size=size)
    return (k + 0.5) / 2.0**53


def positive_stable(rng, a, size=None):
    """Positive a-stable variates with E exp(-l S) = exp(-l^a), 0 < a < 1 (Kanter)."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0,1)")
    u = np.pi * _open_uniform(rng, size)
    e = rng.exponential(size=size)
    return (np.sin(a * u) / np.sin(u) ** (1 / a)) * (np.sin((1 - a) * u) / e) ** ((1 - a) / a)


# --- offspring laws -------------------------------------------------------

class OffspringLaw:
    """Counts are returned as floats so that huge heavy-tailed draws do not overflow."""
    name = "law"
    tail = None      # (a, c) with P(X > x) ~ c x^-a, or None for a light tail
    mean = math.inf

    def sample(self, rng, size):
        raise NotImplementedError

    def log_sum(self, rng, logN):
        """log of a sum of exp(logN) i.i.d. copies."""
        if self.tail is not None and self.tail[0] < 1:
            a, c = self.tail
            s = positive_stable(rng, a)
            return logN / a + math.log(c * gamma_fn(1 - a)) / a + math.log(s)
        return logN + math.log(self.mean)

    def log_max(self, rng, logN):
        """log of the maximum of exp(logN) i.i.d. copies."""
        if self.tail is not None:
            a, c = self.tail
            return (math.log(c) + logN - math.log(rng.exponential())) / a
        return math.log(self.support_max)


class DiscretePareto(OffspringLaw):
    """P(D >= x) = (x/2)^-(tau-1) for integers x >= 2 (the degree law, no cap)."""
    name = "discrete_pareto"

    def __init__(self, tau):
        self.tau = tau
        a = tau - 1.0
        self.tail = (a, 2.0 ** a)
        self.mean = ParetoLimit(tau).mean_D

    def sample(self, rng, size):
        return pareto_degrees(rng, size, self.tau).astype(float)


class SizeBiasedPareto(OffspringLaw):
    """Size-biased degree law minus one, sampled by inverse CDF.

    The survival function is tabulated up to ``table`` and inverted through
    its power-law asymptote beyond.
    """
    name = "size_biased_pareto"

    def __init__(self, tau, table=2**20):
        self.tau = tau
        lim = ParetoLimit(tau)
        self.tail = (tau - 2.0, lim.tail_constant_B)
        self._neg_sf = -lim.sf_B(np.arange(1, table + 1))
        self._table = table

    def sample(self, rng, size):
        u = _open_uniform(rng, size)
        # B = max{m >= 1 : P(B >= m) >= u}
        b = np.searchsorted(self._neg_sf, -u, side="right").astype(float)
        far = b >= self._table
        if far.any():
            a, c = self.tail
            b[far] = np.maximum(np.floor((c / u[far]) ** (1 / a)), self._table)
        return b


class PointMass(OffspringLaw):
    name = "point_mass"

    def __init__(self, k):
        if k < 0 or int(k) != k:
            raise ValueError("k must be a nonnegative integer")
        self.k = int(k)
        self.mean = float(k)
        self.support_max = self.k

    def sample(self, rng, size):
        return np.full(size, float(self.k))

    def log_sum(self, rng, logN):
        return logN + math.log(self.k) if self.k > 0 else -math.inf


class Empirical(OffspringLaw):
    """Finite law given as {value: probability}."""
    name = "empirical"

    def __init__(self, probabilities):
        ks = np.array(sorted(probabilities), dtype=float)
        ps = np.array([probabilities[k] for k in sorted(probabilities)], dtype=float)
        if np.any(ps < 0) or not math.isclose(ps.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("probabilities must be nonnegative and sum to 1")
        self.values, self.cdf = ks, np.cumsum(ps / ps.sum())
        self.mean = float(ks @ ps)
        self.support_max = float(ks[ps > 0].max())

    def sample(self, rng, size):
        idx = np.searchsorted(self.cdf, _open_uniform(rng, size))
        return self.values[np.minimum(idx, self.values.size - 1)]


# --- simulation -----------------------------------------------------------

@dataclass
class BPRun:
    log_sizes: list                # log generation size, k = 0..k_max
    y_norm: list                   # (tau-2)^k times the log generation size
    gen_min: list                  # min weight on edges into generation k+1
    front: list                    # min arrival time at generation k
    front_exact: list              # False where the beam may have missed the minimum
    log_max_offspring: list        # log of the largest family in generation k
    explicit_generations: int
    status: str = "ok"
    child_counts: list = field(default_factory=list, repr=False)

    @property
    def generation_sizes(self):
        return [math.exp(x) if x < 700 else math.inf for x in self.log_sizes]

    def to_json(self):
        sizes = [s if math.isfinite(s) else None for s in self.generation_sizes]
        d = {"generation_sizes": sizes, "log_sizes": self.log_sizes, "y_norm": self.y_norm,
             "front": self.front, "gen_min": self.gen_min, "status": self.status}
        return json.loads(json.dumps(d))


def _log_u_small(log_s):
    """log(1 - exp(-s)) given log s, accurate for tiny s."""
    log_s = np.asarray(log_s, dtype=float)
    s = np.exp(np.minimum(log_s, 700))
    with np.errstate(divide="ignore"):
        return np.where(log_s < -20, log_s, np.log(-np.expm1(-s)))


def _smallest_children(rng, counts, m, w):
    """For each parent, the m[j] smallest of counts[j] i.i.d. weights (sorted)."""
    total = int(m.sum())
    grp = np.repeat(np.arange(m.size), m)
    starts = np.cumsum(m) - m
    rank = np.arange(total) - starts[grp]           # 0-based order statistic index
    spacing = rng.exponential(size=total) / (counts[grp] - rank)
    cs = np.cumsum(spacing)
    offset = np.where(starts > 0, cs[np.maximum(starts - 1, 0)], 0.0)
    s = cs - offset[grp]
    with np.errstate(divide="ignore"):
        wts = np.asarray(w.ginv_log(_log_u_small(np.log(s))), dtype=float) * np.ones(total)
    return grp, wts


def _beam_step(rng, arrivals, counts, w, beam):
    """Expand parents (already the beam) and keep the ``beam`` earliest children.

    Returns (new arrivals, min child weight, earliest dropped arrival).
    """
    m = np.minimum(counts, beam).astype(np.int64)
    grp, wts = _smallest_children(rng, counts, m, w)
    arr = arrivals[grp] + wts
    if arr.size > beam:
        part = np.argpartition(arr, beam)
        dropped = float(arr[part[beam]])
        arr = arr[part[:beam]]
    else:
        dropped = math.inf
    # parents whose family was truncated: unseen children arrive after the last seen
    trunc = counts > m
    if trunc.any():
        last = np.cumsum(m) - 1
        dropped = min(dropped, float(np.min(arrivals[trunc] + wts[last[trunc]])))
    return arr, float(wts.min()) if wts.size else math.inf, dropped


def simulate(root, offspring, w, k_max, node_cap=10**7, seed=None, beam=1000, tau=None) -> BPRun:
    """Run BP(root, offspring, w) for k_max generations."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if tau is None:
        tau = getattr(offspring, "tau", None) or getattr(root, "tau", None) or 2.5
    a = tau - 2.0
    rng = np.random.default_rng(seed)
    log_z, gmin, front, exact, lmax = [0.0], [], [0.0], [True], []
    counts_hist = []
    arrivals = np.zeros(1)
    explicit = True
    # lower bound on the arrival, at the current generation, of anything the beam dropped
    lb = math.inf
    status = "ok"
    law = root
    n_explicit = 0
    for k in range(k_max):
        if explicit:
            c = law.sample(rng, arrivals.size)
            lmax.append(math.log(c.max()) if c.max() > 0 else -math.inf)
            total = float(c.sum())
            if total == 0:
                status = f"extinct at generation {k + 1}"
                break
            if total <= node_cap:
                ci = c.astype(np.int64)
                counts_hist.append(ci)
                wts = w.sample(rng, int(total))
                arrivals = np.repeat(arrivals, ci) + wts
                gmin.append(float(wts.min()))
                log_z.append(math.log(total))
                front.append(float(arrivals.min()))
                exact.append(True)
                n_explicit = k + 1
                law = offspring
                continue
            explicit = False
            status = f"aggregated from generation {k + 1}"
            log_next = math.log(total)
            if arrivals.size > beam:
                keep = np.argpartition(arrivals, beam)
                lb = min(lb, float(arrivals[keep[beam]]))
                c, arrivals = c[keep[:beam]], arrivals[keep[:beam]]
        else:
            c = law.sample(rng, arrivals.size)
            lmax.append(law.log_max(rng, log_z[-1]))
            log_next = max(law.log_sum(rng, log_z[-1]), log_z[-1])
        arrivals, mb, dropped = _beam_step(rng, arrivals, c, w, beam)
        # the minimum over all edges into the next generation, of which the beam saw a part
        m_rest = float(np.asarray(w.ginv_log(_log_u_small(math.log(rng.exponential()) - log_next))))
        gmin.append(min(mb, m_rest))
        log_z.append(log_next)
        lb += gmin[-1]
        f = float(arrivals.min())
        front.append(f)
        exact.append(f <= lb)
        lb = min(lb, dropped)
        law = offspring
    y = [a ** k * lz for k, lz in enumerate(log_z)]
    return BPRun(log_z, y, gmin, front, exact, lmax, n_explicit, status, counts_hist)


def simulate_many(runs, root, offspring, w, k_max, seed=0, **kw):
    ss = np.random.SeedSequence(seed)
    return [simulate(root, offspring, w, k_max, seed=s, **kw) for s in ss.spawn(runs)]


def check_invariants(run: BPRun, tol=1e-12):
    """List of violated bookkeeping invariants (empty when all hold)."""
    bad = []
    if run.log_sizes[0] != 0.0:
        bad.append("Z_0 != 1")
    if any(x < 0 for x in run.log_sizes):
        bad.append("generation size below 1")
    if any(y < 0 for y in run.y_norm):
        bad.append("normalised log size negative")
    if any(b < a - tol for a, b in zip(run.front, run.front[1:])):
        bad.append("front decreasing")
    acc = 0.0
    for k in range(1, len(run.front)):
        acc += run.gen_min[k - 1]
        if run.front[k] < acc * (1 - tol) - tol:
            bad.append(f"front below generation minima at {k}")
    # recount explicit generations from stored family sizes
    size = 1
    for k, ci in enumerate(run.child_counts):
        if ci.size != size or not math.isclose(math.log(ci.sum()), run.log_sizes[k + 1]):
            bad.append(f"size bookkeeping at {k + 1}")
        size = int(ci.sum())
    return bad


# --- analysis -------------------------------------------------------------

@dataclass
class ExplosionEvidence:
    status: str
    decay_exponent: float
    median_front: list
    median_increments: list
    term_ratios: list
    classifier_status: str

    @property
    def agrees(self):
        return self.status == self.classifier_status


def explosion_evidence(runs, w, tau=2.5, first=3, plateau_tol=1e-6) -> ExplosionEvidence:
    """Read explosiveness off the growth of the first-passage front.

    A front whose last increment is negligible against its value has
    plateaued (explosive).  Otherwise the median increments are fitted by
    i^-p over generations first..K: p <= 0.3 non-explosive, p >= 1.5
    explosive, else inconclusive.  Ten generations cannot separate slow
    polynomial decays, hence the wide middle band.
    """
    if len(runs) < 20:
        raise ValueError("need at least 20 runs")
    K = min(len(r.front) for r in runs) - 1
    if K < first + 2:
        raise ValueError("runs too shallow")
    fr = np.array([r.front[:K + 1] for r in runs])
    inc = np.median(np.diff(fr, axis=1), axis=0)
    med = np.median(fr, axis=0)
    terms = np.asarray(w.ginv_log(-(1 / (tau - 2)) ** np.arange(1, K + 1, dtype=float)), float)
    ratios = [float(x / t) if t > 0 else math.inf for x, t in zip(inc, terms * np.ones(K))]
    verdict = classify_explosive(w, tau=tau).status
    i = np.arange(1, K + 1, dtype=float)
    if inc[-1] <= plateau_tol * max(med[-1], 1e-300):
        return ExplosionEvidence("explosive", math.inf, med.tolist(), inc.tolist(), ratios, verdict)
    sel = slice(first - 1, K)
    pos = inc[sel] > 0
    p = -np.polyfit(np.log(i[sel][pos]), np.log(inc[sel][pos]), 1)[0]
    status = "non-explosive" if p <= 0.3 else "explosive" if p >= 1.5 else "inconclusive"
    return ExplosionEvidence(status, float(p), med.tolist(), inc.tolist(), ratios, verdict)


@dataclass
class GenerationsReport:
    k_star: int
    ktilde: int
    failure_fraction: float
    runs: int
    note: str = ""

    @property
    def ok(self):
        return self.failure_fraction < 0.1


def generations_to_degree(runs, Ktilde, M, tau) -> GenerationsReport:
    """Fraction of runs whose largest family in generation ceil(M log log ktilde) is below ktilde."""
    if not M * abs(math.log(tau - 2)) > 1:
        raise ValueError("need M |log(tau-2)| > 1")
    k = math.ceil(M * math.log(math.log(Ktilde)))
    if any(len(r.log_max_offspring) <= k for r in runs):
        raise ValueError(f"runs must reach generation {k + 1}")
    fail = float(np.mean([r.log_max_offspring[k] < math.log(Ktilde) for r in runs]))
    note = "offspring law shows no heavy tail" if fail >= 0.99 else ""
    return GenerationsReport(k, Ktilde, fail, len(runs), note)


@dataclass
class DaviesReport:
    std: list                 # sample std of the normalised log size across runs
    increment_std: list       # sample std of its one-generation increment
    window: tuple
    non_increasing: bool


def davies_trend(runs, k_lo=4, k_hi=8) -> DaviesReport:
    """Whether the across-run std of the normalised log size is non-increasing for k in [k_lo, k_hi]."""
    Y = np.array([r.y_norm[:k_hi + 1] for r in runs])
    sd = Y.std(axis=0, ddof=1)
    inc = np.diff(Y, axis=1).std(axis=0, ddof=1)
    win = sd[k_lo:k_hi + 1]
    return DaviesReport(sd.tolist(), inc.tolist(), (k_lo, k_hi), bool(np.all(np.diff(win) <= 0)))
