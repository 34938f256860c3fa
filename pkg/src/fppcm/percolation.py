"""Degree-dependent percolation, its threshold calculus and the layer recursion."""
from __future__ import annotations

import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .degrees import DegreeSequence, TailParams, check_tail_bounds, empirical_tail_curve, hill_estimate, tail_grid
from .graph import MultiGraph, build, match_half_edges


@dataclass(frozen=True)
class PercolationSpec:
    """p(d) = exp(-c (log d)^eta); ``b`` is the constant in the lower condition.

    c = 0 is allowed and gives p = 1 (no percolation).
    """
    b: float = 1.0
    c: float = 0.5
    eta: float = 0.5

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not self.c >= 0:
            raise ValueError("c must be nonnegative")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0,1)")

    def p(self, d):
        d = np.maximum(np.asarray(d, dtype=float), 1.0)
        return np.exp(-self.c * np.log(d) ** self.eta)

    def to_string(self):
        return f"{{b={self.b!r}, c={self.c!r}, eta={self.eta!r}}}"


def parse_percolation(text) -> PercolationSpec:
    """Parse ``{b=1.0, c=0.5, eta=0.5}`` (braces optional, any subset of keys)."""
    body = text.strip()
    if body.startswith("{"):
        if not body.endswith("}"):
            raise ValueError(f"unbalanced braces in {text!r}")
        body = body[1:-1]
    kw = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        m = re.fullmatch(r"(b|c|eta)\s*=\s*([-+0-9.eE]+)", part)
        if not m:
            raise ValueError(f"bad percolation field {part!r}")
        kw[m.group(1)] = float(m.group(2))
    return PercolationSpec(**kw)


def threshold_xi(spec: PercolationSpec, w, d, d2):
    """xi(d, d') = ginv(p(d) p(d')), so that P(L <= xi) = p(d) p(d')."""
    if np.any(np.asarray(d) < 1) or np.any(np.asarray(d2) < 1):
        raise ValueError("degrees must be at least 1")
    with np.errstate(divide="ignore"):
        return w.ginv(spec.p(d) * spec.p(d2))


@dataclass
class PercolatedGraph:
    """Result of either percolation form.

    ``base`` is the graph the kept mask refers to: the input multigraph for
    the edge form, the matched graph on n + A vertices for the half-edge form.
    ``dr`` holds kept degrees for vertices 1..n (index v-1).
    """
    base: MultiGraph
    kept: np.ndarray
    dr: np.ndarray
    n: int
    artificial_count: int = 0
    form: str = "edge"
    _kept_graph: MultiGraph = field(default=None, repr=False)

    def kept_graph(self) -> MultiGraph:
        if self._kept_graph is None:
            g = self.base
            self._kept_graph = MultiGraph(self.n, g.u[self.kept], g.v[self.kept],
                                          g.weight[self.kept])
        return self._kept_graph

    def induced_degrees(self):
        """Degrees of 1..n in the kept graph (self-loops count twice)."""
        return self.kept_graph().degree_array()[1:]

    def kept_edge_count(self):
        return int(np.count_nonzero(self.kept))

    def components(self):
        g = self.kept_graph()
        return _component_count(g.n, g.u, g.v)


def _component_count(n, u, v):
    if u.size == 0:
        return n
    a = coo_matrix((np.ones(u.size), (u - 1, v - 1)), shape=(n, n))
    return int(connected_components(a, directed=False)[0])


def edge_percolate(g: MultiGraph, spec: PercolationSpec, w, seed=None) -> PercolatedGraph:
    """Keep edge (x, y) iff L <= xi(d_x, d_y).

    Discrete weight laws cannot hit P(L <= xi) = p p' exactly, so for them
    the edge is kept by an independent coin flip with that probability, which
    needs ``seed``.
    """
    deg = g.degree_array()
    q = spec.p(deg[g.u]) * spec.p(deg[g.v])
    if w.continuous:
        with np.errstate(divide="ignore"):
            kept = g.weight <= np.asarray(w.ginv(q), dtype=float)
    else:
        if seed is None:
            raise ValueError("non-continuous weights need a seed for coin-flip percolation")
        rng = np.random.default_rng(seed)
        kept = rng.random(g.m) < q
    dr = (np.bincount(g.u[kept], minlength=g.n + 1)
          + np.bincount(g.v[kept], minlength=g.n + 1))[1:]
    return PercolatedGraph(g, kept, dr.astype(np.int64), g.n, 0, "edge")


def half_edge_percolate(ds, spec: PercolationSpec, seed, w=None) -> PercolatedGraph:
    """Keep each half-edge of v with probability p(d_v); every removed
    half-edge becomes its own artificial degree-1 vertex; all half-edges are
    paired uniformly and the induced subgraph on the original vertices kept.
    """
    d = ds.degrees if isinstance(ds, DegreeSequence) else np.asarray(ds, dtype=np.int64)
    n = d.size
    rng = np.random.default_rng(seed)
    owner = np.repeat(np.arange(1, n + 1), d)
    keep_he = rng.random(owner.size) < spec.p(d)[owner - 1]
    A = int(owner.size - keep_he.sum())
    dr = np.bincount(owner[keep_he], minlength=n + 1)[1:].astype(np.int64)
    # kept half-edges plus one degree-1 vertex per removed half-edge
    full = np.concatenate([dr, np.ones(A, dtype=np.int64)])
    u, v, pairs = match_half_edges(full, rng)
    weight = w.sample(rng, u.size) if w is not None else np.zeros(u.size)
    base = MultiGraph(n + A, u, v, weight, half_edges=pairs, degrees=full, seed=seed)
    kept = (u <= n) & (v <= n)
    return PercolatedGraph(base, kept, dr, n, A, "half-edge")


def broken_edge_percolate(g: MultiGraph, spec: PercolationSpec, seed) -> PercolatedGraph:
    """Negative control: keeps an edge with probability (p(d) p(d'))^2."""
    deg = g.degree_array()
    q = (spec.p(deg[g.u]) * spec.p(deg[g.v])) ** 2
    kept = np.random.default_rng(seed).random(g.m) < q
    dr = (np.bincount(g.u[kept], minlength=g.n + 1)
          + np.bincount(g.v[kept], minlength=g.n + 1))[1:]
    return PercolatedGraph(g, kept, dr.astype(np.int64), g.n, 0, "broken")


# --- equality in law of the two forms ---------------------------------------

def summary_stats(pg: PercolatedGraph):
    """(kept-edge count, sorted induced degree vector, component count)."""
    return (pg.kept_edge_count(), tuple(np.sort(pg.induced_degrees()).tolist()),
            pg.components())


def two_sample_chi2(a, b, min_expected=5.0):
    """Chi-square homogeneity test of two samples of hashable labels.

    Categories are sorted and adjacent ones merged until every expected
    count is at least ``min_expected``; the remainder joins the last bin.
    """
    ca, cb = Counter(a), Counter(b)
    keys = sorted(set(ca) | set(cb))
    na, nb = sum(ca.values()), sum(cb.values())
    frac_a = na / (na + nb)
    rows, cur = [], [0, 0]
    for k in keys:
        cur[0] += ca.get(k, 0)
        cur[1] += cb.get(k, 0)
        tot = cur[0] + cur[1]
        if min(tot * frac_a, tot * (1 - frac_a)) >= min_expected:
            rows.append(cur)
            cur = [0, 0]
    if cur[0] + cur[1] > 0:
        if rows:
            rows[-1] = [rows[-1][0] + cur[0], rows[-1][1] + cur[1]]
        else:
            rows.append(cur)
    if len(rows) < 2:
        return 1.0, 0.0, len(rows)
    table = np.array(rows).T
    chi2, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(p), float(chi2), len(rows)


@dataclass
class EqualityReport:
    replicas: int
    p_values: dict
    chi2: dict
    bins: dict
    alpha: float = 0.01

    @property
    def indistinguishable(self):
        return all(p > self.alpha for p in self.p_values.values())

    def rejects(self, level=1e-3):
        return min(self.p_values.values()) < level


def _replica_seed(seed, i, stream):
    return np.random.SeedSequence([int(x) for x in np.atleast_1d(seed)] + [int(i), int(stream)])


def equality_test(ds, spec: PercolationSpec, w, replicas, seed=0, broken=False) -> EqualityReport:
    """Edge vs half-edge percolation: compare summary statistics by chi-square.

    With ``broken=True`` the edge form is replaced by the negative control.
    """
    d = ds.degrees if isinstance(ds, DegreeSequence) else np.asarray(ds, dtype=np.int64)
    if d.size > 100:
        raise ValueError("equality_test is meant for n <= 100")
    sa = [[], [], []]
    sb = [[], [], []]
    for i in range(replicas):
        g = build(d, w, _replica_seed(seed, i, 0))
        if broken:
            pe = broken_edge_percolate(g, spec, _replica_seed(seed, i, 1))
        else:
            pe = edge_percolate(g, spec, w, seed=_replica_seed(seed, i, 1))
        ph = half_edge_percolate(d, spec, _replica_seed(seed, i, 2))
        for j, (x, y) in enumerate(zip(summary_stats(pe), summary_stats(ph))):
            sa[j].append(x)
            sb[j].append(y)
    names = ("kept_edges", "sorted_degrees", "components")
    res = {nm: two_sample_chi2(a, b) for nm, a, b in zip(names, sa, sb)}
    return EqualityReport(replicas, {k: v[0] for k, v in res.items()},
                          {k: v[1] for k, v in res.items()}, {k: v[2] for k, v in res.items()})


# --- derived quantities --------------------------------------------------

def s_of_x(spec: PercolationSpec, x):
    """s(x) = (2x/b) exp(2c (log(2x/b))^eta), defined for x >= b/2."""
    x = np.asarray(x, dtype=float)
    if np.any(x < spec.b / 2):
        raise ValueError("s(x) needs x >= b/2")
    r = 2 * x / spec.b
    out = r * np.exp(2 * spec.c * np.log(r) ** spec.eta)
    return out[()] if out.ndim == 0 else out


def kn_from_ktilde(spec: PercolationSpec, ktilde):
    """floor(ktilde b exp(-c (log ktilde)^eta) / 2), the kept degree aimed for at a vertex of
    degree ktilde; 0 with a warning if that is below 1."""
    if ktilde < 2:
        raise ValueError("ktilde must be at least 2")
    val = ktilde * spec.b * math.exp(-spec.c * math.log(ktilde) ** spec.eta)
    if val < 2:
        warnings.warn(f"ktilde={ktilde} gives a target kept degree below 1")
        return 0
    return int(math.floor(val / 2))


def theta(spec: PercolationSpec):
    """Lower end max{(b/2) e^{(4c)^{1-eta}}, 4 log 8} of the post-percolation tail range."""
    return max(spec.b / 2 * math.exp((4 * spec.c) ** (1 - spec.eta)), 4 * math.log(8))


@dataclass
class LayerPlan:
    y: list              # recursion values, starting at the kept start degree
    i_max: int
    target: float        # n^(alpha (tau-2))
    lower: list          # closed-form bound (kn^(1-delta_n))^((1/(tau-2))^i)
    delta_n: float
    D: float

    @property
    def thresholds(self):
        """Layer thresholds: recursion values capped at the target."""
        return [min(v, self.target) for v in self.y]

    def lower_capped(self):
        return [min(v, self.target) for v in self.lower]


def layer_recursion(kn, tau, gamma, D, n, alpha, Dtilde=None) -> LayerPlan:
    """Iterate y -> y^(1 / (tau - 2 + D (log y)^(gamma-1))) from y = kn.

    Stops at the first value >= n^(alpha (tau-2)).  The closed-form
    bound uses delta_n = Dtilde (log kn)^(gamma-1); by default
    Dtilde = D max(i_max, 1) / (tau - 2), which makes the bound provable
    at every index (with Dtilde = D it already fails at i = 1).
    """
    if kn < 3:
        raise ValueError("kn must be at least 3")
    if D < 0:
        raise ValueError("D must be nonnegative")
    a = tau - 2.0
    target = float(n) ** (alpha * a)
    e0 = a + D * math.log(kn) ** (gamma - 1)
    if e0 >= 1:
        raise ValueError("kn too small for D: recursion exponent >= 1")
    y = [float(kn)]
    while y[-1] < target:
        e = a + D * math.log(y[-1]) ** (gamma - 1)
        y.append(y[-1] ** (1.0 / e))
    i_max = len(y) - 1
    if Dtilde is None:
        Dtilde = D * max(i_max, 1) / a
    delta_n = Dtilde * math.log(kn) ** (gamma - 1)
    base = math.log(kn) * (1 - delta_n)
    lower = [math.exp(base * (1 / a) ** i) if base * (1 / a) ** i < 700 else math.inf
             for i in range(len(y))]
    return LayerPlan(y, i_max, target, lower, delta_n, D)


def imax_bound(n, kn, tau):
    """(log log n - log log kn) / |log(tau-2)|."""
    return (math.log(math.log(n)) - math.log(math.log(kn))) / abs(math.log(tau - 2))


# --- degree tail after percolation ---------------------------------------

@dataclass
class TailAfterPercolation:
    theta: float
    hill: list
    upper_ok: list            # 1 - F^r(x) <= 1 - F(x) at every x
    envelope_violations: list
    x_max: float

    def hill_within(self, tau, tol=0.4):
        return [abs(h - (tau - 1)) <= tol for h in self.hill]


def post_percolation_tail_test(ds, spec: PercolationSpec, replicas, seed=0,
                               params: TailParams | None = None, slack=3.0):
    """Thin each degree binomially with p(d) and inspect the tail of the kept degrees.

    Hill estimates use the kept degrees in [theta, x_max], where x_max is
    half the image n^alpha p(n^alpha) of the degree cap; the envelope
    check uses gamma' = max(gamma, eta) and C inflated by ``slack``.
    """
    d = ds.degrees if isinstance(ds, DegreeSequence) else np.asarray(ds, dtype=np.int64)
    n = d.size
    if params is None:
        tau = ds.tau if isinstance(ds, DegreeSequence) and ds.tau else 2.5
        params = TailParams(tau)
    th = theta(spec)
    cap = n ** params.alpha
    # thinning maps the degree cap to about cap * p(cap); stay below half of that
    x_max = max(cap * float(spec.p(cap)) / 2, th)
    env = TailParams(params.tau, max(params.gamma, spec.eta), params.C, params.alpha)
    grid = np.arange(0, int(d.max()) + 2)
    base_tail = empirical_tail_curve(d, grid)
    hills, ups, viol = [], [], []
    pd = spec.p(d)
    for r in range(replicas):
        rng = np.random.default_rng(_replica_seed(seed, r, 7))
        dr = rng.binomial(d, pd)
        ups.append(bool(np.all(empirical_tail_curve(dr, grid) <= base_tail)))
        sel = dr[(dr > th) & (dr <= x_max)]
        hills.append(hill_estimate(sel, threshold=th))
        g = tail_grid(x_max, x_min=math.ceil(th))
        rep = check_tail_bounds(dr, env, x=g, slack=slack)
        viol.append(int(rep.count()))
    return TailAfterPercolation(th, hills, ups, viol, x_max)


@dataclass
class OriginBoundReport:
    forward_rate: float
    forward_bound: float
    reverse_rate: float
    reverse_bound: float
    kn: int
    s_x: float
    trials: int

    @property
    def ok(self):
        return self.forward_rate <= self.forward_bound and self.reverse_rate <= self.reverse_bound


def origin_degree_bound_test(spec: PercolationSpec, x, replicas, tau=2.5, ktilde=200,
                             seed=0, slack=10.0) -> OriginBoundReport:
    """Monte Carlo check of the two binomial-concentration bounds.

    forward: P(kept < kn | degree >= ktilde) against slack * exp(-kn/4);
    reverse: P(degree >= s(x) | kept <= x) against slack * c * exp(-x/4), where c is
    the percolation constant.
    """
    if x < 30:
        raise ValueError("x must be at least 30")
    rng = np.random.default_rng(seed)
    a = tau - 1.0
    kn = kn_from_ktilde(spec, ktilde)
    # degrees conditioned on being >= ktilde: floor(ktilde U^(-1/(tau-1)))
    u = 1.0 - rng.random(replicas)
    d_hi = np.floor(ktilde * u ** (-1.0 / a)).astype(np.int64)
    dr_hi = rng.binomial(d_hi, spec.p(d_hi))
    fwd = float(np.mean(dr_hi < kn))
    # unconditioned degrees from the model law
    u = 1.0 - rng.random(replicas)
    d = np.maximum(np.floor(2.0 * u ** (-1.0 / a)), 2).astype(np.int64)
    dr = rng.binomial(d, spec.p(d))
    sx = float(s_of_x(spec, x))
    low = dr <= x
    rev = float(np.mean(d[low] >= sx)) if low.any() else 0.0
    return OriginBoundReport(fwd, slack * math.exp(-kn / 4), rev,
                             slack * spec.c * math.exp(-x / 4), kn, sx, replicas)
