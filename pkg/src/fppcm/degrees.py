"""Power-law degree sequences: synthesis, tail checks, size-biasing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import zeta


@dataclass(frozen=True)
class TailParams:
    """Parameters of the power-law envelope for the degree tail.

    ``alpha`` controls the truncation point ``n**alpha``.  When omitted it is
    the midpoint of (1/2, 1/(tau-1)).  Above ``n**(1/(tau-1))`` an i.i.d.
    sample has O(1) vertices, so the lower envelope cannot hold there whp.
    """
    tau: float
    gamma: float = 0.5
    C: float = 1.0
    alpha: float | None = None

    def __post_init__(self):
        if not 2.0 < self.tau < 3.0:
            raise ValueError(f"tau must lie in (2,3), got {self.tau}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 0.25 + 0.5 / (self.tau - 1.0))
        upper = 1.0 / ((self.tau - 2.0) * (self.tau - 1.0))
        if not 0.5 < self.alpha < upper:
            raise ValueError(f"alpha must lie in (1/2, {upper:.4g}), got {self.alpha}")

    def with_C(self, C):
        return TailParams(self.tau, self.gamma, C, self.alpha)


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    """Vertex degrees, vertex ``v`` (1-based) has degree ``degrees[v-1]``.

    With ``fix_parity`` an odd total gets one extra half-edge on the last
    vertex.  ``strict=False`` skips the minimum-degree and parity checks,
    which is only meant for raw sequences fed to ``size_biased``.
    """
    degrees: np.ndarray
    tau: float | None = None
    fix_parity: bool = True
    strict: bool = True

    def __post_init__(self):
        d = np.array(self.degrees, dtype=np.int64).ravel()
        if d.size == 0:
            raise ValueError("empty degree sequence")
        if self.fix_parity and d.sum() % 2:
            d[-1] += 1
        if self.strict:
            if d.min() < 2:
                raise ValueError("every degree must be at least 2")
            if d.sum() % 2:
                raise ValueError("total number of half-edges must be even")
        d.setflags(write=False)
        object.__setattr__(self, "degrees", d)

    @property
    def n(self) -> int:
        return int(self.degrees.size)

    @property
    def total_half_edges(self) -> int:
        return int(self.degrees.sum())

    def __len__(self):
        return self.n


def pareto_degrees(rng, n, tau, cap=None):
    """i.i.d. draws with P(D >= x) = min(1, (x/2)^-(tau-1)), clipped at cap."""
    u = 1.0 - rng.random(n)  # (0, 1]
    d = np.floor(2.0 * u ** (-1.0 / (tau - 1.0)))
    if cap is not None:
        d = np.minimum(d, cap)
    return np.maximum(d, 2).astype(np.int64)


def synthesize(n, params: TailParams, seed, sampler=None) -> DegreeSequence:
    """Draw an i.i.d. power-law degree sequence.

    ``sampler(rng, n)`` replaces the default Pareto law when given; the result
    is still clipped at ``ceil(n**alpha)``, floored at 2 and parity-fixed.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not isinstance(params, TailParams):
        raise TypeError("params must be TailParams")
    rng = np.random.default_rng(seed)
    cap = math.ceil(n ** params.alpha)
    if sampler is None:
        d = pareto_degrees(rng, n, params.tau, cap)
    else:
        d = np.minimum(np.asarray(sampler(rng, n), dtype=np.int64), cap)
        d = np.maximum(d, 2)
    return DegreeSequence(d, tau=params.tau)


def empirical_tail(ds, x):
    """Fraction of vertices with degree > x."""
    d = _degrees(ds)
    return float(np.count_nonzero(d > x)) / d.size


def empirical_tail_curve(ds, xs):
    d = np.sort(_degrees(ds))
    xs = np.asarray(xs)
    return (d.size - np.searchsorted(d, xs, side="right")) / d.size


@dataclass
class TailReport:
    grid: np.ndarray
    tail: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    informative: np.ndarray
    violations: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.violations is None:
            bad = (self.tail < self.lower) | (self.tail > self.upper)
            self.violations = self.grid[bad & self.informative]

    @property
    def ok(self):
        return self.violations.size == 0

    def count(self, x_min=0):
        return int(np.count_nonzero(self.violations >= x_min))


def tail_grid(x_max, x_min=2, ratio=1.25):
    xs, x = [], float(x_min)
    while x <= x_max:
        xs.append(int(math.floor(x)))
        x *= ratio
    return np.unique(np.asarray(xs, dtype=np.int64))


def check_tail_bounds(ds, params: TailParams, x=None, slack=1.0):
    """Compare the empirical tail P(D > x) with the power-law envelope on a geometric grid.

    The grid runs from 2 up to n**alpha with ratio 1.25.  ``x`` may be a single
    point or an explicit grid.  Points below 2 are kept but flagged as
    uninformative and only the upper bound is meaningful there.
    """
    d = _degrees(ds)
    if x is None:
        xs = tail_grid(d.size ** params.alpha)
    else:
        xs = np.atleast_1d(np.asarray(x, dtype=np.int64))
    a = params.tau - 1.0
    C = params.C * slack
    lx = np.log(np.maximum(xs, 1).astype(float))
    base = np.maximum(xs, 1).astype(float) ** (-a)
    env = C * lx ** params.gamma
    lower = base * np.exp(-env)
    upper = base * np.exp(env)
    tail = empirical_tail_curve(d, xs)
    informative = xs >= 2
    rep = TailReport(xs, tail, lower, upper, informative)
    # below 2 only the upper bound can be checked
    bad_up = (~informative) & (tail > upper)
    if bad_up.any():
        rep.violations = np.union1d(rep.violations, xs[bad_up])
    return rep


@dataclass
class SizeBiasedDist:
    """Finite size-biased law: probabilities[k] = P(B = k)."""
    probabilities: dict
    support_max: int

    def pmf(self, k):
        return self.probabilities.get(int(k), 0.0)

    def mean(self):
        return sum(k * p for k, p in self.probabilities.items())

    def arrays(self):
        ks = np.array(sorted(self.probabilities), dtype=np.int64)
        return ks, np.array([self.probabilities[k] for k in ks])


def size_biased(ds) -> SizeBiasedDist:
    """P(B = k) = (k+1) #{v: d_v = k+1} / H, computed on the sequence as given."""
    d = _degrees(ds)
    H = int(d.sum())
    if H <= 0:
        raise ValueError("total degree must be positive")
    vals, counts = np.unique(d, return_counts=True)
    probs = {int(v - 1): float(v * c) / H for v, c in zip(vals, counts)}
    return SizeBiasedDist(probs, int(vals.max() - 1))


def tv_distance(p, q):
    """Half the L1 distance between two discrete laws.

    Each argument may be a dict, a SizeBiasedDist, or a (support, probs) pair.
    """
    p, q = _as_dict(p), _as_dict(q)
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def hill_estimate(x, k=None, frac=0.01, threshold=None):
    """Hill estimator of the tail exponent of P(X > x).

    Uses the ``k`` largest order statistics (default: top ``frac``), or all
    values strictly above ``threshold`` if one is given.
    """
    x = np.sort(np.asarray(x, dtype=float))[::-1]
    if threshold is not None:
        k = int(np.count_nonzero(x > threshold))
        ref = float(threshold)
    else:
        if k is None:
            k = max(int(frac * x.size), 2)
        ref = x[k]
    if k < 2:
        return float("nan")
    return 1.0 / float(np.mean(np.log(x[:k] / ref)))


class ParetoLimit:
    """Limit laws of the synthesized degrees (no truncation).

    D has P(D >= x) = (x/2)^-(tau-1) for integers x >= 2, and B is the
    size-biased version minus one.  Tail sums use the Hurwitz zeta function.
    """

    def __init__(self, tau):
        self.tau = tau
        self.a = tau - 1.0
        self.mean_D = 1.0 + 2.0 ** self.a * float(zeta(self.a, 2))

    def sf_D(self, x):
        """P(D >= x)."""
        x = np.asarray(x, dtype=float)
        return np.where(x <= 2, 1.0, (np.maximum(x, 2) / 2.0) ** (-self.a))

    def pmf_D(self, k):
        k = np.asarray(k, dtype=float)
        return np.where(k >= 2, self.sf_D(k) - self.sf_D(k + 1), 0.0)

    def pmf_B(self, m):
        m = np.asarray(m, dtype=float)
        return (m + 1) * self.pmf_D(m + 1) / self.mean_D

    def sf_B(self, m):
        """P(B >= m) for integer m."""
        m = np.atleast_1d(np.asarray(m, dtype=float))
        out = np.ones_like(m)
        big = m >= 2
        mm = m[big]
        # sum_{j >= m+1} j P(D = j) = (m+1) P(D >= m+1) + sum_{j >= m+2} P(D >= j)
        tail = (mm + 1) * ((mm + 1) / 2.0) ** (-self.a) \
            + 2.0 ** self.a * zeta(self.a, mm + 2)
        out[big] = tail / self.mean_D
        return out

    @property
    def tail_exponent_B(self):
        return self.tau - 2.0

    @property
    def tail_constant_B(self):
        """c in P(B > x) ~ c x^-(tau-2)."""
        a = self.a
        return a * 2.0 ** a / ((a - 1.0) * self.mean_D)

    def size_biased_dict(self, kmax):
        ks = np.arange(1, kmax + 1)
        p = self.pmf_B(ks)
        out = dict(zip(ks.tolist(), p.tolist()))
        out[kmax + 1] = float(self.sf_B(kmax + 1)[0])  # lumped tail
        return out


def save_degrees(ds: DegreeSequence, path):
    path = Path(path)
    tau = "nan" if ds.tau is None else repr(float(ds.tau))
    try:
        with open(path, "w") as fh:
            fh.write(f"# n={ds.n} tau={tau}\n")
            fh.write("\n".join(map(str, ds.degrees.tolist())))
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write degree file {path}: {exc}") from exc


def load_degrees(path) -> DegreeSequence:
    path = Path(path)
    tau = None
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("tau="):
                        t = float(tok[4:])
                        tau = None if math.isnan(t) else t
                continue
            vals.append(int(line))
    return DegreeSequence(np.array(vals), tau=tau, fix_parity=False)


def _degrees(ds):
    if isinstance(ds, DegreeSequence):
        return ds.degrees
    return np.asarray(ds, dtype=np.int64)


def _as_dict(p):
    if isinstance(p, SizeBiasedDist):
        return p.probabilities
    if isinstance(p, dict):
        return p
    support, probs = p
    out = {}
    for k, v in zip(support, probs):
        out[k] = out.get(k, 0.0) + float(v)
    return out
