"""Edge-weight laws given by a CDF and its generalized inverse."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize


class WeightDist:
    """Base class.  Subclasses supply ``cdf`` and ``ginv``.

    ``ginv(y) = inf{x : cdf(x) >= y}`` for y in (0, 1].  ``ginv_log`` takes
    ``log y`` so that arguments like exp(-e^40) do not underflow, and ``isf``
    takes ``q = 1 - y`` for arguments close to 1.
    """
    name = "base"
    continuous = True

    @property
    def family_params(self) -> dict:
        return {}

    def cdf(self, t):
        raise NotImplementedError

    def ginv(self, y):
        raise NotImplementedError

    def ginv_log(self, logy):
        return self.ginv(np.exp(logy))

    def isf(self, q):
        return self.ginv(1.0 - np.asarray(q, dtype=float))

    def sf(self, t):
        return 1.0 - self.cdf(t)

    def sample(self, rng, size=None):
        # uniform on the open interval (0,1), so ginv never sees 0 or 1
        k = rng.integers(0, 2**53, size=size)
        u = (k + 0.5) / 2.0**53
        return self.ginv(u)

    def to_string(self):
        args = ", ".join(f"{k}={_fmt(v)}" for k, v in self.family_params.items())
        return f"{self.name}({args})"

    def __repr__(self):
        return self.to_string()

    def __eq__(self, other):
        return isinstance(other, WeightDist) and self.to_string() == other.to_string()

    def __hash__(self):
        return hash(self.to_string())


def _fmt(v):
    if isinstance(v, WeightDist):
        return v.to_string()
    return repr(float(v))


def _positive(name, v):
    v = float(v)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError(f"{name} must be positive and finite, got {v}")
    return v


class Exponential(WeightDist):
    name = "exponential"

    def __init__(self, rate=1.0):
        self.rate = _positive("rate", rate)

    @property
    def family_params(self):
        return {"rate": self.rate}

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0)), 0.0)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.rate * np.maximum(t, 0))

    def ginv(self, y):
        return -np.log1p(-np.asarray(y, dtype=float)) / self.rate

    def ginv_log(self, logy):
        return -np.log1p(-np.exp(logy)) / self.rate

    def isf(self, q):
        return -np.log(np.asarray(q, dtype=float)) / self.rate


class Uniform(WeightDist):
    name = "uniform"

    def __init__(self, low=0.0, high=1.0):
        self.low, self.high = float(low), float(high)
        if self.low < 0 or not self.high > self.low:
            raise ValueError("uniform needs 0 <= low < high")

    @property
    def family_params(self):
        return {"low": self.low, "high": self.high}

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip((t - self.low) / (self.high - self.low), 0.0, 1.0)

    def ginv(self, y):
        return self.low + np.asarray(y, dtype=float) * (self.high - self.low)


class Constant(WeightDist):
    name = "constant"
    continuous = False

    def __init__(self, value=1.0):
        self.value = _positive("value", value)

    @property
    def family_params(self):
        return {"value": self.value}

    def cdf(self, t):
        return np.where(np.asarray(t, dtype=float) >= self.value, 1.0, 0.0)

    def ginv(self, y):
        return np.full(np.shape(y), self.value)[()] if np.ndim(y) else self.value

    def ginv_log(self, logy):
        return self.ginv(logy)

    def isf(self, q):
        return self.ginv(q)

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)


class Shifted(WeightDist):
    """offset + X with X drawn from ``base``."""
    name = "shifted"

    def __init__(self, offset=1.0, base=None):
        self.offset = float(offset)
        if self.offset < 0:
            raise ValueError("offset must be nonnegative")
        self.base = Exponential(1.0) if base is None else base
        self.continuous = self.base.continuous

    @property
    def family_params(self):
        return {"offset": self.offset, "base": self.base}

    def cdf(self, t):
        return self.base.cdf(np.asarray(t, dtype=float) - self.offset)

    def ginv(self, y):
        return self.offset + self.base.ginv(y)

    def ginv_log(self, logy):
        return self.offset + self.base.ginv_log(logy)

    def isf(self, q):
        return self.offset + self.base.isf(q)

    def sample(self, rng, size=None):
        return self.offset + self.base.sample(rng, size)


class DoubleExp(WeightDist):
    """F(t) = exp(-C (exp(c / t^beta) - 1)) for t > 0.

    Near zero F(t) behaves like exp(-C exp(c / t^beta)); the -1 makes the law
    proper (F -> 1 as t -> inf).
    """
    name = "double_exp"

    def __init__(self, beta=1.0, C=1.0, c=1.0):
        self.beta = _positive("beta", beta)
        self.C = _positive("C", C)
        self.c = _positive("c", c)

    @property
    def family_params(self):
        return {"beta": self.beta, "C": self.C, "c": self.c}

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            s = self.c / np.maximum(t, 1e-300) ** self.beta
            out = np.exp(-self.C * np.expm1(s))
        return np.where(t > 0, out, 0.0)

    def ginv(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return self.ginv_log(np.log(y))

    def ginv_log(self, logy):
        logy = np.asarray(logy, dtype=float)
        with np.errstate(divide="ignore"):
            return (self.c / np.log1p(-logy / self.C)) ** (1.0 / self.beta)


class Pareto(WeightDist):
    """F(t) = 1 - (t/scale)^-shape for t >= scale."""
    name = "pareto"

    def __init__(self, shape=1.0, scale=1.0):
        self.shape = _positive("shape", shape)
        self.scale = _positive("scale", scale)

    @property
    def family_params(self):
        return {"shape": self.shape, "scale": self.scale}

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > self.scale,
                        1.0 - (np.maximum(t, self.scale) / self.scale) ** -self.shape, 0.0)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        return np.minimum(1.0, (np.maximum(t, 1e-300) / self.scale) ** -self.shape)

    def ginv(self, y):
        return self.isf(1.0 - np.asarray(y, dtype=float))

    def ginv_log(self, logy):
        return self.isf(-np.expm1(np.asarray(logy, dtype=float)))

    def isf(self, q):
        with np.errstate(divide="ignore"):
            return self.scale * np.asarray(q, dtype=float) ** (-1.0 / self.shape)


FAMILIES = {
    "exponential": Exponential,
    "uniform": Uniform,
    "constant": Constant,
    "shifted": Shifted,
    "double_exp": DoubleExp,
    "pareto": Pareto,
}


def make_family(name, params=None, **kw) -> WeightDist:
    """Build a weight law by family name, e.g. make_family("exponential", rate=2)."""
    params = dict(params or {}, **kw)
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown weight family {name!r}; known: {sorted(FAMILIES)}")
    return cls(**params)


# --- config strings -------------------------------------------------------
#
#   family := NAME '(' [arg (',' arg)*] ')'
#   arg    := [NAME '='] (NUMBER | family)

_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[(),=]))")


def _tokenize(text):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad weight spec {text!r} at position {pos}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def parse_weight(text) -> WeightDist:
    """Parse strings like ``shifted(offset=1, base=exponential(rate=1.0))``."""
    toks = _tokenize(text) + [("end", "")]
    dist, i = _parse_family(toks, 0, text)
    if i != len(toks) - 1:
        raise ValueError(f"trailing input in weight spec {text!r}")
    return dist


def _parse_family(toks, i, text):
    def expect(kind, val=None):
        nonlocal i
        if i >= len(toks) or toks[i][0] != kind or (val is not None and toks[i][1] != val):
            raise ValueError(f"malformed weight spec {text!r}")
        i += 1
        return toks[i - 1][1]

    name = expect("name")
    cls = FAMILIES.get(name)
    if cls is None:
        raise ValueError(f"unknown weight family {name!r}")
    expect("op", "(")
    args, kwargs = [], {}
    if toks[i] == ("op", ")"):
        i += 1
        return cls(), i
    while True:
        key = None
        if toks[i][0] == "name" and toks[i + 1] == ("op", "="):
            key = toks[i][1]
            i += 2
        if toks[i][0] == "num":
            val = float(toks[i][1])
            i += 1
        elif toks[i][0] == "name":
            val, i = _parse_family(toks, i, text)
        else:
            raise ValueError(f"malformed weight spec {text!r}")
        if key is None:
            if kwargs:
                raise ValueError(f"positional argument after keyword in {text!r}")
            args.append(val)
        else:
            kwargs[key] = val
        if toks[i] == ("op", ","):
            i += 1
            continue
        expect("op", ")")
        break
    try:
        return cls(*args, **kwargs), i
    except TypeError as exc:
        raise ValueError(f"bad arguments for {name}: {exc}") from None


# --- explosion -------------------------------------------------------------

@dataclass
class ExplosionVerdict:
    explosive: bool | None
    status: str  # "explosive", "non-explosive" or "inconclusive"
    partial_sums: np.ndarray
    k_max: int
    terms: np.ndarray = field(repr=False, default=None)
    decay_exponent: float = float("nan")
    tail_bound: float = float("nan")
    reason: str = ""


def explosion_terms(w: WeightDist, k_max, tau=None):
    """ginv(exp(-e^k)) for k = 1..k_max, or ginv(exp(-(1/(tau-2))^k)) if tau is given."""
    k = np.arange(1, k_max + 1, dtype=float)
    base = math.e if tau is None else 1.0 / (tau - 2.0)
    return np.asarray(w.ginv_log(-(base ** k)), dtype=float) * np.ones_like(k)


def classify_explosive(w: WeightDist, k_max=40, tol=1e-12, tau=None) -> ExplosionVerdict:
    """Decide convergence of sum_k ginv(exp(-e^k)) from its first k_max terms.

    Explosive when the last five terms are below ``tol`` and a geometric
    bound on the remainder is below ``tol``.  Otherwise the terms are fitted
    by a power law k^-p over the second half of the range: p <= 0.8 means
    the sum diverges (non-explosive), p >= 1.2 that it converges.
    """
    if k_max < 10:
        raise ValueError("k_max must be at least 10")
    terms = explosion_terms(w, k_max, tau)
    partial = np.cumsum(terms)
    last = terms[-5:]

    if np.all(last <= tol):
        a, b = last[-2], last[-1]
        r = b / a if a > 0 else 0.0
        bound = b * r / (1 - r) if r < 1 else math.inf
        if bound < tol:
            return ExplosionVerdict(True, "explosive", partial, k_max, terms,
                                    math.inf, bound, "terms vanish")

    ks = np.arange(1, k_max + 1, dtype=float)
    half = slice(k_max // 2, k_max)
    pos = terms[half] > 0
    if pos.sum() < 3:
        return ExplosionVerdict(None, "inconclusive", partial, k_max, terms,
                                reason="too few positive terms")
    slope = np.polyfit(np.log(ks[half][pos]), np.log(terms[half][pos]), 1)[0]
    p = -slope
    if p <= 0.8:
        return ExplosionVerdict(False, "non-explosive", partial, k_max, terms, p,
                                math.inf, "terms decay no faster than k^-0.8")
    if p >= 1.2:
        # remainder bound for terms ~ t_K (k/K)^-p
        bound = terms[-1] * k_max / (p - 1)
        return ExplosionVerdict(True, "explosive", partial, k_max, terms, p, bound,
                                "terms decay like k^-p with p > 1")
    return ExplosionVerdict(None, "inconclusive", partial, k_max, terms, p,
                            reason="decay exponent near 1")


def characteristic_sum(w: WeightDist, n, tau) -> float:
    """Sum of ginv(exp(-(1/(tau-2))^i)) for i up to floor(log log n / |log(tau-2)|)."""
    if n < 16:
        raise ValueError("characteristic_sum needs n >= 16")
    if not 2.0 < tau < 3.0:
        raise ValueError("tau must lie in (2,3)")
    m = characteristic_terms(n, tau)
    if m == 0:
        return 0.0
    return float(np.sum(explosion_terms(w, m, tau)))


def characteristic_terms(n, tau):
    return int(math.floor(math.log(math.log(n)) / abs(math.log(tau - 2.0))))


@dataclass
class MinTailThreshold:
    z: float
    target: float        # N^-(1+xi)
    guarantee: float     # lower bound on P(min of N > z)
    degenerate: bool     # cdf(z) exceeds target, guarantee does not apply


def min_tail_threshold(w: WeightDist, N, xi) -> MinTailThreshold:
    """z = ginv(N^-(1+xi)), so that P(min of N draws > z) >= 1 - N^-xi."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if not xi > 0:
        raise ValueError("xi must be positive")
    logt = -(1.0 + xi) * math.log(N)
    z = float(w.ginv_log(logt))
    target = math.exp(logt)
    degenerate = float(w.cdf(z)) > target * (1 + 1e-9)
    return MinTailThreshold(z, target, 1.0 - N ** (-xi), degenerate)


def mean_is_finite(w: WeightDist, upper=1e8, ratio_cut=0.9):
    """Numeric test for E[L] < inf.

    Integrates 1 - F over decades up to ``upper``; a power tail t^-a gives
    decade increments with ratio 10^(1-a), so the mean is declared finite
    when the last ratio is below ``ratio_cut`` or the increments vanish.
    """
    edges = 10.0 ** np.arange(-6, int(round(math.log10(upper))) + 1)
    incs = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        f = lambda s: float(w.sf(math.exp(s))) * math.exp(s)
        val, _ = integrate.quad(f, math.log(lo), math.log(hi), limit=200)
        incs.append(val)
    incs = np.array(incs)
    total = incs.sum() + edges[0]
    a, b = incs[-2], incs[-1]
    if b <= 1e-12 * total:
        return True
    return bool(b / a < ratio_cut)


@dataclass
class BudgetSteps:
    z: float        # real solution (finite-mean case: a^delta)
    steps: int      # floor(z)
    case: str       # "finite-mean", "infinite-mean" or "dominated"
    residual: float = float("nan")


def budget_steps(w: WeightDist, a_m, delta, eps2=0.1) -> BudgetSteps:
    """Step budget z such that z g^-1(z^(1+eps2)) = a^(1-delta), g = 1/(1-F).

    Finite-mean laws use z = a^delta instead.  The real root is kept in
    ``z``; ``steps`` is its integer part.
    """
    if not a_m > 1:
        raise ValueError("a_m must exceed 1")
    if mean_is_finite(w):
        z = a_m ** delta
        return BudgetSteps(z, int(math.floor(z)), "finite-mean")
    rhs = a_m ** (1.0 - delta)

    def h(z):
        return z * float(w.isf(z ** -(1.0 + eps2))) - rhs

    lo, hi = 1.0 + 1e-9, 2.0
    try:
        if h(lo) > 0:
            return BudgetSteps(float("nan"), 0, "dominated")
        while h(hi) < 0:
            hi *= 2.0
            if hi > 1e300:
                return BudgetSteps(float("nan"), 0, "dominated")
        z = optimize.brentq(h, lo, hi, xtol=1e-12, rtol=1e-14)
    except (ValueError, OverflowError, FloatingPointError):
        return BudgetSteps(float("nan"), 0, "dominated")
    lhs = z * float(w.isf(z ** -(1.0 + eps2)))
    return BudgetSteps(z, int(math.floor(z)), "infinite-mean", lhs / rhs)
