"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .degrees import TailParams
from .percolation import PercolationSpec, parse_percolation
from .weights import Constant, WeightDist, parse_weight

EXPERIMENTS = ("ratio", "upper-path", "multi-edge", "percolation-eq", "bp-explosion", "tail-check")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "ratio"
    n_list: tuple = (10**5,)
    tau: float = 2.5
    gamma: float = 0.5
    C: float = 1.0
    alpha: float | None = None
    weight: WeightDist = field(default_factory=lambda: Constant(1.0))
    percolation: PercolationSpec = field(default_factory=PercolationSpec)
    pairs_per_graph: int = 100
    replicas: int = 1
    seed: int = 0
    mode: str = "multigraph"
    # upper path
    ktilde: int | None = None      # default ceil((log n)^0.8)
    epsilon: float = 1.0
    delta: float = 0.05
    layer_D: float = 0.0
    # branching process
    bp_runs: int = 50
    bp_batches: int = 10
    bp_kmax: int = 8
    node_cap: int = 10**6
    beam: int = 1000
    # percolation equality / tail checks
    eq_replicas: int = 10**4

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.mode not in ("multigraph", "erased"):
            raise ConfigError(f"mode must be multigraph or erased, not {self.mode!r}")
        if not self.n_list or min(self.n_list) < 16:
            raise ConfigError("every n must be at least 16")
        if self.pairs_per_graph < 1 or self.replicas < 1:
            raise ConfigError("pairs_per_graph and replicas must be at least 1")
        if isinstance(self.weight, Constant) and self.weight.value == 0:
            raise ConfigError("constant(0) weights make every distance zero")
        try:
            self.tail_params
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def tail_params(self) -> TailParams:
        return TailParams(self.tau, self.gamma, self.C, self.alpha)

    def ktilde_for(self, n):
        if self.ktilde is not None:
            return int(self.ktilde)
        return math.ceil(math.log(n) ** 0.8)

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, WeightDist):
                v = v.to_string()
            elif isinstance(v, PercolationSpec):
                v = v.to_string()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _number(text):
    x = float(text)
    if x.is_integer() and abs(x) < 2**63:
        return int(x)
    return x


def _int(text):
    x = _number(text)
    if not isinstance(x, int):
        raise ValueError(f"expected an integer, got {text!r}")
    return x


_PARSERS = {
    "experiment": str, "mode": str,
    "n_list": lambda s: tuple(_int(t) for t in s.replace(",", " ").split()),
    "tau": float, "gamma": float, "C": float, "epsilon": float, "delta": float,
    "layer_D": float,
    "alpha": lambda s: None if s.lower() in ("", "auto", "none") else float(s),
    "ktilde": lambda s: None if s.lower() in ("", "auto", "none") else _int(s),
    "weight": parse_weight, "percolation": parse_percolation,
    "pairs_per_graph": _int, "replicas": _int, "seed": _int, "bp_runs": _int,
    "bp_batches": _int, "bp_kmax": _int, "node_cap": _int, "beam": _int, "eq_replicas": _int,
}


def parse_config(text) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None,
                                   delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    kw = {}
    for key, raw in cp["run"].items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            kw[key] = _PARSERS[key](raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def stage_seed(master, n, replica, stage):
    """Seed for one stage of one replica: SeedSequence([master, n, replica, stage])."""
    return np.random.SeedSequence([int(master), int(n), int(replica), int(stage)])


# stage ids
DEGREES, GRAPH, ERASE, PAIRS, PERCOLATE = range(5)
