"""Configuration model: uniform half-edge matching, i.i.d. weights, erasure."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import _kernels
from .degrees import DegreeSequence


class _EdgeGraph:
    """Edge arrays plus a lazily built 1-based CSR adjacency."""
    kind = "?"

    def __init__(self, n, u, v, weight, seed=None):
        self.n = int(n)
        self.u = np.ascontiguousarray(u, dtype=np.int32)
        self.v = np.ascontiguousarray(v, dtype=np.int32)
        self.weight = np.ascontiguousarray(weight, dtype=np.float64)
        self.seed = seed
        self._csr = None

    @property
    def m(self):
        return int(self.u.size)

    def __len__(self):
        return self.m

    @property
    def edges(self):
        """List of (u, v, weight); meant for small graphs."""
        return list(zip(self.u.tolist(), self.v.tolist(), self.weight.tolist()))

    def csr(self):
        """(indptr, nbr, wt, eid) with neighbours of x in nbr[indptr[x]:indptr[x+1]]."""
        if self._csr is None:
            self._csr = _kernels.build_csr(self.n, self.u, self.v, self.weight)
        return self._csr

    def adjacency(self, x):
        """Incident edge indices of vertex x (a self-loop is listed twice)."""
        indptr, _, _, eid = self.csr()
        return eid[indptr[x]:indptr[x + 1]]

    def neighbours(self, x):
        indptr, nbr, wt, _ = self.csr()
        return nbr[indptr[x]:indptr[x + 1]], wt[indptr[x]:indptr[x + 1]]

    def degree_array(self):
        """Degrees indexed 1..n (entry 0 unused); self-loops count twice."""
        d = np.bincount(self.u, minlength=self.n + 1) + np.bincount(self.v, minlength=self.n + 1)
        return d.astype(np.int64)

    def with_weights(self, weight):
        """Same edges, new weight vector."""
        g = self.__class__.__new__(self.__class__)
        g.__dict__.update(self.__dict__)
        g.weight = np.ascontiguousarray(weight, dtype=np.float64)
        g._csr = None
        return g


class MultiGraph(_EdgeGraph):
    """Configuration-model multigraph; self-loops and parallel edges kept.

    Edge ``e`` joins ``u[e]`` and ``v[e]`` through half-edges
    ``half_edges[e]`` and carries ``weight[e]``.
    """
    kind = "multi"

    def __init__(self, n, u, v, weight, half_edges=None, degrees=None, seed=None):
        super().__init__(n, u, v, weight, seed)
        self.half_edges = half_edges
        if degrees is None:
            degrees = self.degree_array()[1:]
        self.degrees = np.asarray(degrees, dtype=np.int64)

    def degree_of(self, x):
        return int(self.degrees[x - 1])


class ErasedGraph(_EdgeGraph):
    """Simple graph left after erasure; ``provenance[e]`` is the source edge index."""
    kind = "erased"

    def __init__(self, n, u, v, weight, provenance=None, seed=None):
        super().__init__(n, u, v, weight, seed)
        self.provenance = provenance

    @property
    def simple_edges(self):
        return self.edges


def _as_sequence(ds):
    if isinstance(ds, DegreeSequence):
        return ds.degrees
    d = np.asarray(ds, dtype=np.int64)
    if d.sum() % 2:
        raise ValueError("odd number of half-edges")
    return d


def match_half_edges(degrees, rng):
    """Uniform perfect matching: shuffle half-edges, pair positions (2i, 2i+1).

    Returns (u, v, pairs) with 1-based endpoints and the (m, 2) half-edge ids.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    H = int(degrees.sum())
    if H % 2:
        raise ValueError("odd number of half-edges")
    owner = np.repeat(np.arange(1, degrees.size + 1, dtype=np.int32), degrees)
    pairs = rng.permutation(H).astype(np.int32).reshape(-1, 2)
    return owner[pairs[:, 0]], owner[pairs[:, 1]], pairs


def build(ds, w, seed) -> MultiGraph:
    """Configuration model on ``ds`` with i.i.d. weights from ``w``."""
    d = _as_sequence(ds)
    if d.size < 2:
        raise ValueError("need at least two vertices")
    rng = np.random.default_rng(seed)
    u, v, pairs = match_half_edges(d, rng)
    weight = np.asarray(w.sample(rng, u.size), dtype=np.float64)
    return MultiGraph(d.size, u, v, weight, half_edges=pairs, degrees=d, seed=seed)


def erase(g: MultiGraph, seed) -> ErasedGraph:
    """Drop self-loops and keep one uniformly chosen edge per parallel class.

    The edges are put in uniformly random order and then stably sorted by
    endpoint pair; the first edge of each class survives.  The choice never
    looks at the weights.
    """
    rng = np.random.default_rng(seed)
    keep = np.flatnonzero(g.u != g.v)
    keep = keep[rng.permutation(keep.size)]
    lo = np.minimum(g.u[keep], g.v[keep])
    hi = np.maximum(g.u[keep], g.v[keep])
    key = lo.astype(np.int64) * (g.n + 1) + hi
    order = np.argsort(key, kind="stable")
    ks = key[order]
    del key
    first = np.ones(ks.size, dtype=bool)
    first[1:] = ks[1:] != ks[:-1]
    sel = order[first]
    chosen = keep[sel]
    return ErasedGraph(g.n, lo[sel], hi[sel], g.weight[chosen],
                       provenance=chosen, seed=seed)


def export_graph(g, path):
    """Write ``u v weight`` lines under a ``# n=.. type=.. seed=..`` header."""
    path = Path(path)
    header = f"# n={g.n} type={g.kind} seed={g.seed}"
    try:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for a, b, x in zip(g.u.tolist(), g.v.tolist(), g.weight.tolist()):
                fh.write(f"{a} {b} {x!r}\n")
    except OSError as exc:
        raise OSError(f"cannot write edge list {path}: {exc}") from exc


def import_graph(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read edge list {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    n = int(meta["n"])
    seed = meta.get("seed")
    seed = None if seed in (None, "None") else int(seed)
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    u = np.array([int(r[0]) for r in rows], dtype=np.int32)
    v = np.array([int(r[1]) for r in rows], dtype=np.int32)
    w = np.array([float(r[2]) for r in rows], dtype=np.float64)
    if meta.get("type") == "erased":
        return ErasedGraph(n, u, v, w, seed=seed)
    return MultiGraph(n, u, v, w, seed=seed)


export = export_graph


def same_graph(g1, g2):
    """Equality of edge multisets (orientation of each edge ignored)."""
    def canon(g):
        lo = np.minimum(g.u, g.v)
        hi = np.maximum(g.u, g.v)
        order = np.lexsort((g.weight, hi, lo))
        return lo[order], hi[order], g.weight[order]
    if g1.n != g2.n or g1.m != g2.m:
        return False
    return all(np.array_equal(a, b) for a, b in zip(canon(g1), canon(g2)))
