"""Weighted distances, hopcounts, graph distances and BFS shells."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .degrees import size_biased


@dataclass
class DistanceResult:
    weighted: float
    hopcount: int | None
    path: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    @property
    def connected(self):
        return math.isfinite(self.weighted)

    def to_json(self):
        return {"weighted": self.weighted if self.connected else None,
                "hopcount": self.hopcount, "vertices": list(map(int, self.path)),
                "weights": list(map(float, self.weights))}


class Workspace:
    """Scratch arrays for searches on graphs with n vertices.

    Every search leaves the arrays in their initial state, so a workspace is
    reused across queries.  Not thread-safe; each process keeps its own.
    """

    def __init__(self, n):
        self.n = n
        self._dij = None
        self._bfs = None

    def dij(self, side=0):
        if self._dij is None:
            self._dij = [self._alloc_dij() for _ in range(2)]
        return self._dij[side]

    def _alloc_dij(self):
        n1 = self.n + 1
        return (np.full(n1, np.inf), np.full(n1, K.HOPS_INF, np.int32),
                np.zeros(n1, np.bool_), np.full(n1, -1, np.int32),
                np.empty(n1, np.int32), np.empty(n1, np.int32))

    def bfs(self, side=0):
        if self._bfs is None:
            n1 = self.n + 1
            self._bfs = [(np.full(n1, -1, np.int32), np.empty(n1, np.int32)) for _ in range(2)]
        return self._bfs[side]

    def mask(self):
        if getattr(self, "_mask", None) is None:
            self._mask = np.zeros(self.n + 1, np.bool_)
        return self._mask


_WS = {}


def workspace(n) -> Workspace:
    ws = _WS.get(n)
    if ws is None:
        if len(_WS) >= 2:
            _WS.pop(next(iter(_WS)))
        ws = _WS[n] = Workspace(n)
    return ws


def _check_vertex(g, x):
    if not 1 <= x <= g.n:
        raise ValueError(f"vertex {x} outside 1..{g.n}")


def _search(g, sources, targets):
    """Run the masked Dijkstra; returns (hit, scratch) and leaves state for tracing."""
    indptr, nbr, wt, _ = g.csr()
    ws = workspace(g.n)
    dist, hops, settled, pos, heap, touched = ws.dij(0)
    mask = ws.mask()
    targets = np.asarray(targets, dtype=np.int64)
    mask[targets] = True
    try:
        nt, hit = K.dijkstra_lex(indptr, nbr, wt, np.asarray(sources, dtype=np.int64), mask,
                                 dist, hops, settled, pos, heap, touched)
    finally:
        mask[targets] = False
    return hit, nt, ws


def _release(ws, nt):
    dist, hops, settled, pos, heap, touched = ws.dij(0)
    K.reset(touched, nt, dist, hops, settled, pos)


def weighted_distance(g, u, v, path=True) -> DistanceResult:
    """Weighted distance and hopcount between u and v.

    Among minimum-weight paths the one with fewest edges is taken, then the
    lexicographically smallest vertex sequence starting from u.  With
    ``path=False`` a bidirectional search returns only (weight, hops).
    """
    _check_vertex(g, u)
    _check_vertex(g, v)
    if u == v:
        return DistanceResult(0.0, 0, [u], [])
    if not path:
        return _bidir(g, u, v)
    hit, nt, ws = _search(g, [v], [u])
    try:
        if hit < 0:
            return DistanceResult(math.inf, None, [], [])
        dist, hops, settled = ws.dij(0)[:3]
        indptr, nbr, wt, _ = g.csr()
        verts, ws_ = K.trace_path(indptr, nbr, wt, dist, hops, settled, u)
        return DistanceResult(float(dist[u]), int(hops[u]), list(verts), list(ws_))
    finally:
        _release(ws, nt)


def _bidir(g, u, v):
    indptr, nbr, wt, _ = g.csr()
    ws = workspace(g.n)
    f, b = ws.dij(0), ws.dij(1)
    d, h, nf, nb = K.bidir_lex(indptr, nbr, wt, u, v, *f, *b)
    K.reset(f[5], nf, f[0], f[1], f[2], f[3])
    K.reset(b[5], nb, b[0], b[1], b[2], b[3])
    if not math.isfinite(d):
        return DistanceResult(math.inf, None)
    return DistanceResult(float(d), int(h))


def graph_distance(g, u, v):
    """Number of edges on a shortest path (inf when disconnected)."""
    _check_vertex(g, u)
    _check_vertex(g, v)
    if u == v:
        return 0
    indptr, nbr, _, _ = g.csr()
    ws = workspace(g.n)
    (lf, qf), (lb, qb) = ws.bfs(0), ws.bfs(1)
    d, nf, nb = K.bidir_bfs(indptr, nbr, u, v, lf, lb, qf, qb)
    K.reset_levels(qf, nf, lf)
    K.reset_levels(qb, nb, lb)
    return math.inf if d < 0 else int(d)


def distance_to_set(g, u, S) -> DistanceResult:
    """min over x in S of d_L(u, x), with the path to the minimizing x."""
    S = np.unique(np.asarray(list(S), dtype=np.int64))
    if S.size == 0:
        raise ValueError("target set is empty")
    _check_vertex(g, u)
    if S.min() < 1 or S.max() > g.n:
        raise ValueError("target set has vertices outside 1..n")
    hit, nt, ws = _search(g, [u], S)
    try:
        if hit < 0:
            return DistanceResult(math.inf, None, [], [])
        dist, hops, settled = ws.dij(0)[:3]
        indptr, nbr, wt, _ = g.csr()
        verts, wts = K.trace_path(indptr, nbr, wt, dist, hops, settled, hit)
        return DistanceResult(float(dist[hit]), int(hops[hit]), list(verts)[::-1], list(wts)[::-1])
    finally:
        _release(ws, nt)


def single_source(g, sources, targets=()):
    """Full (dist, hops) arrays from a source set; meant for small or medium graphs."""
    hit, nt, ws = _search(g, list(sources), list(targets))
    dist, hops = ws.dij(0)[:2]
    out = dist.copy(), hops.astype(np.int64)
    _release(ws, nt)
    out[1][~np.isfinite(out[0])] = -1
    return out


@dataclass
class ShellDecomposition:
    root: int
    shells: list
    inter_shell_min: np.ndarray

    def lower_bound(self, k):
        """Sum of the inter-shell minima over the first k boundaries."""
        return float(np.sum(self.inter_shell_min[:k]))

    def level_of(self):
        return {int(x): i for i, s in enumerate(self.shells) for x in s}


def shells(g, u, k_max=None) -> ShellDecomposition:
    """BFS shells around u up to depth k_max (default: all reachable)."""
    _check_vertex(g, u)
    indptr, nbr, wt, _ = g.csr()
    ws = workspace(g.n)
    lev, q = ws.bfs(0)
    depth = np.iinfo(np.int32).max - 1 if k_max is None else int(k_max)
    nq = K.bfs_levels(indptr, nbr, np.array([u], np.int64), lev, q, depth)
    try:
        verts = q[:nq].copy()
        levels = lev[verts]
        nlev = int(levels.max()) + 1
        mins = K.shell_minima(indptr, nbr, wt, q, nq, lev, nlev)
    finally:
        K.reset_levels(q, nq, lev)
    order = np.lexsort((verts, levels))
    verts, levels = verts[order], levels[order]
    cuts = np.searchsorted(levels, np.arange(nlev + 1))
    sh = [verts[cuts[i]:cuts[i + 1]].astype(np.int64) for i in range(nlev)]
    return ShellDecomposition(u, sh, mins)


# --- local exploration ---------------------------------------------------

@dataclass
class CouplingReport:
    root: int
    forward_degrees: list      # new vertices found from each explored non-root vertex
    offspring: list            # d_x - 1 for the same vertices (tree value)
    collisions: int
    first_collision_depth: int | None
    volume: int                # half-edges paired during the exploration
    vertices: int
    depth_reached: int
    tv: float = float("nan")


def coupling_probe(g, u, depth=None, max_volume=None, reference=None) -> CouplingReport:
    """BFS from u that records forward degrees and cycle-closing edges.

    Exploration stops after ``depth`` levels or once ``max_volume`` half-edges
    have been paired (two per edge looked at), possibly in the middle of a
    vertex; a vertex explored only in part gives no forward-degree sample.
    Each edge is looked at once; an edge to an already discovered vertex is
    a collision.  ``reference`` is the law to compare forward degrees with
    (default: size-biased law of g).
    """
    _check_vertex(g, u)
    if depth is None and max_volume is None:
        raise ValueError("give depth or max_volume")
    indptr, nbr, _, eid = g.csr()
    deg = indptr[1:] - indptr[:-1]  # deg[x] for 1-based x via index x
    level = {u: 0}
    order = [u]
    volume = 0
    used = set()
    fwd, off = [], []
    collisions, first = 0, None
    head = 0
    depth_reached = 0
    full = True
    while head < len(order) and full:
        x = order[head]
        lx = level[x]
        if depth is not None and lx >= depth:
            break
        if max_volume is not None and volume >= max_volume:
            break
        head += 1
        new = 0
        for k in range(indptr[x], indptr[x + 1]):
            e = int(eid[k])
            if e in used:
                continue
            if max_volume is not None and volume >= max_volume:
                full = False
                break
            used.add(e)
            volume += 2
            y = int(nbr[k])
            if y in level:
                collisions += 1
                if first is None:
                    first = lx + 1
                continue
            level[y] = lx + 1
            order.append(y)
            new += 1
            depth_reached = max(depth_reached, lx + 1)
        if x != u and full:
            fwd.append(new)
            off.append(int(deg[x]) - 1)
    rep = CouplingReport(u, fwd, off, collisions, first, volume, len(order), depth_reached)
    if fwd:
        if reference is None:
            reference = size_biased(g.degree_array()[1:]).probabilities
        rep.tv = lumped_tv(fwd, reference)
    return rep


def lumped_tv(samples, reference, min_expected=50.0):
    """TV distance between an empirical sample and a reference law on merged bins.

    Adjacent support points are merged until each bin expects at least
    ``min_expected`` samples (the remainder joins the last bin), so the
    sampling noise of the statistic is about 0.4 / sqrt(min_expected)
    whatever the sample size.  Samples outside the support fall into the
    first or last bin.
    """
    samples = np.asarray(samples, dtype=np.int64)
    N = samples.size
    ks = np.array(sorted(reference), dtype=np.int64)
    ps = np.array([reference[k] for k in ks], dtype=float)
    lows, mass, acc = [int(ks[0])], [], 0.0
    for k, p in zip(ks, ps):
        if acc * N >= min_expected:
            mass.append(acc)
            lows.append(int(k))
            acc = 0.0
        acc += p
    mass.append(acc)
    if len(mass) > 1 and acc * N < min_expected:
        tail = mass.pop()
        mass[-1] += tail
        lows.pop()
    idx = np.clip(np.searchsorted(np.array(lows), samples, side="right") - 1, 0, len(lows) - 1)
    emp = np.bincount(idx, minlength=len(lows)) / max(N, 1)
    return 0.5 * float(np.abs(emp - np.array(mass)).sum())


# --- constructive upper path ---------------------------------------------

def _edge_weight(g, x, y):
    """Lightest weight among the parallel x-y edges of g."""
    indptr, nbr, wt, _ = g.csr()
    row = slice(indptr[x], indptr[x + 1])
    sel = nbr[row] == y
    return float(wt[row][sel].min()) if sel.any() else math.inf


def _walk_weights(g, path):
    return [_edge_weight(g, x, y) for x, y in zip(path[:-1], path[1:])]


@dataclass
class ConstructedPath:
    path: list
    weights: list
    status: str = "ok"
    profile: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def hops(self):
        return max(len(self.path) - 1, 0)

    @property
    def length(self):
        return float(sum(self.weights))


def climb_to_degree(g, u, k_min, degrees=None) -> ConstructedPath:
    """BFS from u to the first vertex (in BFS order) of degree >= k_min.

    The choice uses only the graph structure, never the weights.
    """
    _check_vertex(g, u)
    deg = g.degree_array() if degrees is None else degrees
    indptr, nbr, _, _ = g.csr()
    parent = {u: 0}
    queue = [u]
    head = 0
    while head < len(queue):
        x = queue[head]
        head += 1
        if deg[x] >= k_min:
            path = [x]
            while parent[path[-1]]:
                path.append(parent[path[-1]])
            path.reverse()
            return ConstructedPath(path, _walk_weights(g, path))
        for y in nbr[indptr[x]:indptr[x + 1]].tolist():
            if y not in parent:
                parent[y] = x
                queue.append(y)
    return ConstructedPath([u], [], f"no vertex of degree >= {k_min} reachable")


def greedy_layer_path(pg, start, y, target=None) -> ConstructedPath:
    """Ascend through the layers {kept-degree >= y[i]} in the percolated graph.

    From the current vertex in layer i, step to the kept neighbour of largest
    kept-degree (smallest label on ties) provided it lies in layer i + 1;
    stop once the kept-degree reaches ``target`` (default y[-1]).
    """
    y = list(y)
    target = y[-1] if target is None else target
    dr = pg.dr
    if dr[start - 1] < y[0]:
        raise ValueError(f"start {start} has kept-degree {dr[start - 1]} < {y[0]}")
    kg = pg.kept_graph()
    indptr, nbr, _, _ = kg.csr()
    path = [start]
    i = 0
    status = "ok"
    while dr[path[-1] - 1] < target:
        if i + 1 >= len(y):
            status = f"stuck at layer {i}"
            break
        x = path[-1]
        row = nbr[indptr[x]:indptr[x + 1]]
        cand = row[dr[row - 1] >= y[i + 1]]
        if cand.size == 0:
            status = f"stuck at layer {i}"
            break
        best = dr[cand - 1].max()
        path.append(int(cand[dr[cand - 1] == best].min()))
        i += 1
    return ConstructedPath(path, _walk_weights(kg, path), status,
                           [int(dr[x - 1]) for x in path])


def hub_connect(g, a, b, alpha, delta, degrees=None, max_hops=None) -> ConstructedPath:
    """Join a and b through vertices of degree >= n^(1/2 + delta).

    Intermediate vertices must all be hubs.  Paths with fewest edges are
    preferred, then smallest weight.  At most 3 edges on a multigraph and 5
    on an erased graph unless ``max_hops`` says otherwise.  ``g`` may be a
    percolated graph, in which case its base graph and original degrees are
    used.
    """
    n = getattr(g, "n", None)
    if hasattr(g, "kept"):
        g = g.base
    n = g.n if n is None else n
    if not 0 < delta < alpha - 0.5:
        raise ValueError("delta must lie in (0, alpha - 1/2)")
    if max_hops is None:
        max_hops = 5 if getattr(g, "kind", "multi") == "erased" else 3
    if a == b:
        return ConstructedPath([a], [])
    deg = g.degree_array() if degrees is None else degrees
    hub = np.zeros(g.n + 1, np.bool_)
    hub[1:n + 1] = deg[1:n + 1] >= n ** (0.5 + delta)
    indptr, nbr, wt, _ = g.csr()

    def row(x):
        s = slice(indptr[x], indptr[x + 1])
        return nbr[s], wt[s]

    direct = _edge_weight(g, a, b)
    if math.isfinite(direct):
        return ConstructedPath([a, b], [direct])
    if not hub.any():
        return ConstructedPath([a], [], "hub set empty")
    # layered search: cur maps hub -> (weight, path)
    cur = {a: (0.0, [a])}
    seen = {a}
    for hop in range(1, max_hops + 1):
        best, nxt = None, {}
        for x, (w, p) in cur.items():
            ys, ws = row(x)
            if hop > 1:
                sel = ys == b
                if sel.any():
                    c = (w + float(ws[sel].min()), p + [b])
                    if best is None or c[0] < best[0]:
                        best = c
            if hop == max_hops:
                continue
            m = hub[ys]
            for yy, wy in zip(ys[m].tolist(), ws[m].tolist()):
                if yy in seen:
                    continue
                c = w + wy
                if yy not in nxt or c < nxt[yy][0]:
                    nxt[yy] = (c, p + [yy])
        if best is not None:
            return ConstructedPath(best[1], _walk_weights(g, best[1]))
        seen.update(nxt)
        cur = nxt
        if not cur:
            break
    return ConstructedPath([a], [], f"no hub connection within {max_hops} edges")
