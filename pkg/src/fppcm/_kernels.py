"""numba kernels: CSR assembly, Dijkstra/BFS variants on 1-based CSR graphs.

Vertex ids are 1..n; row 0 of every CSR is empty.  Search routines take a
preallocated workspace and clean up only the entries they touched, so one
workspace serves many queries on a large graph.
"""
import numpy as np
from numba import njit

INF = np.inf
HOPS_INF = 2**30


@njit(cache=True)
def build_csr(n, u, v, w):
    m = u.shape[0]
    deg = np.zeros(n + 2, np.int64)
    for e in range(m):
        deg[u[e] + 1] += 1
        deg[v[e] + 1] += 1
    indptr = np.cumsum(deg)  # indptr[x]..indptr[x+1] is row x
    fill = indptr[:-1].copy()
    nbr = np.empty(2 * m, np.int32)
    wt = np.empty(2 * m, np.float64)
    eid = np.empty(2 * m, np.int32)
    for e in range(m):
        a, b = u[e], v[e]
        k = fill[a]
        nbr[k] = b
        wt[k] = w[e]
        eid[k] = e
        fill[a] = k + 1
        k = fill[b]
        nbr[k] = a
        wt[k] = w[e]
        eid[k] = e
        fill[b] = k + 1
    return indptr[:n + 2], nbr, wt, eid


# --- indexed binary min-heap keyed on (dist, hops) ---------------------------

@njit(inline="always")
def _less(d1, h1, d2, h2):
    return d1 < d2 or (d1 == d2 and h1 < h2)


@njit(cache=True)
def _sift_up(heap, pos, dist, hops, i):
    x = heap[i]
    while i > 0:
        p = (i - 1) >> 1
        y = heap[p]
        if _less(dist[x], hops[x], dist[y], hops[y]):
            heap[i] = y
            pos[y] = i
            i = p
        else:
            break
    heap[i] = x
    pos[x] = i


@njit(cache=True)
def _sift_down(heap, pos, dist, hops, i, size):
    x = heap[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        r = c + 1
        if r < size and _less(dist[heap[r]], hops[heap[r]], dist[heap[c]], hops[heap[c]]):
            c = r
        y = heap[c]
        if _less(dist[y], hops[y], dist[x], hops[x]):
            heap[i] = y
            pos[y] = i
            i = c
        else:
            break
    heap[i] = x
    pos[x] = i


@njit(cache=True)
def _push_or_decrease(heap, pos, dist, hops, x, size):
    # pos[x] == -1: not in heap
    if pos[x] < 0:
        heap[size] = x
        pos[x] = size
        _sift_up(heap, pos, dist, hops, size)
        return size + 1
    _sift_up(heap, pos, dist, hops, pos[x])
    return size


@njit(cache=True)
def _pop(heap, pos, dist, hops, size):
    x = heap[0]
    pos[x] = -2  # settled marker for the heap only
    size -= 1
    if size > 0:
        y = heap[size]
        heap[0] = y
        pos[y] = 0
        _sift_down(heap, pos, dist, hops, 0, size)
    return x, size


# --- single-source lexicographic Dijkstra -----------------------------------

@njit(cache=True)
def dijkstra_lex(indptr, nbr, wt, sources, tmask, dist, hops, settled, pos, heap, touched):
    """Settle vertices in (dist, hops) order from a source set.

    Stops at the first settled vertex x with tmask[x] (pass an all-False mask
    to run to exhaustion).  Returns (k, hit): touched[:k] lists the vertices
    to reset afterwards and hit is the stopping vertex or -1.
    """
    nt = 0
    size = 0
    hit = -1
    for s in sources:
        if dist[s] == INF:
            touched[nt] = s
            nt += 1
        dist[s] = 0.0
        hops[s] = 0
        if pos[s] == -1:
            size = _push_or_decrease(heap, pos, dist, hops, s, size)
    while size > 0:
        x, size = _pop(heap, pos, dist, hops, size)
        settled[x] = True
        if tmask[x]:
            hit = x
            break
        dx = dist[x]
        hx = hops[x] + 1
        for k in range(indptr[x], indptr[x + 1]):
            y = nbr[k]
            if settled[y]:
                continue
            nd = dx + wt[k]
            if nd < dist[y] or (nd == dist[y] and hx < hops[y]):
                if dist[y] == INF:
                    touched[nt] = y
                    nt += 1
                dist[y] = nd
                hops[y] = hx
                size = _push_or_decrease(heap, pos, dist, hops, y, size)
    for i in range(size):
        pos[heap[i]] = -1
    return nt, hit


@njit(cache=True)
def reset(touched, k, dist, hops, settled, pos):
    for i in range(k):
        x = touched[i]
        dist[x] = INF
        hops[x] = HOPS_INF
        settled[x] = False
        pos[x] = -1


@njit(cache=True)
def trace_path(indptr, nbr, wt, dist, hops, settled, start):
    """Walk from ``start`` down to a source (key (0, 0)) along tight edges.

    At every step the smallest-id tight neighbour is taken, so the vertex
    sequence read from ``start`` is the lexicographically smallest among
    optimal paths.  Returns (vertices, weights) with weights[i] the edge used
    between vertices[i] and vertices[i+1].
    """
    verts = [start]
    ws = [0.0]
    ws.pop()
    c = start
    while hops[c] > 0:
        best = -1
        bw = INF
        for k in range(indptr[c], indptr[c + 1]):
            x = nbr[k]
            if settled[x] and hops[x] + 1 == hops[c] and dist[x] + wt[k] == dist[c]:
                if best < 0 or x < best or (x == best and wt[k] < bw):
                    best = x
                    bw = wt[k]
        if best < 0:
            # rounding slack: closest match among hop-tight neighbours
            err = INF
            for k in range(indptr[c], indptr[c + 1]):
                x = nbr[k]
                if settled[x] and hops[x] + 1 == hops[c]:
                    e = abs(dist[x] + wt[k] - dist[c])
                    if e < err or (e == err and x < best):
                        err = e
                        best = x
                        bw = wt[k]
        verts.append(best)
        ws.append(bw)
        c = best
    return verts, ws


# --- bidirectional lexicographic Dijkstra ------------------------------------

@njit(cache=True)
def bidir_lex(indptr, nbr, wt, s, t,
              dist_f, hops_f, set_f, pos_f, heap_f, tch_f,
              dist_b, hops_b, set_b, pos_b, heap_b, tch_b):
    """Lexicographically smallest (weight, hops) between s and t.

    Returns (weight, hops, nf, nb) with nf, nb the touched counts for reset.
    """
    if s == t:
        return 0.0, 0, 0, 0
    nf = 0
    nb = 0
    dist_f[s] = 0.0
    hops_f[s] = 0
    tch_f[nf] = s
    nf += 1
    dist_b[t] = 0.0
    hops_b[t] = 0
    tch_b[nb] = t
    nb += 1
    sf = _push_or_decrease(heap_f, pos_f, dist_f, hops_f, s, 0)
    sb = _push_or_decrease(heap_b, pos_b, dist_b, hops_b, t, 0)
    best_d = INF
    best_h = HOPS_INF
    while sf > 0 and sb > 0:
        tf = heap_f[0]
        tb = heap_b[0]
        # stop when the two frontier keys together cannot beat the best
        kd = dist_f[tf] + dist_b[tb]
        kh = hops_f[tf] + hops_b[tb]
        if not _less(kd, kh, best_d, best_h):
            break
        if _less(dist_f[tf], hops_f[tf], dist_b[tb], hops_b[tb]):
            x, sf = _pop(heap_f, pos_f, dist_f, hops_f, sf)
            set_f[x] = True
            dx = dist_f[x]
            hx = hops_f[x] + 1
            for k in range(indptr[x], indptr[x + 1]):
                y = nbr[k]
                nd = dx + wt[k]
                if dist_b[y] < INF:
                    cd = nd + dist_b[y]
                    ch = hx + hops_b[y]
                    if _less(cd, ch, best_d, best_h):
                        best_d = cd
                        best_h = ch
                if set_f[y]:
                    continue
                if nd < dist_f[y] or (nd == dist_f[y] and hx < hops_f[y]):
                    if dist_f[y] == INF:
                        tch_f[nf] = y
                        nf += 1
                    dist_f[y] = nd
                    hops_f[y] = hx
                    sf = _push_or_decrease(heap_f, pos_f, dist_f, hops_f, y, sf)
        else:
            x, sb = _pop(heap_b, pos_b, dist_b, hops_b, sb)
            set_b[x] = True
            dx = dist_b[x]
            hx = hops_b[x] + 1
            for k in range(indptr[x], indptr[x + 1]):
                y = nbr[k]
                nd = dx + wt[k]
                if dist_f[y] < INF:
                    cd = nd + dist_f[y]
                    ch = hx + hops_f[y]
                    if _less(cd, ch, best_d, best_h):
                        best_d = cd
                        best_h = ch
                if set_b[y]:
                    continue
                if nd < dist_b[y] or (nd == dist_b[y] and hx < hops_b[y]):
                    if dist_b[y] == INF:
                        tch_b[nb] = y
                        nb += 1
                    dist_b[y] = nd
                    hops_b[y] = hx
                    sb = _push_or_decrease(heap_b, pos_b, dist_b, hops_b, y, sb)
    for i in range(sf):
        pos_f[heap_f[i]] = -1
    for i in range(sb):
        pos_b[heap_b[i]] = -1
    return best_d, best_h, nf, nb


# --- BFS ---------------------------------------------------------------------

@njit(cache=True)
def bidir_bfs(indptr, nbr, s, t, lev_f, lev_b, q_f, q_b):
    """Graph distance by bidirectional BFS; -1 if disconnected.

    lev_* must be -1 everywhere on entry; q_f[:nf], q_b[:nb] list the touched
    vertices on exit.  Returns (distance, nf, nb).
    """
    if s == t:
        return 0, 0, 0
    lev_f[s] = 0
    lev_b[t] = 0
    q_f[0] = s
    q_b[0] = t
    hf, nf, hb, nb = 0, 1, 0, 1
    df, db = 0, 0
    while hf < nf and hb < nb:
        # expand the side with the smaller frontier volume, one level at a time
        vol_f = 0
        for i in range(hf, nf):
            vol_f += indptr[q_f[i] + 1] - indptr[q_f[i]]
        vol_b = 0
        for i in range(hb, nb):
            vol_b += indptr[q_b[i] + 1] - indptr[q_b[i]]
        best = -1
        if vol_f <= vol_b:
            end = nf
            for i in range(hf, end):
                x = q_f[i]
                for k in range(indptr[x], indptr[x + 1]):
                    y = nbr[k]
                    if lev_b[y] >= 0:
                        c = df + 1 + lev_b[y]
                        if best < 0 or c < best:
                            best = c
                    if lev_f[y] < 0:
                        lev_f[y] = df + 1
                        q_f[nf] = y
                        nf += 1
            hf = end
            df += 1
        else:
            end = nb
            for i in range(hb, end):
                x = q_b[i]
                for k in range(indptr[x], indptr[x + 1]):
                    y = nbr[k]
                    if lev_f[y] >= 0:
                        c = db + 1 + lev_f[y]
                        if best < 0 or c < best:
                            best = c
                    if lev_b[y] < 0:
                        lev_b[y] = db + 1
                        q_b[nb] = y
                        nb += 1
            hb = end
            db += 1
        if best >= 0:
            return best, nf, nb
    return -1, nf, nb


@njit(cache=True)
def reset_levels(q, k, lev):
    for i in range(k):
        lev[q[i]] = -1


@njit(cache=True)
def bfs_levels(indptr, nbr, sources, lev, q, max_level):
    """Multi-source BFS up to ``max_level``; returns the number of touched vertices."""
    n = 0
    for s in sources:
        if lev[s] < 0:
            lev[s] = 0
            q[n] = s
            n += 1
    h = 0
    while h < n:
        x = q[h]
        h += 1
        if lev[x] >= max_level:
            continue
        for k in range(indptr[x], indptr[x + 1]):
            y = nbr[k]
            if lev[y] < 0:
                lev[y] = lev[x] + 1
                q[n] = y
                n += 1
    return n


@njit(cache=True)
def shell_minima(indptr, nbr, wt, q, nq, lev, nlev):
    """Minimum edge weight between BFS levels i and i+1, for i < nlev - 1."""
    out = np.full(max(nlev - 1, 0), INF)
    for i in range(nq):
        x = q[i]
        lx = lev[x]
        if lx >= nlev - 1:
            continue
        for k in range(indptr[x], indptr[x + 1]):
            if lev[nbr[k]] == lx + 1 and wt[k] < out[lx]:
                out[lx] = wt[k]
    return out
