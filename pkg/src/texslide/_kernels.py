"""Numba kernels: BVH build/traversal, watertight ray-triangle intersection,
fast-marching geodesic distance, upwind field fill, splat accumulation.

Everything here is deterministic: builds are single-threaded with index
tie-breaks, traversals depend only on the built structure, and the heap
orders ties by vertex id.
"""

import numpy as np
from numba import njit

LEAF_SIZE = 4


# ---------------------------------------------------------------------------
# BVH build (median split on the longest centroid axis)

@njit(cache=True)
def build_bvh(lo, hi, centroids):
    """Build a flat BVH over boxes [lo, hi] with centroid median splits.

    Returns node boxes, child links (-1 for leaves), leaf ranges into the
    permutation array, and the permutation itself.
    """
    n = lo.shape[0]
    max_nodes = max(2 * n, 1)
    node_lo = np.empty((max_nodes, 3))
    node_hi = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    start = np.zeros(max_nodes, np.int32)
    count = np.zeros(max_nodes, np.int32)
    perm = np.arange(n)

    stack_node = np.empty(64 + 2 * n, np.int32)
    stack_lo = np.empty(64 + 2 * n, np.int32)
    stack_hi = np.empty(64 + 2 * n, np.int32)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        a = stack_lo[sp]
        b = stack_hi[sp]
        # Box over the range, and centroid bounds for the split axis.
        for k in range(3):
            node_lo[node, k] = np.inf
            node_hi[node, k] = -np.inf
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for i in range(a, b):
            f = perm[i]
            for k in range(3):
                if lo[f, k] < node_lo[node, k]:
                    node_lo[node, k] = lo[f, k]
                if hi[f, k] > node_hi[node, k]:
                    node_hi[node, k] = hi[f, k]
                c = centroids[f, k]
                if c < clo[k]:
                    clo[k] = c
                if c > chi[k]:
                    chi[k] = c
        extent = chi - clo
        axis = 0
        if extent[1] > extent[axis]:
            axis = 1
        if extent[2] > extent[axis]:
            axis = 2
        if b - a <= LEAF_SIZE or extent[axis] <= 0.0:
            start[node] = a
            count[node] = b - a
            continue
        # Median split: sort the range by centroid on the chosen axis.
        m = b - a
        keys = np.empty(m)
        for i in range(m):
            keys[i] = centroids[perm[a + i], axis]
        order = np.argsort(keys)
        tmp = np.empty(m, perm.dtype)
        for i in range(m):
            tmp[i] = perm[a + order[i]]
        for i in range(m):
            perm[a + i] = tmp[i]
        mid = a + m // 2
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        left[node] = lchild
        right[node] = rchild
        stack_node[sp] = lchild
        stack_lo[sp] = a
        stack_hi[sp] = mid
        sp += 1
        stack_node[sp] = rchild
        stack_lo[sp] = mid
        stack_hi[sp] = b
        sp += 1
    return (node_lo[:n_nodes], node_hi[:n_nodes], left[:n_nodes],
            right[:n_nodes], start[:n_nodes], count[:n_nodes], perm)


# ---------------------------------------------------------------------------
# Watertight ray-triangle intersection (shear + 2D edge functions)

@njit(cache=True)
def _ray_shear(d):
    kz = 0
    if abs(d[1]) > abs(d[kz]):
        kz = 1
    if abs(d[2]) > abs(d[kz]):
        kz = 2
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]
    return kx, ky, kz, sx, sy, sz


@njit(cache=True)
def _tri_hit(tri, f, o, kx, ky, kz, sx, sy, sz, t_min, t_best):
    """Intersect one triangle; returns (t, u, v, w) or t = -1 on miss.

    Both orientations hit.  Edge functions of shared edges are computed
    from identical operands in adjacent triangles, so rays through shared
    edges cannot slip between them.
    """
    ax = tri[f, 0, kx] - o[kx]
    ay = tri[f, 0, ky] - o[ky]
    az = tri[f, 0, kz] - o[kz]
    bx = tri[f, 1, kx] - o[kx]
    by = tri[f, 1, ky] - o[ky]
    bz = tri[f, 1, kz] - o[kz]
    cx = tri[f, 2, kx] - o[kx]
    cy = tri[f, 2, ky] - o[ky]
    cz = tri[f, 2, kz] - o[kz]
    axs = ax - sx * az
    ays = ay - sy * az
    bxs = bx - sx * bz
    bys = by - sy * bz
    cxs = cx - sx * cz
    cys = cy - sy * cz
    u = cxs * bys - cys * bxs
    v = axs * cys - ays * cxs
    w = bxs * ays - bys * axs
    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return -1.0, 0.0, 0.0, 0.0
    det = u + v + w
    if det == 0.0:
        return -1.0, 0.0, 0.0, 0.0
    t = (u * sz * az + v * sz * bz + w * sz * cz) / det
    if t <= t_min or t >= t_best:
        return -1.0, 0.0, 0.0, 0.0
    return t, u / det, v / det, w / det


@njit(cache=True)
def _node_ray_enters(nlo, nhi, node, o, d, t_best):
    """Conservative slab test: does the ray enter the node box before t_best?"""
    t0 = 0.0
    t1 = t_best
    for k in range(3):
        dk = d[k]
        if dk == 0.0:
            if o[k] < nlo[node, k] or o[k] > nhi[node, k]:
                return False
        else:
            inv = 1.0 / dk
            ta = (nlo[node, k] - o[k]) * inv
            tb = (nhi[node, k] - o[k]) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return False
    return True


@njit(cache=True)
def ray_first_hits(node_lo, node_hi, left, right, start, count, perm, tri,
                   origins, dirs, t_min):
    """First hit per ray: returns (face, t, u, v, w); face = -1 on miss.

    A hit needs t_min[r] < t; among hits the smallest t wins.
    """
    n_rays = origins.shape[0]
    out_face = np.full(n_rays, -1, np.int64)
    out_t = np.full(n_rays, np.inf)
    out_u = np.zeros(n_rays)
    out_v = np.zeros(n_rays)
    out_w = np.zeros(n_rays)
    stack = np.empty(128, np.int32)
    for r in range(n_rays):
        o = origins[r]
        d = dirs[r]
        kx, ky, kz, sx, sy, sz = _ray_shear(d)
        best_t = np.inf
        best_f = -1
        bu = 0.0
        bv = 0.0
        bw = 0.0
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _node_ray_enters(node_lo, node_hi, node, o, d, best_t):
                continue
            if left[node] < 0:
                for i in range(start[node], start[node] + count[node]):
                    f = perm[i]
                    t, u, v, w = _tri_hit(tri, f, o, kx, ky, kz, sx, sy, sz,
                                          t_min[r], best_t)
                    if t > 0.0:
                        best_t = t
                        best_f = f
                        bu = u
                        bv = v
                        bw = w
            else:
                stack[sp] = left[node]
                sp += 1
                stack[sp] = right[node]
                sp += 1
        out_face[r] = best_f
        out_t[r] = best_t
        out_u[r] = bu
        out_v[r] = bv
        out_w[r] = bw
    return out_face, out_t, out_u, out_v, out_w


# ---------------------------------------------------------------------------
# 2D point location in uv triangles (BVH boxes with z = 0)

@njit(cache=True)
def uv_locate_counts(node_lo, node_hi, left, right, start, count, perm,
                     uv_tri, queries, slack, eps_det):
    """Pass 1: number of containing uv triangles per query point."""
    nq = queries.shape[0]
    out = np.zeros(nq, np.int64)
    stack = np.empty(128, np.int32)
    for q in range(nq):
        x = queries[q, 0]
        y = queries[q, 1]
        sp = 0
        stack[0] = 0
        sp = 1
        hits = 0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if (x < node_lo[node, 0] or x > node_hi[node, 0] or
                    y < node_lo[node, 1] or y > node_hi[node, 1]):
                continue
            if left[node] < 0:
                for i in range(start[node], start[node] + count[node]):
                    f = perm[i]
                    if _uv_contains(uv_tri, f, x, y, slack, eps_det):
                        hits += 1
            else:
                stack[sp] = left[node]
                sp += 1
                stack[sp] = right[node]
                sp += 1
        out[q] = hits
    return out


@njit(cache=True)
def _uv_contains(uv_tri, f, x, y, slack, eps_det):
    x1 = uv_tri[f, 0, 0]
    y1 = uv_tri[f, 0, 1]
    x2 = uv_tri[f, 1, 0]
    y2 = uv_tri[f, 1, 1]
    x3 = uv_tri[f, 2, 0]
    y3 = uv_tri[f, 2, 1]
    det = (x1 - x3) * (y2 - y3) - (x2 - x3) * (y1 - y3)
    if abs(det) <= eps_det:
        return False
    w1 = ((x - x3) * (y2 - y3) - (x2 - x3) * (y - y3)) / det
    w2 = ((x1 - x3) * (y - y3) - (x - x3) * (y1 - y3)) / det
    w3 = 1.0 - w1 - w2
    return w1 >= -slack and w2 >= -slack and w3 >= -slack


@njit(cache=True)
def uv_locate_fill(node_lo, node_hi, left, right, start, count, perm,
                   uv_tri, queries, slack, eps_det, offsets,
                   out_face, out_w):
    """Pass 2: fill faces and weights at offsets computed from pass 1."""
    nq = queries.shape[0]
    stack = np.empty(128, np.int32)
    for q in range(nq):
        x = queries[q, 0]
        y = queries[q, 1]
        pos = offsets[q]
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if (x < node_lo[node, 0] or x > node_hi[node, 0] or
                    y < node_lo[node, 1] or y > node_hi[node, 1]):
                continue
            if left[node] < 0:
                for i in range(start[node], start[node] + count[node]):
                    f = perm[i]
                    x1 = uv_tri[f, 0, 0]
                    y1 = uv_tri[f, 0, 1]
                    x2 = uv_tri[f, 1, 0]
                    y2 = uv_tri[f, 1, 1]
                    x3 = uv_tri[f, 2, 0]
                    y3 = uv_tri[f, 2, 1]
                    det = (x1 - x3) * (y2 - y3) - (x2 - x3) * (y1 - y3)
                    if abs(det) <= eps_det:
                        continue
                    w1 = ((x - x3) * (y2 - y3) - (x2 - x3) * (y - y3)) / det
                    w2 = ((x1 - x3) * (y - y3) - (x - x3) * (y1 - y3)) / det
                    w3 = 1.0 - w1 - w2
                    if w1 >= -slack and w2 >= -slack and w3 >= -slack:
                        out_face[pos] = f
                        out_w[pos, 0] = w1
                        out_w[pos, 1] = w2
                        out_w[pos, 2] = w3
                        pos += 1
            else:
                stack[sp] = left[node]
                sp += 1
                stack[sp] = right[node]
                sp += 1
    return None


# ---------------------------------------------------------------------------
# Fast marching on a triangulated surface

@njit(cache=True)
def _heap_push(heap_d, heap_i, hn, d, i):
    heap_d[hn] = d
    heap_i[hn] = i
    j = hn
    while j > 0:
        p = (j - 1) >> 1
        if heap_d[p] > heap_d[j] or (heap_d[p] == heap_d[j]
                                     and heap_i[p] > heap_i[j]):
            heap_d[p], heap_d[j] = heap_d[j], heap_d[p]
            heap_i[p], heap_i[j] = heap_i[j], heap_i[p]
            j = p
        else:
            break
    return hn + 1


@njit(cache=True)
def _heap_pop(heap_d, heap_i, hn):
    d = heap_d[0]
    i = heap_i[0]
    hn -= 1
    heap_d[0] = heap_d[hn]
    heap_i[0] = heap_i[hn]
    j = 0
    while True:
        l = 2 * j + 1
        r = l + 1
        m = j
        if l < hn and (heap_d[l] < heap_d[m] or (heap_d[l] == heap_d[m]
                                                 and heap_i[l] < heap_i[m])):
            m = l
        if r < hn and (heap_d[r] < heap_d[m] or (heap_d[r] == heap_d[m]
                                                 and heap_i[r] < heap_i[m])):
            m = r
        if m == j:
            break
        heap_d[m], heap_d[j] = heap_d[j], heap_d[m]
        heap_i[m], heap_i[j] = heap_i[j], heap_i[m]
        j = m
    return d, i, hn


@njit(cache=True)
def _edge_len(verts, a, b):
    dx = verts[a, 0] - verts[b, 0]
    dy = verts[a, 1] - verts[b, 1]
    dz = verts[a, 2] - verts[b, 2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True)
def _vertex_update(w, verts, dist, frozen,
                   tri_indptr, tri_a, tri_b,
                   nbr_indptr, nbr):
    """Best tentative distance for vertex w from frozen sources.

    Triangle (eikonal) updates where the quadratic is causal and upwind;
    two-edge Dijkstra relaxation otherwise and always as a floor.
    """
    best = np.inf
    for j in range(nbr_indptr[w], nbr_indptr[w + 1]):
        u = nbr[j]
        if frozen[u]:
            cand = dist[u] + _edge_len(verts, u, w)
            if cand < best:
                best = cand
    for j in range(tri_indptr[w], tri_indptr[w + 1]):
        a = tri_a[j]
        b = tri_b[j]
        if not (frozen[a] and frozen[b]):
            continue
        da = dist[a]
        db = dist[b]
        p1x = verts[a, 0] - verts[w, 0]
        p1y = verts[a, 1] - verts[w, 1]
        p1z = verts[a, 2] - verts[w, 2]
        p2x = verts[b, 0] - verts[w, 0]
        p2y = verts[b, 1] - verts[w, 1]
        p2z = verts[b, 2] - verts[w, 2]
        g11 = p1x * p1x + p1y * p1y + p1z * p1z
        g12 = p1x * p2x + p1y * p2y + p1z * p2z
        g22 = p2x * p2x + p2y * p2y + p2z * p2z
        det = g11 * g22 - g12 * g12
        if det <= 1e-300:
            continue
        q11 = g22 / det
        q12 = -g12 / det
        q22 = g11 / det
        alpha = q11 + 2.0 * q12 + q22
        beta = (q11 + q12) * da + (q12 + q22) * db
        gamma = q11 * da * da + 2.0 * q12 * da * db + q22 * db * db - 1.0
        disc = beta * beta - alpha * gamma
        if disc < 0.0 or alpha <= 0.0:
            continue
        t = (beta + np.sqrt(disc)) / alpha
        if t < da or t < db:
            continue
        # Upwind check: the gradient must point into the triangle.
        c1 = q11 * (t - da) + q12 * (t - db)
        c2 = q12 * (t - da) + q22 * (t - db)
        if c1 <= 0.0 or c2 <= 0.0:
            continue
        if t < best:
            best = t
    return best


@njit(cache=True)
def fmm_distance(verts, tri_indptr, tri_a, tri_b, nbr_indptr, nbr, seeds):
    """Geodesic distance from the seed set by fast marching.

    Vertices in components with no seed keep +inf.
    """
    n = verts.shape[0]
    dist = np.full(n, np.inf)
    frozen = np.zeros(n, np.uint8)
    cap = 2 * len(nbr) + n + 16
    heap_d = np.empty(cap)
    heap_i = np.empty(cap, np.int64)
    hn = 0
    for k in range(len(seeds)):
        s = seeds[k]
        dist[s] = 0.0
        hn = _heap_push(heap_d, heap_i, hn, 0.0, s)
    while hn > 0:
        d0, v, hn = _heap_pop(heap_d, heap_i, hn)
        if frozen[v]:
            continue
        if d0 > dist[v]:
            continue
        frozen[v] = 1
        for j in range(nbr_indptr[v], nbr_indptr[v + 1]):
            w = nbr[j]
            if frozen[w]:
                continue
            nd = _vertex_update(w, verts, dist, frozen,
                                tri_indptr, tri_a, tri_b, nbr_indptr, nbr)
            if nd < dist[w]:
                dist[w] = nd
                hn = _heap_push(heap_d, heap_i, hn, nd, w)
    return dist


@njit(cache=True)
def upwind_fill(order, nbr_indptr, nbr, verts, dist, values, valued):
    """Fill unvalued vertices in increasing-distance order.

    Each gets the inverse-edge-length weighted average of valued one-ring
    neighbors at strictly smaller distance (valued ones at equal distance
    as a tie fallback).  The running average is clamped to the range of
    its contributors, so a constant neighborhood propagates bitwise and
    the maximum principle is exact.  Vertices with no finite distance are
    left alone.
    """
    c = values.shape[1]
    mn = np.empty(c)
    mx = np.empty(c)
    for oi in range(len(order)):
        w = order[oi]
        if valued[w] or not np.isfinite(dist[w]):
            continue
        wsum = 0.0
        first = True
        strict = True
        for _pass in range(2):
            for j in range(nbr_indptr[w], nbr_indptr[w + 1]):
                u = nbr[j]
                if not valued[u]:
                    continue
                if strict and not dist[u] < dist[w]:
                    continue
                el = _edge_len(verts, u, w)
                if el < 1e-300:
                    el = 1e-300
                wt = 1.0 / el
                wsum += wt
                if first:
                    first = False
                    for k in range(c):
                        values[w, k] = values[u, k]
                        mn[k] = values[u, k]
                        mx[k] = values[u, k]
                else:
                    frac = wt / wsum
                    for k in range(c):
                        values[w, k] += frac * (values[u, k] - values[w, k])
                        if values[u, k] < mn[k]:
                            mn[k] = values[u, k]
                        if values[u, k] > mx[k]:
                            mx[k] = values[u, k]
            if wsum > 0.0:
                break
            strict = False
        if wsum > 0.0:
            for k in range(c):
                if values[w, k] < mn[k]:
                    values[w, k] = mn[k]
                elif values[w, k] > mx[k]:
                    values[w, k] = mx[k]
            valued[w] = 1
    return None


@njit(cache=True)
def splat_mean(pix, weights, values, out_val, out_wsum):
    """Incremental weighted mean per pixel, sequential and stable.

    out_val[p] becomes the weighted mean of all values splatted to p.
    Splatting one constant leaves it bitwise intact.
    """
    c = values.shape[1]
    for s in range(len(pix)):
        p = pix[s]
        w = weights[s]
        if w <= 0.0:
            continue
        out_wsum[p] += w
        frac = w / out_wsum[p]
        for k in range(c):
            out_val[p, k] += frac * (values[s, k] - out_val[p, k])
    return None
