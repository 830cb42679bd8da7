"""Brute-force reference implementations the fast code is tested against.

Everything here trades speed for obviousness: full scans, dense linear
algebra, no acceleration structures.
"""

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra


def first_hit_scan(tri, origin, direction, t_min=0.0):
    """First ray-triangle hit by testing every triangle (Moller-Trumbore).

    Returns (face, t) with face -1 on a miss.  t is measured in units of
    the (possibly non-unit) direction, matching the fast path.
    """
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - tri[:, 0]
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1 + 1e-12) & (t > t_min)
    if not np.any(hit):
        return -1, np.inf
    idx = np.flatnonzero(hit)
    best = idx[np.argmin(t[idx])]
    return int(best), float(t[best])


def uv_contain_scan(corner_uvs, query, slack=1e-8):
    """Faces whose uv triangle contains the query, by full scan."""
    out = []
    for f, tri in enumerate(corner_uvs):
        d1 = tri[0] - tri[2]
        d2 = tri[1] - tri[2]
        det = d1[0] * d2[1] - d2[0] * d1[1]
        if abs(det) <= 2e-12:
            continue
        r = query - tri[2]
        w1 = (r[0] * d2[1] - d2[0] * r[1]) / det
        w2 = (d1[0] * r[1] - r[0] * d1[1]) / det
        w3 = 1.0 - w1 - w2
        if w1 >= -slack and w2 >= -slack and w3 >= -slack:
            out.append(f)
    return out


def ring_graph_distance(mesh, seeds, rings=4):
    """Dijkstra over the Euclidean graph of all vertex pairs within
    `rings` one-ring hops.  Exact chords, so on a flat sheet this bounds
    the true geodesic tightly from above."""
    adj = (mesh.vertex_adjacency() > 0).astype(np.int8)
    reach = adj + sparse.identity(mesh.n_vertices, dtype=np.int8, format="csr")
    grown = reach
    for _ in range(rings - 1):
        grown = (grown @ reach) > 0
    grown = sparse.triu(grown.tocoo(), k=1)
    i, j = grown.row, grown.col
    w = np.linalg.norm(mesh.vertices[i] - mesh.vertices[j], axis=1)
    graph = sparse.csr_matrix((w, (i, j)), shape=(mesh.n_vertices,) * 2)
    dist = dijkstra(graph, directed=False, indices=np.asarray(seeds))
    return dist.min(axis=0) if dist.ndim == 2 else dist


def central_diff(f, x, h=1e-6):
    """Central-difference gradient of scalar f at flat array x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = f()
        flat[i] = keep - h
        fm = f()
        flat[i] = keep
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(got, want):
    scale = max(np.max(np.abs(got)), np.max(np.abs(want)), 1e-12)
    return np.max(np.abs(got - want)) / scale
