"""Filling unassigned field regions from assigned ones.

Geodesic distance to the assigned set is computed by fast marching on
the triangulated surface; unassigned vertices are then valued in
increasing-distance order from their strictly-closer neighbors (upwind),
and optionally relaxed by Jacobi averaging that keeps assigned values
fixed.  Components containing no assigned vertex get the mean of the
assigned values: there is no signal to extrapolate there, and the mean
keeps constants and the maximum principle intact.
"""

import numpy as np

from . import _kernels
from .slidegen import TSField, SOURCE_RAY, SOURCE_EXT

SMOOTH_ITERS_DEFAULT = 10


def _neighbor_csr(mesh):
    e = mesh.edges()
    n = mesh.n_vertices
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(cols[order])


def _opposite_pair_csr(mesh):
    """Per vertex: the opposite (a, b) vertex pairs of its incident faces."""
    f = mesh.faces_v.astype(np.int64)
    w = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    a = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    b = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    n = mesh.n_vertices
    order = np.argsort(w, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(w, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(a[order]), np.ascontiguousarray(b[order])


def geodesic_distance(mesh, seed_vertices):
    """Fast-marching distance from the seed set.

    Triangle eikonal updates where causal and upwind, two-edge Dijkstra
    relaxation otherwise; +inf on components without a seed.
    """
    seeds = np.asarray(seed_vertices, dtype=np.int64).ravel()
    if len(seeds) == 0:
        raise ValueError("seed set is empty")
    tri_indptr, tri_a, tri_b = _opposite_pair_csr(mesh)
    nbr_indptr, nbr = _neighbor_csr(mesh)
    return _kernels.fmm_distance(mesh.vertices, tri_indptr, tri_a, tri_b,
                                 nbr_indptr, nbr, seeds)


def extrapolate_values(mesh, values, valued):
    """Fill per-vertex values outward from the valued set.

    Works on any (n, c) value array.  Returns (filled values, distance
    field).  Valued entries are never touched (bitwise).  Unreached
    components (no valued vertex) get the per-channel mean of the valued
    set, clipped to its range.
    """
    values = np.array(values, dtype=np.float64, copy=True)
    valued_in = np.asarray(valued, dtype=bool).copy()
    if values.ndim != 2 or len(values) != mesh.n_vertices:
        raise ValueError("values must be (n_vertices, c)")
    if not np.any(valued_in):
        raise ValueError("no valued vertices to extrapolate from")
    seeds = np.flatnonzero(valued_in)
    dist = geodesic_distance(mesh, seeds)
    nbr_indptr, nbr = _neighbor_csr(mesh)
    order = np.argsort(dist, kind="stable")
    state = valued_in.astype(np.uint8)
    _kernels.upwind_fill(order, nbr_indptr, nbr, mesh.vertices, dist,
                         values, state)
    left = state == 0
    if np.any(left):
        src = values[valued_in]
        fill = np.clip(src.mean(axis=0), src.min(axis=0), src.max(axis=0))
        values[left] = fill
    return values, dist


def extrapolate_field(mesh, field):
    """TSField with every unassigned vertex filled; sources become "ext".

    Assigned values pass through bitwise unchanged.
    """
    if field.n_vertices != mesh.n_vertices:
        raise ValueError("field does not match the mesh")
    d, _ = extrapolate_values(mesh, field.d, field.assigned)
    source = field.source.copy()
    source[~field.assigned] = SOURCE_EXT
    out = TSField(d, source)
    out.hit_points = (None if field.hit_points is None
                      else field.hit_points.copy())
    return out


def smooth_field(mesh, field, iterations=SMOOTH_ITERS_DEFAULT):
    """Jacobi one-ring averaging of the extrapolated vertices only.

    Ray-assigned values are Dirichlet-fixed; when any exist, the result
    is clipped per channel to their range so the maximum principle holds
    exactly under round-off.  iterations = 0 is the identity.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    out = field.copy()
    free = out.source == SOURCE_EXT
    if iterations == 0 or not np.any(free):
        return out
    adj = mesh.vertex_adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    movable = free & (deg > 0)
    fixed = out.source == SOURCE_RAY
    lo = hi = None
    if np.any(fixed):
        lo = out.d[fixed].min(axis=0)
        hi = out.d[fixed].max(axis=0)
    vals = out.d
    for _ in range(iterations):
        avg = adj @ vals
        avg[deg > 0] /= deg[deg > 0, None]
        vals = np.where(movable[:, None], avg, vals)
        if lo is not None:
            vals[movable] = np.clip(vals[movable], lo, hi)
    out.d = np.ascontiguousarray(vals)
    return out


def extrapolate_and_smooth(mesh, field, iterations=SMOOTH_ITERS_DEFAULT):
    """generate -> fill -> relax, the standard pipeline composition."""
    return smooth_field(mesh, extrapolate_field(mesh, field), iterations)
