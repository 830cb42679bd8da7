"""Spatial queries: BVH ray casting, uv-space point location, barycentric
inversion, and least-squares ray triangulation.
"""

import numpy as np

from . import _kernels

EPS_AREA = 1e-12      # uv triangles below this 2D area are degenerate
CONTAIN_SLACK = 1e-8  # barycentric slack for containment tests
_EPS_DET = 2.0 * EPS_AREA  # the 2x2 determinant is twice the area


class Bvh3:
    """Axis-aligned BVH over mesh faces, leaf size <= 4, median split on
    the longest centroid axis.  Deterministic build; read-only queries.
    """

    def __init__(self, mesh):
        tri = np.ascontiguousarray(mesh.face_points())
        self.tri = tri
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        cent = tri.mean(axis=1)
        (self.node_lo, self.node_hi, self.left, self.right,
         self.start, self.count, self.perm) = _kernels.build_bvh(lo, hi, cent)

    @classmethod
    def from_triangles(cls, tri):
        """Build directly over an (f, 3, 3) triangle array."""
        self = cls.__new__(cls)
        tri = np.ascontiguousarray(tri, dtype=np.float64)
        self.tri = tri
        lo = tri.min(axis=1)
        hi = tri.max(axis=1)
        cent = tri.mean(axis=1)
        (self.node_lo, self.node_hi, self.left, self.right,
         self.start, self.count, self.perm) = _kernels.build_bvh(lo, hi, cent)
        return self

    @property
    def n_faces(self):
        return len(self.tri)


def ray_first_hits(bvh, origins, dirs, t_min=0.0):
    """First hit of each ray against the BVH's triangles.

    Parameters
    ----------
    origins, dirs : (r, 3) arrays
        Ray origins and directions (directions need not be unit length;
        t is measured in direction units).
    t_min : scalar or (r,) array
        Hits require t > t_min.

    Returns
    -------
    face : (r,) int array, -1 where the ray misses
    t : (r,) array, inf where the ray misses
    w : (r, 3) array of barycentric weights of the hit
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64),
                            (len(origins),))
    t_min = np.ascontiguousarray(t_min)
    face, t, u, v, w = _kernels.ray_first_hits(
        bvh.node_lo, bvh.node_hi, bvh.left, bvh.right, bvh.start, bvh.count,
        bvh.perm, bvh.tri, origins, dirs, t_min)
    return face, t, np.stack([u, v, w], axis=1)


def ray_first_hit(bvh, origin, direction, t_min=0.0):
    """Single-ray convenience wrapper: (face, t, weights) or None on miss."""
    face, t, w = ray_first_hits(bvh, np.asarray(origin)[None, :],
                                np.asarray(direction)[None, :], t_min)
    if face[0] < 0:
        return None
    return int(face[0]), float(t[0]), w[0]


def invert_barycentric(uv_tri, query):
    """Weights (w1, w2, w3) with sum 1 reproducing query from uv corners.

    Raises ValueError for degenerate uv triangles (area <= EPS_AREA).
    The query is inside iff all weights >= -CONTAIN_SLACK.
    """
    uv_tri = np.asarray(uv_tri, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    d1 = uv_tri[0] - uv_tri[2]
    d2 = uv_tri[1] - uv_tri[2]
    det = d1[0] * d2[1] - d2[0] * d1[1]
    if abs(det) <= _EPS_DET:
        raise ValueError(f"degenerate uv triangle (area {abs(det) / 2.0:.3e})")
    r = q - uv_tri[2]
    w1 = (r[0] * d2[1] - d2[0] * r[1]) / det
    w2 = (d1[0] * r[1] - r[0] * d1[1]) / det
    return np.array([w1, w2, 1.0 - w1 - w2])


class UvIndex:
    """BVH over 2D uv triangles for point-location queries.

    Built either from a mesh's own uv layout or from explicit per-corner
    uvs (e.g. perturbed coordinates), optionally restricted to a face
    subset; `faces` maps local triangle ids back to mesh face ids.
    """

    def __init__(self, corner_uvs, faces=None):
        corner_uvs = np.ascontiguousarray(corner_uvs, dtype=np.float64)
        self.corner_uvs = corner_uvs
        if faces is None:
            faces = np.arange(len(corner_uvs))
        self.faces = np.asarray(faces)
        # Lift the 2D boxes to 3D (z = 0) to reuse the 3D builder.
        lo = np.zeros((len(corner_uvs), 3))
        hi = np.zeros((len(corner_uvs), 3))
        lo[:, :2] = corner_uvs.min(axis=1)
        hi[:, :2] = corner_uvs.max(axis=1)
        cent = 0.5 * (lo + hi)
        (self.node_lo, self.node_hi, self.left, self.right,
         self.start, self.count, self.perm) = _kernels.build_bvh(lo, hi, cent)

    @classmethod
    def from_mesh(cls, mesh, field=None, face_mask=None):
        """Index of the mesh's uv triangles, displaced by field.d if given."""
        corner = mesh.face_uvs()
        if field is not None:
            corner = corner + field.d[mesh.faces_v]
        if face_mask is not None:
            idx = np.flatnonzero(face_mask)
            return cls(corner[idx], idx)
        return cls(corner)


def uv_locate_batch(index, queries):
    """All uv triangles containing each query point.

    Returns
    -------
    offsets : (q + 1,) int array
        Candidate range of query i is [offsets[i], offsets[i+1]).
    faces : (total,) int array
        Mesh face ids (mapped through the index's face subset).
    weights : (total, 3) array
        Inverted barycentric weights per candidate.
    """
    queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    counts = _kernels.uv_locate_counts(
        index.node_lo, index.node_hi, index.left, index.right, index.start,
        index.count, index.perm, index.corner_uvs, queries,
        CONTAIN_SLACK, _EPS_DET)
    offsets = np.zeros(len(queries) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    faces = np.empty(offsets[-1], dtype=np.int64)
    weights = np.empty((offsets[-1], 3))
    _kernels.uv_locate_fill(
        index.node_lo, index.node_hi, index.left, index.right, index.start,
        index.count, index.perm, index.corner_uvs, queries,
        CONTAIN_SLACK, _EPS_DET, offsets, faces, weights)
    return offsets, index.faces[faces], weights


def uv_locate(index, query):
    """Candidates (face, weights) whose uv triangle contains the point."""
    offsets, faces, weights = uv_locate_batch(index, np.asarray(query)[None, :])
    return [(int(faces[i]), weights[i]) for i in range(offsets[1])]


def triangulate_point(origins, dirs, cond_limit=1e12):
    """Point minimizing the sum of squared distances to >= 2 rays.

    Solves the 3x3 normal equations sum(I - d d^T) x = sum((I - d d^T) o).
    Returns (point, residual) with residual the root of the minimized sum.
    Raises ValueError naming the condition number when the system is
    singular (e.g. all rays parallel).
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if len(origins) < 2:
        raise ValueError("triangulation needs at least 2 rays")
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    proj = np.eye(3)[None, :, :] - dirs[:, :, None] * dirs[:, None, :]
    a = proj.sum(axis=0)
    b = np.einsum("nij,nj->i", proj, origins)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > cond_limit:
        raise ValueError(
            f"singular triangulation system (condition number {cond:.3e})")
    x = np.linalg.solve(a, b)
    r = np.einsum("nij,nj->ni", proj, x - origins)
    residual = float(np.sqrt(np.einsum("ni,ni->", r, r)))
    return x, residual
