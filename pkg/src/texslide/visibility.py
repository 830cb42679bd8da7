"""Camera-dependent visibility: per-face sample classification and point
visibility tests.

A face is sampled at its 3 corners, 3 edge midpoints, and centroid.  A
sample is visible when the aperture ray's first hit is that face, or the
first hit lies at the sample point itself within eps (ties on shared
edges and coplanar overlaps count as visible: nothing strictly nearer
occludes the sample).
"""

import numpy as np

from . import spatial

EPS_HIT_SCALE = 1e-6  # eps_hit = this times the mesh bounding-box diagonal

# Barycentric sample pattern: corners, edge midpoints, centroid.
_SAMPLES = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
])


class VisibilityReport:
    """Per-vertex and per-face visibility from one camera.

    Attributes
    ----------
    vertex_visible : (n,) bool
        True iff some incident face has a visible sample.
    face_visible : (f,) bool
        True iff the face has a visible sample.
    sample_hits : (f,) int
        Number of visible samples (0..7).
    """

    def __init__(self, vertex_visible, face_visible, sample_hits):
        self.vertex_visible = vertex_visible
        self.face_visible = face_visible
        self.sample_hits = sample_hits


def face_sample_points(mesh):
    """The 7 sample points per face, shape (f, 7, 3)."""
    return np.einsum("sk,fkj->fsj", _SAMPLES, mesh.face_points())


def classify(mesh, bvh, cam, scene_bvh=None):
    """Visibility of every face and vertex of mesh from cam.

    Rays are cast into scene_bvh when given (its first mesh.n_faces
    triangles must be mesh's own faces, extra occluder triangles after),
    else into bvh.  eps_hit scales with mesh's bounding-box diagonal.
    """
    target = bvh if scene_bvh is None else scene_bvh
    eps_hit = EPS_HIT_SCALE * mesh.bbox_diagonal()
    samples = face_sample_points(mesh).reshape(-1, 3)
    dirs = samples - cam.position
    # Unnormalized directions put every sample at t = 1 exactly.
    dist = np.sqrt(np.einsum("ij,ij->i", dirs, dirs))
    eps_t = eps_hit / np.maximum(dist, 1e-300)
    origins = np.broadcast_to(cam.position, dirs.shape)
    face, t, _ = spatial.ray_first_hits(target, origins, dirs, t_min=eps_t)
    own = np.repeat(np.arange(mesh.n_faces), len(_SAMPLES))
    visible = (face == own) | (np.abs(t - 1.0) <= eps_t)
    sample_hits = visible.reshape(mesh.n_faces, len(_SAMPLES)).sum(axis=1)
    face_visible = sample_hits > 0
    vertex_visible = np.zeros(mesh.n_vertices, dtype=bool)
    vertex_visible[mesh.faces_v[face_visible].ravel()] = True
    return VisibilityReport(vertex_visible, face_visible, sample_hits)


def points_visible(mesh, bvh, cam, points, faces, scene_bvh=None):
    """Whether points lying on the given mesh faces are visible from cam.

    A point is visible iff the aperture ray's first hit is its face or
    lies at the point itself within eps_hit (nothing strictly nearer).
    """
    target = bvh if scene_bvh is None else scene_bvh
    eps_hit = EPS_HIT_SCALE * mesh.bbox_diagonal()
    points = np.atleast_2d(points)
    dirs = points - cam.position
    dist = np.sqrt(np.einsum("ij,ij->i", dirs, dirs))
    eps_t = eps_hit / np.maximum(dist, 1e-300)
    origins = np.broadcast_to(cam.position, dirs.shape)
    hit_face, t, _ = spatial.ray_first_hits(target, origins, dirs, t_min=eps_t)
    return (hit_face == np.asarray(faces)) | (np.abs(t - 1.0) <= eps_t)


def point_visible(mesh, bvh, cam, point, face, scene_bvh=None):
    """Single-point convenience wrapper around points_visible."""
    return bool(points_visible(mesh, bvh, cam, np.asarray(point)[None, :],
                               np.asarray([face]), scene_bvh)[0])
