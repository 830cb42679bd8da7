"""Texture-sliding field generation.

A sliding field stores, per inferred-mesh vertex, the uv displacement
that makes the inferred mesh's rendering line up with the ground truth
from one camera: cast the aperture->vertex ray into the ground-truth
mesh, read the uv at the first visible intersection, and take the
difference to the vertex's own uv.  Vertices whose ray misses, or whose
intersection an occluder hides, or which are themselves invisible, stay
unassigned for extrapolation to fill.
"""

import json

import numpy as np

from . import spatial, visibility
from .mesh import TexturedMesh

SOURCE_UN = 0
SOURCE_RAY = 1
SOURCE_EXT = 2

_SOURCE_NAMES = {SOURCE_UN: "un", SOURCE_RAY: "ray", SOURCE_EXT: "ext"}
_SOURCE_CODES = {v: k for k, v in _SOURCE_NAMES.items()}

TAU_UV_DEFAULT = 0.05
TAU_D_DEFAULT = 0.05


class TSField:
    """Per-vertex uv displacement field with provenance tags.

    Attributes
    ----------
    d : (n, 2) float array
        uv displacement; (0, 0) on unassigned vertices.
    assigned : (n,) bool array
        True iff source is not "un".
    source : (n,) uint8 array
        SOURCE_UN, SOURCE_RAY, or SOURCE_EXT per vertex.
    hit_points : (n, 3) float array or None
        Ground-truth intersection points for ray-assigned vertices
        (in-memory extra filled by generate; not part of the JSON form).
    """

    def __init__(self, d, source, hit_points=None):
        self.d = np.ascontiguousarray(d, dtype=np.float64)
        self.source = np.ascontiguousarray(source, dtype=np.uint8)
        if self.d.ndim != 2 or self.d.shape[1] != 2:
            raise ValueError("d must be (n, 2)")
        if self.source.shape != (len(self.d),):
            raise ValueError("source must be (n,)")
        self.hit_points = hit_points

    @property
    def n_vertices(self):
        return len(self.d)

    @property
    def assigned(self):
        return self.source != SOURCE_UN

    def copy(self):
        hp = None if self.hit_points is None else self.hit_points.copy()
        return TSField(self.d.copy(), self.source.copy(), hp)

    @classmethod
    def empty(cls, n):
        return cls(np.zeros((n, 2)), np.zeros(n, np.uint8))


def generate(gt, inferred, cam, gt_bvh=None, inferred_bvh=None,
             occluder=None, occluder_bvh=None, keep_hit_points=True):
    """Sliding field for one camera by ray projection onto the ground truth.

    For each inferred vertex with at least one visible incident face, the
    aperture->vertex ray is cast into gt; when it hits and the hit point
    is visible to the camera, d = interpolated gt uv - vertex uv with
    source "ray".  Everything else stays unassigned.  An optional
    occluder mesh blocks both the inferred-mesh visibility and the hit
    points without ever being hit-assigned itself.  Without an occluder
    the first hit along the camera ray is visible by construction, so no
    second cast is needed.

    Raises ValueError when more than half of the assigned displacements
    exceed 0.5 (mismatched uv conventions between the two meshes).
    """
    if gt_bvh is None:
        gt_bvh = spatial.Bvh3(gt)
    if inferred_bvh is None:
        inferred_bvh = spatial.Bvh3(inferred)
    scene_bvh = None
    if occluder is not None and occluder_bvh is None:
        occluder_bvh = spatial.Bvh3(occluder)
    if occluder is not None:
        merged = np.concatenate([inferred.face_points(),
                                 occluder.face_points()])
        scene_bvh = spatial.Bvh3.from_triangles(merged)
    report = visibility.classify(inferred, inferred_bvh, cam,
                                 scene_bvh=scene_bvh)
    cand = np.flatnonzero(report.vertex_visible)

    n = inferred.n_vertices
    field = TSField.empty(n)
    if keep_hit_points:
        field.hit_points = np.zeros((n, 3))
    if len(cand) == 0:
        return field

    eps_hit = visibility.EPS_HIT_SCALE * gt.bbox_diagonal()
    origins, dirs = cam.vertex_rays(inferred.vertices[cand])
    face, t, w = spatial.ray_first_hits(gt_bvh, origins, dirs, t_min=eps_hit)
    ok = face >= 0
    if occluder is not None and np.any(ok):
        # Blocked when the occluder intersects strictly nearer.
        _, occ_t, _ = spatial.ray_first_hits(
            occluder_bvh, origins[ok], dirs[ok], t_min=eps_hit)
        ok[np.flatnonzero(ok)] = occ_t >= t[ok] - eps_hit

    hit_vert = cand[ok]
    hit_face = face[ok]
    hit_w = w[ok]
    gt_corner_uvs = gt.face_uvs()
    hit_uv = np.einsum("nk,nkj->nj", hit_w, gt_corner_uvs[hit_face])
    vert_uv = inferred.vertex_uv()[hit_vert]
    field.d[hit_vert] = hit_uv - vert_uv
    field.source[hit_vert] = SOURCE_RAY
    if keep_hit_points:
        field.hit_points[hit_vert] = origins[ok] + t[ok, None] * dirs[ok]

    norms = np.linalg.norm(field.d[hit_vert], axis=1)
    if len(norms) and np.mean(norms > 0.5) > 0.5:
        raise ValueError("mismatched uv conventions: most assigned "
                         "displacements exceed 0.5 uv units")
    return field


def _unassign(field, idx):
    field.d[idx] = 0.0
    field.source[idx] = SOURCE_UN
    if field.hit_points is not None:
        field.hit_points[idx] = 0.0


def remove_far_edges(field, mesh, tau_uv=TAU_UV_DEFAULT):
    """Drop assignments that connect uv-distant regions over one edge.

    While any edge has both endpoints assigned and a slid-uv jump
    ||T_N(i) - T_N(j)|| > tau_uv, the endpoint with the larger ||d||
    (ties: the lower vertex index) is unassigned.  Terminates because the
    assigned count strictly decreases; the no-violation postcondition is
    what tests assert by full scan.
    """
    out = field.copy()
    edges = mesh.edges()
    t_n = mesh.vertex_uv() + out.d
    while True:
        i, j = edges[:, 0], edges[:, 1]
        both = out.assigned[i] & out.assigned[j]
        jump = np.linalg.norm(t_n[i] - t_n[j], axis=1)
        bad = both & (jump > tau_uv)
        if not np.any(bad):
            return out
        bi, bj = i[bad], j[bad]
        ni = np.linalg.norm(out.d[bi], axis=1)
        nj = np.linalg.norm(out.d[bj], axis=1)
        # Larger displacement loses; on a tie the lower index does.
        loser = np.where(ni > nj, bi, np.where(nj > ni, bj,
                                               np.minimum(bi, bj)))
        _unassign(out, np.unique(loser))
        t_n = mesh.vertex_uv() + out.d


def apply_threshold(field, tau_d=TAU_D_DEFAULT):
    """Unassign vertices with ||d|| > tau_d."""
    out = field.copy()
    over = np.linalg.norm(out.d, axis=1) > tau_d
    _unassign(out, np.flatnonzero(over))
    return out


def restrict_to_patch(mesh, face_subset):
    """Submesh of the given faces plus the old-to-new vertex index map.

    Visibility and generation on the patch then ignore the removed
    geometry entirely.  The map holds -1 for dropped vertices.
    """
    face_subset = np.asarray(face_subset)
    if face_subset.dtype == bool:
        face_subset = np.flatnonzero(face_subset)
    if len(face_subset) == 0:
        raise ValueError("face subset is empty")
    fv = mesh.faces_v[face_subset]
    ft = mesh.faces_t[face_subset]
    used_v = np.unique(fv)
    used_t = np.unique(ft)
    vmap = np.full(mesh.n_vertices, -1, np.int64)
    vmap[used_v] = np.arange(len(used_v))
    tmap = np.full(len(mesh.uvs), -1, np.int64)
    tmap[used_t] = np.arange(len(used_t))
    tag = None if mesh.side_tag is None else mesh.side_tag[face_subset]
    patch = TexturedMesh(mesh.vertices[used_v], mesh.uvs[used_t],
                         vmap[fv].astype(np.int32),
                         tmap[ft].astype(np.int32), tag)
    return patch, vmap


def apply_field(mesh, field):
    """Mesh with uvs slid to T_N = T_G + d, expanded to one uv per corner."""
    if field.n_vertices != mesh.n_vertices:
        raise ValueError("field does not match the mesh")
    corner_uvs = (mesh.face_uvs() + field.d[mesh.faces_v]).reshape(-1, 2)
    faces_t = np.arange(3 * mesh.n_faces, dtype=np.int32).reshape(-1, 3)
    return TexturedMesh(mesh.vertices, corner_uvs, mesh.faces_v, faces_t,
                        None if mesh.side_tag is None else mesh.side_tag)


def save_field(field, path):
    """Write the TSField JSON form (version 1)."""
    obj = {
        "version": 1,
        "n_vertices": field.n_vertices,
        "assigned": [int(a) for a in field.assigned],
        "source": [_SOURCE_NAMES[int(s)] for s in field.source],
        "d": [[float(a), float(b)] for a, b in field.d],
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_field(path):
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("version") != 1:
        raise ValueError(f"unsupported field version {obj.get('version')!r}")
    n = obj["n_vertices"]
    d = np.asarray(obj["d"], dtype=np.float64).reshape(n, 2)
    source = np.array([_SOURCE_CODES[s] for s in obj["source"]],
                      dtype=np.uint8)
    if len(source) != n:
        raise ValueError("source length does not match n_vertices")
    assigned = np.asarray(obj["assigned"], dtype=bool)
    if len(assigned) != n or np.any(assigned != (source != SOURCE_UN)):
        raise ValueError("assigned flags inconsistent with source tags")
    return TSField(d, source)
