"""Triangle meshes with per-corner texture coordinates.

A mesh stores one vertex table, one uv table, and faces that index both
independently per corner.  Sharing a vertex while splitting its uv (seams,
two-sided sheets) therefore needs no vertex duplication.
"""

import numpy as np
from scipy import sparse

SIDE_FRONT = 0
SIDE_BACK = 1

_SIDE_NAMES = {SIDE_FRONT: "front", SIDE_BACK: "back"}
_SIDE_CODES = {v: k for k, v in _SIDE_NAMES.items()}


class ObjParseError(ValueError):
    """Raised on malformed OBJ input; carries the 1-based line number."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TexturedMesh:
    """Triangle mesh with independent vertex and uv indexing per corner.

    Parameters
    ----------
    vertices : (n, 3) float array
        3D vertex positions.
    uvs : (m, 2) float array
        Texture coordinates, typically inside the unit square.
    faces_v : (f, 3) int array
        Vertex index of each face corner.
    faces_t : (f, 3) int array
        Uv index of each face corner.
    side_tag : (f,) uint8 array or None
        Optional per-face tag, SIDE_FRONT or SIDE_BACK.  None means the
        mesh has no front/back distinction.
    """

    def __init__(self, vertices, uvs, faces_v, faces_t, side_tag=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.uvs = np.ascontiguousarray(uvs, dtype=np.float64)
        self.faces_v = np.ascontiguousarray(faces_v, dtype=np.int32)
        self.faces_t = np.ascontiguousarray(faces_t, dtype=np.int32)
        if side_tag is not None:
            side_tag = np.ascontiguousarray(side_tag, dtype=np.uint8)
        self.side_tag = side_tag
        self._validate()
        self._adjacency = None
        self._edges = None

    def _validate(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (n, 3)")
        if self.uvs.ndim != 2 or self.uvs.shape[1] != 2:
            raise ValueError("uvs must be (m, 2)")
        if self.faces_v.shape != self.faces_t.shape or self.faces_v.ndim != 2 \
                or self.faces_v.shape[1] != 3:
            raise ValueError("faces_v and faces_t must both be (f, 3)")
        if self.faces_v.size:
            if self.faces_v.min() < 0 or self.faces_v.max() >= len(self.vertices):
                raise ValueError("face vertex index out of range")
            if self.faces_t.min() < 0 or self.faces_t.max() >= len(self.uvs):
                raise ValueError("face uv index out of range")
        if self.side_tag is not None:
            if self.side_tag.shape != (len(self.faces_v),):
                raise ValueError("side_tag must be (f,)")
            if self.side_tag.size and self.side_tag.max() > SIDE_BACK:
                raise ValueError("side_tag values must be 0 (front) or 1 (back)")
        # Degenerate (zero-area) faces break barycentric logic downstream.
        tri = self.vertices[self.faces_v]
        cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if np.any(np.einsum("ij,ij->i", cr, cr) == 0.0):
            raise ValueError("mesh contains a degenerate (zero-area) face")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces_v)

    def copy(self):
        tag = None if self.side_tag is None else self.side_tag.copy()
        return TexturedMesh(self.vertices.copy(), self.uvs.copy(),
                            self.faces_v.copy(), self.faces_t.copy(), tag)

    def face_points(self):
        """Per-face corner positions, shape (f, 3, 3)."""
        return self.vertices[self.faces_v]

    def face_uvs(self):
        """Per-face corner uvs, shape (f, 3, 2)."""
        return self.uvs[self.faces_t]

    def face_areas(self):
        tri = self.face_points()
        cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.sqrt(np.einsum("ij,ij->i", cr, cr))

    def bbox_diagonal(self):
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.sqrt(ext @ ext))

    def edges(self):
        """Undirected vertex edges, shape (e, 2), each row sorted, rows unique."""
        if self._edges is None:
            f = self.faces_v
            pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
            pairs.sort(axis=1)
            self._edges = np.unique(pairs, axis=0)
        return self._edges

    def boundary_vertices(self):
        """Bool mask of vertices on an open edge (edge used by one face)."""
        f = self.faces_v
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs.sort(axis=1)
        uniq, counts = np.unique(pairs, axis=0, return_counts=True)
        open_edges = uniq[counts == 1]
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[open_edges.ravel()] = True
        return mask

    def vertex_adjacency(self):
        """Symmetric sparse one-ring adjacency (csr, float64 ones)."""
        if self._adjacency is None:
            e = self.edges()
            n = self.n_vertices
            data = np.ones(2 * len(e))
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            self._adjacency = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._adjacency

    def vertex_uv(self):
        """One uv per vertex, shape (n, 2).

        Takes the uv of the first corner referencing each vertex; vertices
        whose corners disagree (seams) keep that first value.  Vertices not
        referenced by any face get (nan, nan).
        """
        out = np.full((self.n_vertices, 2), np.nan)
        vf = self.faces_v.ravel()
        tf = self.faces_t.ravel()
        # Reverse enumeration: later writes win, so flip to keep the first.
        out[vf[::-1]] = self.uvs[tf[::-1]]
        return out

    def with_vertices(self, vertices):
        """Same connectivity and uvs on new positions."""
        return TexturedMesh(vertices, self.uvs, self.faces_v, self.faces_t,
                            None if self.side_tag is None else self.side_tag)


def _fmt(x):
    # repr of a Python float is the shortest string that round-trips.
    return repr(float(x))


def save_obj(mesh, path):
    """Write a mesh as OBJ (v/vt/f subset, '# side' tags when present)."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    for t in mesh.uvs:
        lines.append(f"vt {_fmt(t[0])} {_fmt(t[1])}")
    cur = None
    for i in range(mesh.n_faces):
        if mesh.side_tag is not None and mesh.side_tag[i] != cur:
            cur = mesh.side_tag[i]
            lines.append(f"# side {_SIDE_NAMES[int(cur)]}")
        fv = mesh.faces_v[i] + 1
        ft = mesh.faces_t[i] + 1
        lines.append(f"f {fv[0]}/{ft[0]} {fv[1]}/{ft[1]} {fv[2]}/{ft[2]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_obj(path):
    """Read the OBJ subset written by save_obj.

    Accepts v, vt, f (triangles with mandatory uv indices) and comments;
    '# side front' / '# side back' tag the faces that follow.  Any other
    directive raises ObjParseError with the line number.
    """
    verts, uvs, fv, ft, tags = [], [], [], [], []
    face_lines = []
    cur_side = None
    saw_side = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "side":
                    if parts[1] not in _SIDE_CODES:
                        raise ObjParseError(lineno, f"unknown side {parts[1]!r}")
                    cur_side = _SIDE_CODES[parts[1]]
                    saw_side = True
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) != 4:
                    raise ObjParseError(lineno, "v needs exactly 3 coordinates")
                try:
                    verts.append([float(p) for p in parts[1:]])
                except ValueError:
                    raise ObjParseError(lineno, "bad vertex coordinate") from None
            elif parts[0] == "vt":
                if len(parts) != 3:
                    raise ObjParseError(lineno, "vt needs exactly 2 coordinates")
                try:
                    uvs.append([float(p) for p in parts[1:]])
                except ValueError:
                    raise ObjParseError(lineno, "bad uv coordinate") from None
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ObjParseError(lineno, "only triangle faces are supported")
                vi, ti = [], []
                for corner in parts[1:]:
                    bits = corner.split("/")
                    if len(bits) != 2 or not bits[0] or not bits[1]:
                        raise ObjParseError(lineno, "face corners must be v/vt")
                    try:
                        a, b = int(bits[0]), int(bits[1])
                    except ValueError:
                        raise ObjParseError(lineno, "bad face index") from None
                    if a < 1 or b < 1:
                        raise ObjParseError(lineno, "indices must be positive (1-based)")
                    vi.append(a - 1)
                    ti.append(b - 1)
                fv.append(vi)
                ft.append(ti)
                tags.append(SIDE_FRONT if cur_side is None else cur_side)
                face_lines.append(lineno)
            else:
                raise ObjParseError(lineno, f"unsupported directive {parts[0]!r}")
    verts = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    uvs = np.asarray(uvs, dtype=np.float64).reshape(-1, 2)
    fv = np.asarray(fv, dtype=np.int32).reshape(-1, 3)
    ft = np.asarray(ft, dtype=np.int32).reshape(-1, 3)
    for i in range(len(fv)):
        if fv[i].max(initial=-1) >= len(verts) or ft[i].max(initial=-1) >= len(uvs):
            raise ObjParseError(face_lines[i], "face index out of range")
    side = np.asarray(tags, dtype=np.uint8) if saw_side else None
    return TexturedMesh(verts, uvs, fv, ft, side)


def _edge_midpoint_table(indices):
    """Map each unique undirected index pair of the face list to a new id.

    Returns (pairs, mid_of_corner) where pairs is (e, 2) unique sorted index
    pairs and mid_of_corner is (f, 3) giving the pair id of edges
    (c0,c1), (c1,c2), (c2,c0) per face.
    """
    e01 = indices[:, [0, 1]]
    e12 = indices[:, [1, 2]]
    e20 = indices[:, [2, 0]]
    allp = np.concatenate([e01, e12, e20])
    allp = np.sort(allp, axis=1)
    pairs, inv = np.unique(allp, axis=0, return_inverse=True)
    f = len(indices)
    mid = np.stack([inv[:f], inv[f:2 * f], inv[2 * f:]], axis=1)
    return pairs, mid


def subdivide(mesh, levels=1):
    """Midpoint 1-to-4 subdivision.

    New vertices sit at edge midpoints, so the surface is unchanged
    geometrically.  Uvs are midpointed per uv-edge, which keeps seams split
    exactly where the input splits them.  side_tag is inherited.
    """
    out = mesh
    for _ in range(levels):
        vp, vmid = _edge_midpoint_table(out.faces_v)
        tp, tmid = _edge_midpoint_table(out.faces_t)
        new_vertices = np.concatenate(
            [out.vertices, 0.5 * (out.vertices[vp[:, 0]] + out.vertices[vp[:, 1]])])
        new_uvs = np.concatenate(
            [out.uvs, 0.5 * (out.uvs[tp[:, 0]] + out.uvs[tp[:, 1]])])
        nv = out.n_vertices
        nt = len(out.uvs)
        a, b, c = out.faces_v[:, 0], out.faces_v[:, 1], out.faces_v[:, 2]
        mab, mbc, mca = (vmid + nv).T
        fa, fb, fc = out.faces_t[:, 0], out.faces_t[:, 1], out.faces_t[:, 2]
        tab, tbc, tca = (tmid + nt).T
        faces_v = np.concatenate([
            np.stack([a, mab, mca], axis=1),
            np.stack([mab, b, mbc], axis=1),
            np.stack([mca, mbc, c], axis=1),
            np.stack([mab, mbc, mca], axis=1),
        ])
        faces_t = np.concatenate([
            np.stack([fa, tab, tca], axis=1),
            np.stack([tab, fb, tbc], axis=1),
            np.stack([tca, tbc, fc], axis=1),
            np.stack([tab, tbc, tca], axis=1),
        ])
        tag = None
        if out.side_tag is not None:
            tag = np.concatenate([out.side_tag] * 4)
        out = TexturedMesh(new_vertices, new_uvs,
                           faces_v.astype(np.int32), faces_t.astype(np.int32), tag)
    return out


def _neighbor_average(mesh, positions):
    adj = mesh.vertex_adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    avg = adj @ positions
    ok = deg > 0
    avg[ok] /= deg[ok, None]
    avg[~ok] = positions[~ok]
    return avg


def umbrella_smooth(mesh, iterations=1, lam=0.5, fixed=None):
    """Uniform Laplacian smoothing: p <- p + lam * (ring mean - p).

    `fixed` is an optional bool mask of vertices to hold in place, the usual
    treatment for open boundaries that should not contract.
    """
    pos = mesh.vertices.copy()
    step = np.ones(mesh.n_vertices) if fixed is None else 1.0 - np.asarray(fixed, dtype=np.float64)
    step = lam * step[:, None]
    for _ in range(iterations):
        pos += step * (_neighbor_average(mesh, pos) - pos)
    return mesh.with_vertices(pos)


def taubin_smooth(mesh, iterations=10, lam=0.5, mu=-0.53):
    """Taubin lambda/mu smoothing (shrink step then inflate step).

    The ring average of coplanar points stays in the plane, so a flat mesh
    remains flat.
    """
    pos = mesh.vertices.copy()
    for _ in range(iterations):
        pos += lam * (_neighbor_average(mesh, pos) - pos)
        pos += mu * (_neighbor_average(mesh, pos) - pos)
    return mesh.with_vertices(pos)


class Pose:
    """Pose descriptor: integer id plus a finite-valued parameter vector."""

    def __init__(self, pose_id, params):
        self.id = int(pose_id)
        self.params = np.asarray(params, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.params)):
            raise ValueError("pose parameters must be finite")


class EnergyReport:
    """Membrane strain energy split into extension and compression parts.

    Attributes
    ----------
    extension, compression : float
        Area-weighted totals over all faces.
    per_face_extension, per_face_compression : (f,) arrays
        The same quantities before summation.
    """

    def __init__(self, per_face_extension, per_face_compression):
        self.per_face_extension = per_face_extension
        self.per_face_compression = per_face_compression
        self.extension = float(per_face_extension.sum())
        self.compression = float(per_face_compression.sum())


def deformation_energy(mesh, rest):
    """Per-face singular-value membrane energy of mesh relative to rest.

    Each face's deformation gradient maps rest-face tangent coordinates to
    3D; with singular values s1, s2 the face contributes
    area_rest * sum(max(s-1, 0)^2) to extension and
    area_rest * sum(min(s-1, 0)^2) to compression.  Identical meshes give
    exactly zero of both.
    """
    if mesh.faces_v.shape != rest.faces_v.shape or np.any(mesh.faces_v != rest.faces_v):
        raise ValueError("mesh and rest must share connectivity")
    tri_r = rest.face_points()
    tri_d = mesh.face_points()
    # Orthonormal 2D frame per rest face.
    e1 = tri_r[:, 1] - tri_r[:, 0]
    e2 = tri_r[:, 2] - tri_r[:, 0]
    n = np.cross(e1, e2)
    area_r = 0.5 * np.sqrt(np.einsum("ij,ij->i", n, n))
    u = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
    w = np.cross(n / np.linalg.norm(n, axis=1, keepdims=True), u)
    # Rest edge matrix in that frame: columns are e1, e2 projected to (u, w).
    dm = np.empty((len(tri_r), 2, 2))
    dm[:, 0, 0] = np.einsum("ij,ij->i", e1, u)
    dm[:, 1, 0] = np.einsum("ij,ij->i", e1, w)
    dm[:, 0, 1] = np.einsum("ij,ij->i", e2, u)
    dm[:, 1, 1] = np.einsum("ij,ij->i", e2, w)
    det = dm[:, 0, 0] * dm[:, 1, 1] - dm[:, 0, 1] * dm[:, 1, 0]
    inv = np.empty_like(dm)
    inv[:, 0, 0] = dm[:, 1, 1]
    inv[:, 0, 1] = -dm[:, 0, 1]
    inv[:, 1, 0] = -dm[:, 1, 0]
    inv[:, 1, 1] = dm[:, 0, 0]
    inv /= det[:, None, None]
    ds = np.stack([tri_d[:, 1] - tri_d[:, 0], tri_d[:, 2] - tri_d[:, 0]], axis=2)
    fgrad = ds @ inv  # (f, 3, 2)
    # Singular values via the 2x2 Gram matrix, closed form.
    c = np.einsum("fik,fil->fkl", fgrad, fgrad)
    tr = c[:, 0, 0] + c[:, 1, 1]
    detc = c[:, 0, 0] * c[:, 1, 1] - c[:, 0, 1] * c[:, 1, 0]
    root = np.sqrt(np.maximum(0.25 * tr * tr - detc, 0.0))
    s1 = np.sqrt(np.maximum(0.5 * tr + root, 0.0))
    s2 = np.sqrt(np.maximum(0.5 * tr - root, 0.0))
    ext = area_r * (np.maximum(s1 - 1.0, 0.0) ** 2 + np.maximum(s2 - 1.0, 0.0) ** 2)
    comp = area_r * (np.minimum(s1 - 1.0, 0.0) ** 2 + np.minimum(s2 - 1.0, 0.0) ** 2)
    return EnergyReport(ext, comp)
