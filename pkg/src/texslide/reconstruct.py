"""Recovering 3D wrinkle geometry from per-camera slid texture coordinates.

Each camera's displacement field says where on the smooth mesh a texture
point appears, so the aperture ray toward that surface point constrains
the true 3D position of the wrinkled surface point carrying that uv.
Per garment vertex, rays from two or more cameras are triangulated;
ambiguous uv locations (folds can stack several slid triangles over one
uv) are resolved by choosing the ray combination that disagrees least;
vertices no camera pair constrains get the positional delta extrapolated
over the surface.
"""

import csv
import itertools
import warnings

import numpy as np

from . import spatial
from .extrapolate import extrapolate_values
from .mesh import SIDE_BACK, SIDE_FRONT, taubin_smooth
from .pixelmap import _vertex_sides
from .slidegen import SOURCE_RAY

COMBINATION_CAP = 64


def candidate_index(inferred, field, side=None):
    """Uv index over slid corners T_G + d, restricted to trusted faces.

    Only faces whose three corners are ray-assigned participate; sliding
    is meaningless across corners the rays never constrained.  With a
    side, faces of the other side are dropped too (front and back share
    the uv square).
    """
    mask = np.all(field.source[inferred.faces_v] == SOURCE_RAY, axis=1)
    if side is not None:
        if inferred.side_tag is None:
            raise ValueError("mesh has no side tags")
        mask &= inferred.side_tag == side
    return spatial.UvIndex.from_mesh(inferred, field=field, face_mask=mask)


def locate_candidates(inferred, field, uv_index, query_uv):
    """All slid triangles covering query_uv: list of (face, weights, point).

    The 3D point interpolates the face's vertex positions with the uv
    barycentric weights.  Faces with a corner the rays did not assign are
    skipped even if the index still contains them.
    """
    out = []
    for face, w in spatial.uv_locate(uv_index, query_uv):
        if not np.all(field.source[inferred.faces_v[face]] == SOURCE_RAY):
            continue
        p = w @ inferred.vertices[inferred.faces_v[face]]
        out.append((int(face), w, p))
    return out


class ReconstructedVertex:
    """Triangulated position with the candidate choice that produced it."""

    def __init__(self, point, residual, chosen, n_cameras):
        self.point = point
        self.residual = residual
        self.chosen = chosen  # list of (camera index, candidate index)
        self.n_cameras = n_cameras


def _rays_for(combo, active, candidates, cams):
    origins = np.array([cams[c].position for c in active])
    points = np.array([candidates[c][k] for c, k in zip(active, combo)])
    return origins, points - origins


def reconstruct_vertex(candidates, cams, cond_limit=1e12):
    """Pick the least-disagreement ray combination and triangulate it.

    candidates holds, per camera, a sequence of 3D surface points (empty
    when the vertex's uv was not found in that camera's slid layout).
    Returns None when fewer than 2 cameras offer a candidate.  All
    combinations are tried while their count stays within
    COMBINATION_CAP; beyond that a greedy pass seeds with the best pair
    of the two least-ambiguous cameras and extends one camera at a time.
    Raises ValueError if every combination is singular.
    """
    active = [i for i, c in enumerate(candidates) if len(c) > 0]
    if len(active) < 2:
        return None
    counts = [len(candidates[i]) for i in active]

    def attempt(combo, order):
        origins, dirs = _rays_for(combo, order, candidates, cams)
        try:
            return spatial.triangulate_point(origins, dirs, cond_limit)
        except ValueError:
            return None

    best = None
    total = int(np.prod(counts))
    if total <= COMBINATION_CAP:
        for combo in itertools.product(*(range(c) for c in counts)):
            got = attempt(combo, active)
            if got is not None and (best is None or got[1] < best[1]):
                best = (combo, got[1], got[0], active)
    else:
        order = sorted(active, key=lambda i: len(candidates[i]))
        seed = None
        for pair in itertools.product(range(len(candidates[order[0]])),
                                      range(len(candidates[order[1]]))):
            got = attempt(pair, order[:2])
            if got is not None and (seed is None or got[1] < seed[1]):
                seed = (list(pair), got[1], got[0])
        if seed is not None:
            combo = seed[0]
            for nxt in order[2:]:
                pick = None
                for k in range(len(candidates[nxt])):
                    got = attempt(combo + [k], order[:len(combo) + 1])
                    if got is not None and (pick is None or got[1] < pick[1]):
                        pick = (k, got[1], got[0])
                if pick is None:
                    break
                combo = combo + [pick[0]]
            got = attempt(combo, order[:len(combo)])
            if got is not None:
                best = (tuple(combo), got[1], got[0], order[:len(combo)])
    if best is None:
        raise ValueError("every candidate combination is singular")
    combo, residual, point, order = best
    chosen = list(zip(order, combo))
    return ReconstructedVertex(point, residual, chosen, len(order))


def blend_occluded(mesh, inferred, reconstructed, mask):
    """Merge triangulated positions into the smooth mesh.

    The positional delta on the reconstructed set is extrapolated over
    mesh's connectivity and added everywhere; reconstructed vertices keep
    their triangulated positions exactly.  An empty set returns the
    inferred positions unchanged, with a warning.
    """
    mask = np.asarray(mask, dtype=bool)
    if not np.any(mask):
        warnings.warn("no vertices were triangulated; keeping inferred "
                      "positions", stacklevel=2)
        return inferred.copy()
    delta = np.zeros_like(inferred.vertices)
    delta[mask] = reconstructed[mask] - inferred.vertices[mask]
    filled, _ = extrapolate_values(mesh, delta, mask)
    positions = inferred.vertices + filled
    positions[mask] = reconstructed[mask]
    return inferred.with_vertices(positions)


class ReconstructionReport:
    """Per-vertex diagnostics: camera support, residual, provenance."""

    def __init__(self, n_cameras, residual, triangulated):
        self.n_cameras = n_cameras
        self.residual = residual  # NaN where blended
        self.triangulated = triangulated

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "n_cameras", "residual", "source"])
            for i in range(len(self.n_cameras)):
                tri = self.triangulated[i]
                w.writerow([i, int(self.n_cameras[i]),
                            f"{self.residual[i]:.9g}" if tri else "",
                            "triangulated" if tri else "blended"])


def _triangulate_rows(points, origins, mask, cond_limit):
    """Vectorized least-squares triangulation for single-candidate rows.

    points, origins: (m, k, 3); mask: (m, k) with >= 2 True per row.
    Returns (x, residual, ok); rows failing the condition-number gate
    come back with ok False.
    """
    d = points - origins
    norm = np.linalg.norm(d, axis=2, keepdims=True)
    norm[norm == 0.0] = 1.0
    d = d / norm
    proj = np.eye(3) - d[..., :, None] * d[..., None, :]
    proj = proj * mask[..., None, None]
    a = proj.sum(axis=1)
    b = np.einsum("mkij,mkj->mi", proj, origins)
    eig = np.linalg.eigvalsh(a)
    hi = np.abs(eig).max(axis=1)
    lo = np.abs(eig).min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = hi / lo
    ok = np.isfinite(cond) & (cond <= cond_limit)
    x = np.zeros((len(a), 3))
    if np.any(ok):
        x[ok] = np.linalg.solve(a[ok], b[ok][:, :, None])[:, :, 0]
    r = np.einsum("mkij,mkj->mki", proj, x[:, None, :] - origins)
    residual = np.sqrt(np.einsum("mki,mki->m", r, r))
    return x, residual, ok


def reconstruct_mesh(inferred, fields, cams, postprocess="none",
                     query_uv=None, cond_limit=1e12):
    """Full reconstruction: locate, triangulate, blend, optional smooth.

    fields and cams run in parallel, every field on inferred's
    connectivity.  query_uv defaults to inferred's own vertex uvs (the
    ground truth shares them under the uv invariance of sliding).
    postprocess "taubin" smooths the result to knock down triangulation
    noise; "none" leaves it as blended.  Returns the mesh and a
    ReconstructionReport.
    """
    if postprocess not in ("none", "taubin"):
        raise ValueError(f"unknown postprocess {postprocess!r}")
    n = len(inferred.vertices)
    n_cams = len(cams)
    if len(fields) != n_cams:
        raise ValueError("one field per camera required")
    for f in fields:
        if len(f.d) != n:
            raise ValueError("field does not match mesh connectivity")
    if query_uv is None:
        query_uv = inferred.vertex_uv()

    if inferred.side_tag is None:
        groups = [(None, np.arange(n))]
    else:
        front, back = _vertex_sides(inferred)
        groups = [(SIDE_FRONT, front), (SIDE_BACK, back)]

    counts = np.zeros((n_cams, n), dtype=np.int64)
    first_pt = np.zeros((n_cams, n, 3))
    extra = [dict() for _ in range(n_cams)]  # vertex -> (k, 3) candidates
    for c in range(n_cams):
        for side, vids in groups:
            if len(vids) == 0:
                continue
            idx = candidate_index(inferred, fields[c], side)
            off, faces, w = spatial.uv_locate_batch(idx, query_uv[vids])
            cnt = np.diff(off)
            if len(faces) == 0:
                continue
            pts = np.einsum("qk,qkj->qj", w,
                            inferred.vertices[inferred.faces_v[faces]])
            # a vertex listed under both sides merges its candidate sets
            fresh = counts[c, vids] == 0
            hit = fresh & (cnt > 0)
            first_pt[c, vids[hit]] = pts[off[:-1][hit]]
            for local in np.flatnonzero(fresh & (cnt > 1)):
                extra[c][int(vids[local])] = pts[off[local]:off[local + 1]]
            for local in np.flatnonzero(~fresh & (cnt > 0)):
                v = int(vids[local])
                old = extra[c].pop(v, first_pt[c, v][None])
                extra[c][v] = np.vstack([old, pts[off[local]:off[local + 1]]])
            counts[c, vids] += cnt

    active = counts > 0
    n_active = active.sum(axis=0)
    triangulable = n_active >= 2
    ambiguous = np.any(counts > 1, axis=0) & triangulable
    plain = triangulable & ~ambiguous

    positions = np.zeros((n, 3))
    residual = np.full(n, np.nan)
    done = np.zeros(n, dtype=bool)

    ids = np.flatnonzero(plain)
    if len(ids) > 0:
        origins = np.array([cam.position for cam in cams])
        o = np.broadcast_to(origins[None, :, :], (len(ids), n_cams, 3))
        p = first_pt[:, ids].transpose(1, 0, 2)
        m = active[:, ids].T
        p = np.where(m[..., None], p, o)
        x, res, ok = _triangulate_rows(p, o, m, cond_limit)
        positions[ids[ok]] = x[ok]
        residual[ids[ok]] = res[ok]
        done[ids[ok]] = True

    for v in np.flatnonzero(ambiguous):
        cand = [extra[c].get(int(v),
                             first_pt[c, v][None] if active[c, v] else
                             np.zeros((0, 3)))
                for c in range(n_cams)]
        try:
            got = reconstruct_vertex(cand, cams, cond_limit)
        except ValueError:
            continue
        if got is not None:
            positions[v] = got.point
            residual[v] = got.residual
            done[v] = True

    out = blend_occluded(inferred, inferred, positions, done)
    if postprocess == "taubin":
        out = taubin_smooth(out)
    report = ReconstructionReport(n_active, residual, done)
    return out, report
