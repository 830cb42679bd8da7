"""Evaluation: per-pixel texture-coordinate error, SqrtMSE statistics,
field edge-extrema reports, per-provenance error breakdown, color maps.

The core metric casts a ray through every pixel center into two meshes
that render the same surface and compares the uv each would paint there;
the root of the mean squared difference over mutually covered pixels
summarizes one (pose, camera) image.
"""

import numpy as np

from . import spatial
from .slidegen import SOURCE_RAY, SOURCE_EXT

ERROR_RAMP_MAX = 0.04  # red at and above this uv error; blue at zero

CLASS_RAY = 1
CLASS_EXT = 2
CLASS_MIX = 3


def mesh_pixel_hits(bvh, cam):
    """First hits of all pixel-center rays: (face, t, weights).

    Separated from the error computation so several evaluations against
    the same geometry can share one set of casts.
    """
    xs = (np.arange(cam.width) + 0.5)
    ys = (np.arange(cam.height) + 0.5)
    px, py = np.meshgrid(xs, ys, indexing="xy")
    origins, dirs = cam.pixel_rays(px.ravel(), py.ravel())
    return spatial.ray_first_hits(bvh, origins, dirs, t_min=0.0)


def uv_at_hits(mesh, face, w, field=None):
    """Interpolated uv at each hit; NaN rows where face < 0.

    With a field, the slid coordinates T_G + d are interpolated instead.
    """
    corner = mesh.face_uvs()
    if field is not None:
        corner = corner + field.d[mesh.faces_v]
    out = np.full((len(face), 2), np.nan)
    ok = face >= 0
    out[ok] = np.einsum("nk,nkj->nj", w[ok], corner[face[ok]])
    return out


def pixel_error_image(gt, test, cam, gt_bvh=None, test_bvh=None,
                      gt_field=None, test_field=None,
                      gt_hits=None, test_hits=None):
    """Per-pixel uv error between two meshes seen from one camera.

    Casts the pixel-center ray into both meshes; where both hit, the
    error is the Euclidean distance of the interpolated uvs (optionally
    slid by per-mesh fields).  Returns (error image, valid mask), each
    (height, width); invalid pixels hold 0.  Symmetric in its meshes.
    Precomputed bvhs or hits may be supplied to share work.
    """
    if gt_hits is None:
        gt_hits = mesh_pixel_hits(gt_bvh or spatial.Bvh3(gt), cam)
    if test_hits is None:
        test_hits = mesh_pixel_hits(test_bvh or spatial.Bvh3(test), cam)
    uv_a = uv_at_hits(gt, gt_hits[0], gt_hits[2], gt_field)
    uv_b = uv_at_hits(test, test_hits[0], test_hits[2], test_field)
    valid = (gt_hits[0] >= 0) & (test_hits[0] >= 0)
    err = np.zeros(len(valid))
    err[valid] = np.linalg.norm(uv_a[valid] - uv_b[valid], axis=1)
    shape = (cam.height, cam.width)
    return err.reshape(shape), valid.reshape(shape)


def sqrt_mse(err, valid):
    """Root of the mean squared error over valid pixels."""
    n = int(np.count_nonzero(valid))
    if n == 0:
        raise ValueError("no valid pixels")
    e = err[valid]
    return float(np.sqrt((e @ e) / n))


def dataset_stats(values):
    """(mean, sample standard deviation) of per-example values."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(values) < 2:
        raise ValueError("need at least 2 values for mean +/- std")
    return float(values.mean()), float(values.std(ddof=1))


class ExtremumEntry:
    """One extremal quantity: value plus where it was attained."""

    def __init__(self, value, pose_id, camera_id, location):
        self.value = value
        self.pose_id = pose_id
        self.camera_id = camera_id
        self.location = location  # edge (i, j) or vertex id

    def __repr__(self):
        return (f"ExtremumEntry(value={self.value:.6g}, "
                f"pose={self.pose_id}, camera={self.camera_id}, "
                f"location={self.location})")


class EdgeExtremaReport:
    """Global maxima over a set of fields on one mesh.

    Attributes (each an ExtremumEntry, or None when undefined):
    max_tn_edge: largest slid-uv jump over an assigned-assigned edge;
    max_d_edge: largest displacement jump over such an edge;
    max_d_vertex: largest single displacement;
    max_hit_edge: largest 3D distance between the ground-truth
    intersection points of a ray-ray edge (needs in-memory hit points).
    """

    def __init__(self):
        self.max_tn_edge = None
        self.max_d_edge = None
        self.max_d_vertex = None
        self.max_hit_edge = None


def _consider(current, value, pose_id, cam_id, location):
    if value is None:
        return current
    if current is None or value > current.value:
        return ExtremumEntry(value, pose_id, cam_id, location)
    return current


def edge_extrema(mesh, fields):
    """Scan fields (mapping (pose_id, camera_id) -> TSField) for extrema.

    Edges count when both endpoints are assigned; the intersection-point
    quantity additionally needs both endpoints ray-assigned on a field
    that still carries hit points.
    """
    edges = mesh.edges()
    uv = mesh.vertex_uv()
    i, j = edges[:, 0], edges[:, 1]
    report = EdgeExtremaReport()
    for (pose_id, cam_id), field in fields.items():
        a = field.assigned
        both = a[i] & a[j]
        if np.any(both):
            tn = uv + field.d
            jump_tn = np.linalg.norm(tn[i[both]] - tn[j[both]], axis=1)
            k = int(np.argmax(jump_tn))
            e = (int(i[both][k]), int(j[both][k]))
            report.max_tn_edge = _consider(report.max_tn_edge,
                                           float(jump_tn[k]),
                                           pose_id, cam_id, e)
            jump_d = np.linalg.norm(field.d[i[both]] - field.d[j[both]],
                                    axis=1)
            k = int(np.argmax(jump_d))
            e = (int(i[both][k]), int(j[both][k]))
            report.max_d_edge = _consider(report.max_d_edge,
                                          float(jump_d[k]),
                                          pose_id, cam_id, e)
        if np.any(a):
            norms = np.linalg.norm(field.d, axis=1)
            norms[~a] = -1.0
            k = int(np.argmax(norms))
            report.max_d_vertex = _consider(report.max_d_vertex,
                                            float(norms[k]),
                                            pose_id, cam_id, k)
        if field.hit_points is not None:
            ray = field.source == SOURCE_RAY
            rr = ray[i] & ray[j]
            if np.any(rr):
                gap = np.linalg.norm(field.hit_points[i[rr]]
                                     - field.hit_points[j[rr]], axis=1)
                k = int(np.argmax(gap))
                e = (int(i[rr][k]), int(j[rr][k]))
                report.max_hit_edge = _consider(report.max_hit_edge,
                                                float(gap[k]),
                                                pose_id, cam_id, e)
    return report


def source_class_image(mesh, field, hits, shape):
    """Per-pixel provenance class from the hit face's corner sources.

    0 where the ray missed; CLASS_RAY where all three corners are ray;
    CLASS_EXT where all are extrapolated; CLASS_MIX otherwise.
    """
    face, _, _ = hits
    cls = np.zeros(len(face), dtype=np.uint8)
    ok = face >= 0
    corner_src = field.source[mesh.faces_v[face[ok]]]
    all_ray = np.all(corner_src == SOURCE_RAY, axis=1)
    all_ext = np.all(corner_src == SOURCE_EXT, axis=1)
    val = np.full(len(corner_src), CLASS_MIX, dtype=np.uint8)
    val[all_ray] = CLASS_RAY
    val[all_ext] = CLASS_EXT
    cls[ok] = val
    return cls.reshape(shape)


def error_breakdown(err, valid, class_image):
    """SqrtMSE per provenance class.

    Returns a dict with keys among {"ray", "ext", "combination"}; classes
    with no valid pixels are absent, never zero.
    """
    out = {}
    for name, code in (("ray", CLASS_RAY), ("ext", CLASS_EXT),
                       ("combination", CLASS_MIX)):
        sel = valid & (class_image == code)
        if np.any(sel):
            e = err[sel]
            out[name] = float(np.sqrt((e @ e) / e.size))
    return out


def error_colormap(err, valid):
    """RGB error map: blue at 0 to red at >= ERROR_RAMP_MAX, white outside."""
    t = np.clip(err / ERROR_RAMP_MAX, 0.0, 1.0)
    rgb = np.empty(err.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = np.rint(255.0 * t)
    rgb[..., 1] = 0
    rgb[..., 2] = np.rint(255.0 * (1.0 - t))
    rgb[~valid] = 255
    return rgb


def save_ppm(rgb, path):
    """Write an (h, w, 3) uint8 image as binary PPM (P6)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())
