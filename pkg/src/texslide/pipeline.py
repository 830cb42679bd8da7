"""Multi-stage routines shared by the command-line tools and experiments.

One displacement field per (pose, camera) is generated by ray casting,
cleaned, extrapolated over the surface, and smoothed; evaluation casts
pixel rays into the wrinkled and smooth meshes and compares the uv each
paints.  Casts are shared wherever two methods look at the same geometry
(a field changes the uv at a hit, never the hit itself).
"""

import numpy as np

from . import metrics, slidegen, spatial, viewblend
from .extrapolate import extrapolate_and_smooth
from .mesh import subdivide

EVAL_WIDTH = 256


def subdivided(mesh, level):
    for _ in range(int(level)):
        mesh = subdivide(mesh)
    return mesh


def build_field(gt, inferred, cam, gt_bvh=None, inferred_bvh=None,
                tau_uv=slidegen.TAU_UV_DEFAULT,
                tau_d=slidegen.TAU_D_DEFAULT,
                smooth_iters=10, extrapolate=True, occluder=None,
                occluder_bvh=None):
    """Ray-generated field for one camera, cleaned and optionally filled.

    Setting extrapolate False returns the raw assigned-only field (after
    far-edge removal and thresholding), which is what training targets
    and extrapolation experiments start from.
    """
    field = slidegen.generate(gt, inferred, cam, gt_bvh=gt_bvh,
                              inferred_bvh=inferred_bvh, occluder=occluder,
                              occluder_bvh=occluder_bvh)
    field = slidegen.remove_far_edges(field, inferred, tau_uv)
    field = slidegen.apply_threshold(field, tau_d)
    if extrapolate:
        field = extrapolate_and_smooth(inferred, field, smooth_iters)
    return field


def pose_fields(gt, inferred, cams, **kwargs):
    """One field per camera against shared bvhs."""
    gt_bvh = spatial.Bvh3(gt)
    inferred_bvh = spatial.Bvh3(inferred)
    return [build_field(gt, inferred, cam, gt_bvh=gt_bvh,
                        inferred_bvh=inferred_bvh, **kwargs)
            for cam in cams]


class MethodEntry:
    """A named way of rendering the pose: a mesh plus an optional field.

    field and class_field may be a single TSField or a per-camera list.
    Entries naming the same mesh object share its bvh and pixel casts.
    """

    def __init__(self, name, mesh, field=None, class_field=None):
        self.name = name
        self.mesh = mesh
        self.field = field
        self.class_field = class_field  # source tags for the breakdown

    @staticmethod
    def _pick(value, cam_idx):
        if isinstance(value, (list, tuple)):
            return value[cam_idx]
        return value


def pose_method_errors(gt, cams, entries, width=EVAL_WIDTH, gt_bvh=None,
                       with_images=False):
    """SqrtMSE of each method entry from each camera.

    Returns {name: [per-camera SqrtMSE]}; with_images also returns
    {name: [(err, valid)]} and, for entries carrying a class_field,
    {name: [breakdown dict]}.
    """
    if gt_bvh is None:
        gt_bvh = spatial.Bvh3(gt)
    mesh_bvh = {}
    for e in entries:
        if id(e.mesh) not in mesh_bvh:
            mesh_bvh[id(e.mesh)] = spatial.Bvh3(e.mesh)
    scores = {e.name: [] for e in entries}
    images = {e.name: [] for e in entries}
    breakdown = {e.name: [] for e in entries}
    for k, cam in enumerate(cams):
        eval_cam = cam
        if cam.width != width:
            eval_cam = cam.with_size(width, width)
        gt_hits = metrics.mesh_pixel_hits(gt_bvh, eval_cam)
        hit_cache = {}
        for e in entries:
            if id(e.mesh) not in hit_cache:
                hit_cache[id(e.mesh)] = metrics.mesh_pixel_hits(
                    mesh_bvh[id(e.mesh)], eval_cam)
            hits = hit_cache[id(e.mesh)]
            err, valid = metrics.pixel_error_image(
                gt, e.mesh, eval_cam, test_field=e._pick(e.field, k),
                gt_hits=gt_hits, test_hits=hits)
            scores[e.name].append(metrics.sqrt_mse(err, valid))
            if with_images:
                images[e.name].append((err, valid))
            if e.class_field is not None:
                cls_field = e._pick(e.class_field, k)
                cls = metrics.source_class_image(e.mesh, cls_field,
                                                 hits, err.shape)
                breakdown[e.name].append(
                    metrics.error_breakdown(err, valid, cls))
    if with_images:
        return scores, images, breakdown
    return scores


def blend_sweep(gt, inferred, camera_array, fields, params,
                width=EVAL_WIDTH, gt_bvh=None, inferred_bvh=None):
    """SqrtMSE of the blended view at each interpolation parameter.

    At a parameter whose weights are one-hot the blended field and the
    evaluation camera are the originals, so endpoint rows equal the
    single-camera evaluation exactly.
    """
    if gt_bvh is None:
        gt_bvh = spatial.Bvh3(gt)
    if inferred_bvh is None:
        inferred_bvh = spatial.Bvh3(inferred)
    rows = []
    for t in params:
        w = viewblend.weights_for(camera_array, t)
        field = viewblend.blend(fields, w)
        cam = viewblend.interpolate_camera(camera_array, w)
        if cam.width != width:
            cam = cam.with_size(width, width)
        err, valid = metrics.pixel_error_image(
            gt, inferred, cam, gt_bvh=gt_bvh, test_bvh=inferred_bvh,
            test_field=field)
        rows.append((t if np.isscalar(t) else tuple(np.ravel(t)),
                     metrics.sqrt_mse(err, valid)))
    return rows
