"""Synthetic wrinkled-cloth suite with known ground truth.

A flat two-sided unit sheet is wrinkled by a sum of oriented sine waves
(the ground truth) and over-smoothed into the "inferred" counterpart, so
every downstream quantity can be checked against geometry we control.
Both meshes always share connectivity and texture coordinates.
"""

import json
import os

import numpy as np

from .camera import Camera, CameraArray, save_camera_array, load_camera_array
from .mesh import (TexturedMesh, Pose, SIDE_FRONT, SIDE_BACK,
                   save_obj, load_obj, umbrella_smooth)

BACK_OFFSET = 0.01  # thickness between the front and back layers

# Wrinkle parameter ranges: amplitude, frequency, phase, direction angle.
AMP_RANGE = (0.01, 0.045)
FREQ_RANGE = (1.5, 4.0)

DEFAULT_N = 65
DEFAULT_K = 4
DEFAULT_SMOOTH_ITERS = 30
DEFAULT_POSES = 200


def gen_rest(n=DEFAULT_N):
    """Flat two-sided n x n unit sheet in the y = 0 plane.

    uvs equal the (x, z) coordinates; the back layer duplicates the front
    vertices offset to y = -BACK_OFFSET and shares the uv table, with
    faces tagged back.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    g = np.linspace(0.0, 1.0, n)
    x, z = np.meshgrid(g, g, indexing="xy")
    front = np.stack([x.ravel(), np.zeros(n * n), z.ravel()], axis=1)
    back = front.copy()
    back[:, 1] -= BACK_OFFSET
    vertices = np.concatenate([front, back])
    uvs = np.stack([x.ravel(), z.ravel()], axis=1)

    idx = np.arange(n * n).reshape(n, n)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    quads_a = np.stack([v00, v10, v01], axis=1)
    quads_b = np.stack([v10, v11, v01], axis=1)
    front_faces = np.concatenate([quads_a, quads_b])
    back_faces = front_faces + n * n
    faces_v = np.concatenate([front_faces, back_faces]).astype(np.int32)
    # Back faces reuse the front uv indices: one shared uv square.
    faces_t = np.concatenate([front_faces, front_faces]).astype(np.int32)
    tag = np.concatenate([
        np.full(len(front_faces), SIDE_FRONT, np.uint8),
        np.full(len(back_faces), SIDE_BACK, np.uint8),
    ])
    return TexturedMesh(vertices, uvs, faces_v, faces_t, tag)


def gen_pose(seed, k=DEFAULT_K, pose_id=None):
    """Random wrinkle parameters, 4 per wrinkle: (a, f, psi, phi).

    Deterministic under seed.  k = 0 degenerates to a single zero pad so
    the parameter vector is never empty.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    params = np.empty(4 * k)
    for i in range(k):
        params[4 * i + 0] = rng.uniform(*AMP_RANGE)
        params[4 * i + 1] = rng.uniform(*FREQ_RANGE)
        params[4 * i + 2] = rng.uniform(0.0, 2.0 * np.pi)
        params[4 * i + 3] = rng.uniform(0.0, np.pi)
    if k == 0:
        params = np.zeros(1)
    return Pose(seed if pose_id is None else pose_id, params)


def wrinkle_height(params, u, v):
    """Height field y(u, v) of the wrinkle set and its (du, dv) gradient."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    y = np.zeros_like(u)
    yu = np.zeros_like(u)
    yv = np.zeros_like(u)
    k = len(params) // 4
    for i in range(k):
        a, f, psi, phi = params[4 * i: 4 * i + 4]
        c, s = np.cos(phi), np.sin(phi)
        arg = 2.0 * np.pi * f * (u * c + v * s) + psi
        y += a * np.sin(arg)
        grad = a * np.cos(arg) * 2.0 * np.pi * f
        yu += grad * c
        yv += grad * s
    return y, yu, yv


def gen_ground_truth(rest, pose):
    """Wrinkled sheet: out-of-plane sines plus tangential compensation.

    y(u, v) is the wrinkle height; in-plane positions shift by
    -(1/4) grad(y^2) to approximately preserve edge lengths.  uvs are
    untouched: texture coordinates stay material coordinates.
    """
    uv = rest.vertex_uv()
    y, yu, yv = wrinkle_height(pose.params, uv[:, 0], uv[:, 1])
    pos = rest.vertices.copy()
    # -(1/4) d(y^2)/du = -(1/2) y y_u, same for v.
    pos[:, 0] -= 0.5 * y * yu
    pos[:, 2] -= 0.5 * y * yv
    pos[:, 1] += y
    return rest.with_vertices(pos)


def gen_inferred(gt, smoothing_iters=DEFAULT_SMOOTH_ITERS):
    """Over-smoothed stand-in for an upstream predictor's output.

    The sheet boundary is held fixed while smoothing.  Predictors recover
    hems and seams well, and letting the open border contract would shrink
    the whole sheet instead of just flattening the wrinkles.
    """
    if smoothing_iters < 0:
        raise ValueError("smoothing_iters must be >= 0")
    if smoothing_iters == 0:
        return gt.copy()
    return umbrella_smooth(gt, iterations=smoothing_iters, lam=0.5,
                           fixed=gt.boundary_vertices())


def make_pose_meshes(rest, pose, smoothing_iters=DEFAULT_SMOOTH_ITERS):
    """(gt, inferred) pair for one pose."""
    gt = gen_ground_truth(rest, pose)
    return gt, gen_inferred(gt, smoothing_iters)


def default_cameras(width=256, height=256):
    """Two front cameras on a line above the sheet.

    Steep views keep the sliding displacements small enough to survive
    the cleanup thresholds while the stereo baseline still gives the
    triangulation usable parallax.
    """
    # up = +z, never parallel to any downward view axis: cameras
    # interpolated between the two stations stay constructible even when
    # one ends up looking straight down.
    cams = [
        Camera([0.2, 1.25, 0.4], [0.5, 0.0, 0.5], [0, 0, 1], 60.0,
               width, height),
        Camera([0.8, 1.25, 0.6], [0.5, 0.0, 0.5], [0, 0, 1], 60.0,
               width, height),
    ]
    return CameraArray(cams, layout="line")


def scene_center(rest):
    """Bounding-box center of the garment, the view-descriptor anchor."""
    return 0.5 * (rest.vertices.min(axis=0) + rest.vertices.max(axis=0))


def split_ids(n_poses):
    """80-10-10 train/validation/test split over sequential pose ids."""
    n_train = int(round(0.8 * n_poses))
    n_val = int(round(0.1 * n_poses))
    ids = list(range(n_poses))
    return {"train": ids[:n_train],
            "val": ids[n_train:n_train + n_val],
            "test": ids[n_train + n_val:]}


def build_dataset(out_dir, n_poses=DEFAULT_POSES, n=DEFAULT_N, k=DEFAULT_K,
                  smoothing_iters=DEFAULT_SMOOTH_ITERS, seed=0,
                  cameras=None, image_size=256):
    """Generate and write the synthetic suite; returns the manifest dict.

    Writes rest.obj, per-pose gt/inferred OBJs, cameras.json, and
    manifest.json into out_dir.  Pose i uses seed + i, so the suite is
    reproducible and extensible.
    """
    os.makedirs(out_dir, exist_ok=True)
    rest = gen_rest(n)
    save_obj(rest, os.path.join(out_dir, "rest.obj"))
    if cameras is None:
        cameras = default_cameras(image_size, image_size)
    save_camera_array(cameras, os.path.join(out_dir, "cameras.json"))
    poses = []
    for i in range(n_poses):
        pose = gen_pose(seed + i, k, pose_id=i)
        gt, inferred = make_pose_meshes(rest, pose, smoothing_iters)
        gt_path = f"pose_{i:04d}_gt.obj"
        inf_path = f"pose_{i:04d}_inferred.obj"
        save_obj(gt, os.path.join(out_dir, gt_path))
        save_obj(inferred, os.path.join(out_dir, inf_path))
        poses.append({"id": i, "params": [float(p) for p in pose.params],
                      "gt": gt_path, "inferred": inf_path})
    manifest = {
        "rest": "rest.obj",
        "poses": poses,
        "cameras": "cameras.json",
        "split": split_ids(n_poses),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


class Dataset:
    """Loaded suite: manifest plus lazy mesh access by pose id."""

    def __init__(self, manifest_path):
        self.root = os.path.dirname(os.path.abspath(manifest_path))
        with open(manifest_path) as fh:
            self.manifest = json.load(fh)
        self.by_id = {p["id"]: p for p in self.manifest["poses"]}

    @property
    def split(self):
        return self.manifest["split"]

    def pose(self, pose_id):
        entry = self.by_id[pose_id]
        return Pose(entry["id"], entry["params"])

    def rest(self):
        return load_obj(os.path.join(self.root, self.manifest["rest"]))

    def gt(self, pose_id):
        return load_obj(os.path.join(self.root, self.by_id[pose_id]["gt"]))

    def inferred(self, pose_id):
        return load_obj(os.path.join(self.root,
                                     self.by_id[pose_id]["inferred"]))

    def cameras(self):
        return load_camera_array(os.path.join(self.root,
                                              self.manifest["cameras"]))
