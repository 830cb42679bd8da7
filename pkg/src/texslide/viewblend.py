"""Interpolating sliding fields across camera views.

Weights live in the camera layout's parameter space: hat functions on a
line, bilinear on a grid, arc-length piecewise-linear on a path.  The
blended field is the weighted sum of the per-camera fields; since all
fields share the same base uvs, blending displacement equals blending
the slid coordinates themselves.
"""

import numpy as np

from .camera import Camera
from .slidegen import TSField, SOURCE_RAY, SOURCE_EXT


class InterpWeights:
    """Convex per-camera weights at one layout parameter."""

    def __init__(self, weights, param):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.param = param
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be convex (>= 0, sum 1)")


def _check_param(t, name="param"):
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"{name} {t} outside [0, 1]")


def _hat(t, count):
    """Hat weights of t in [0, 1] over count evenly spaced stations."""
    w = np.zeros(count)
    if count == 1:
        w[0] = 1.0
        return w
    s = t * (count - 1)
    i = min(int(np.floor(s)), count - 2)
    f = s - i
    w[i] = 1.0 - f
    w[i + 1] = f
    return w


def weights_for(camera_array, param):
    """Interpolation weights at a layout parameter.

    line: scalar in [0, 1], hat weights on the two bracketing cameras.
    grid: pair in [0, 1]^2, bilinear over the four bracketing corners
    (row-major camera order, u across columns, v across rows).
    path: scalar in [0, 1] of total arc length along camera positions.
    """
    layout = camera_array.layout
    if layout == "line":
        t = float(np.asarray(param).ravel()[0])
        _check_param(t)
        return InterpWeights(_hat(t, len(camera_array)), t)
    if layout == "grid":
        tu, tv = np.asarray(param, dtype=np.float64).ravel()
        _check_param(tu, "param u")
        _check_param(tv, "param v")
        wu = _hat(tu, camera_array.cols)
        wv = _hat(tv, camera_array.rows)
        return InterpWeights(np.outer(wv, wu).ravel(), (tu, tv))
    if layout == "path":
        t = float(np.asarray(param).ravel()[0])
        _check_param(t)
        pos = np.array([c.position for c in camera_array.cameras])
        seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        total = seg.sum()
        if total == 0.0:
            raise ValueError("path cameras are all coincident")
        target = t * total
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        i = int(np.searchsorted(cum, target, side="right") - 1)
        i = min(max(i, 0), len(seg) - 1)
        f = 0.0 if seg[i] == 0.0 else (target - cum[i]) / seg[i]
        f = min(max(f, 0.0), 1.0)
        w = np.zeros(len(camera_array))
        w[i] = 1.0 - f
        w[i + 1] = f
        return InterpWeights(w, t)
    raise ValueError(f"unknown layout {layout!r}")


def blend(fields, interp):
    """Weighted combination of per-camera fields (all fully valued).

    Zero-weight cameras are skipped entirely; a single weight of exactly
    1 returns a bitwise copy of that camera's field.  Source tags stay
    "ray" only where every positive-weight camera says ray.
    """
    w = interp.weights if isinstance(interp, InterpWeights) \
        else np.asarray(interp, dtype=np.float64)
    if len(w) != len(fields):
        raise ValueError("one weight per field required")
    n = fields[0].n_vertices
    for f in fields:
        if f.n_vertices != n:
            raise ValueError("fields disagree on vertex count")
    active = [i for i in range(len(fields)) if w[i] != 0.0]
    if len(active) == 1 and w[active[0]] == 1.0:
        return fields[active[0]].copy()
    d = np.zeros((n, 2))
    for i in active:
        d += w[i] * fields[i].d
    source = np.full(n, SOURCE_RAY, np.uint8)
    for i in active:
        source[fields[i].source != SOURCE_RAY] = SOURCE_EXT
    return TSField(d, source)


def interpolate_camera(camera_array, interp):
    """Evaluation camera at the interpolation parameter.

    A weight of exactly 1 returns that camera object itself, so endpoint
    evaluations reuse the original cameras bit for bit; otherwise
    position, look_at, up, and fov are weight-averaged.
    """
    w = interp.weights if isinstance(interp, InterpWeights) \
        else np.asarray(interp, dtype=np.float64)
    cams = camera_array.cameras
    hot = np.flatnonzero(w == 1.0)
    if len(hot) == 1:
        return cams[hot[0]]
    active = np.flatnonzero(w != 0.0)
    pos = sum(w[i] * cams[i].position for i in active)
    look = sum(w[i] * cams[i].look_at for i in active)
    up = sum(w[i] * cams[i].up for i in active)
    fov = sum(w[i] * cams[i].fov_y for i in active)
    return Camera(pos, look, up, fov, cams[active[0]].width,
                  cams[active[0]].height)
