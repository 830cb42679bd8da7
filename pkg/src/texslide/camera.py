"""Pinhole cameras: projection, per-vertex rays, view descriptors, JSON I/O.

Conventions fixed once for the whole package: right-handed camera frame,
image origin at the top-left corner, pixel centers at half-integer
coordinates, square pixels, vertical field of view.
"""

import json

import numpy as np


class Camera:
    """Pinhole camera.

    Parameters
    ----------
    position : (3,) float array
        Aperture location.
    look_at : (3,) float array
        Point the optical axis passes through.
    up : (3,) float array
        Approximate up direction; must not be parallel to the view axis.
    fov_y : float
        Vertical field of view in degrees, in (0, 180).
    width, height : int
        Image size in pixels, each >= 1.
    """

    def __init__(self, position, look_at, up, fov_y, width, height):
        self.position = np.asarray(position, dtype=np.float64).reshape(3)
        self.look_at = np.asarray(look_at, dtype=np.float64).reshape(3)
        self.up = np.asarray(up, dtype=np.float64).reshape(3)
        self.fov_y = float(fov_y)
        self.width = int(width)
        self.height = int(height)
        if not 0.0 < self.fov_y < 180.0:
            raise ValueError("fov_y must be in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        fwd = self.look_at - self.position
        norm = np.linalg.norm(fwd)
        if norm == 0.0:
            raise ValueError("look_at coincides with position")
        fwd = fwd / norm
        right = np.cross(fwd, self.up)
        rnorm = np.linalg.norm(right)
        if rnorm < 1e-12:
            raise ValueError("up is parallel to the view axis")
        right = right / rnorm
        self.forward = fwd
        self.right = right
        self.true_up = np.cross(right, fwd)
        # Focal length in pixels from the vertical fov; square pixels.
        self.focal = (self.height / 2.0) / np.tan(np.radians(self.fov_y) / 2.0)

    def project(self, points):
        """Project 3D points to pixel coordinates.

        Parameters
        ----------
        points : (3,) or (n, 3) array

        Returns
        -------
        pixels : (n, 2) array
            (px, py), top-left origin, +y down.  NaN where behind.
        depth : (n,) array
            Distance along the view axis (signed; <= 0 means behind).
        behind : (n,) bool array

        Raises
        ------
        ValueError
            If a point coincides with the aperture.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        q = pts - self.position
        if np.any(np.einsum("ij,ij->i", q, q) == 0.0):
            raise ValueError("point at the camera aperture")
        z = q @ self.forward
        x = q @ self.right
        y = q @ self.true_up
        behind = z <= 0.0
        px = np.full(len(pts), np.nan)
        py = np.full(len(pts), np.nan)
        ok = ~behind
        px[ok] = self.width / 2.0 + self.focal * x[ok] / z[ok]
        py[ok] = self.height / 2.0 - self.focal * y[ok] / z[ok]
        return np.stack([px, py], axis=1), z, behind

    def vertex_rays(self, vertices):
        """Rays from the aperture through each vertex: (origins, unit dirs)."""
        pts = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
        d = pts - self.position
        norms = np.sqrt(np.einsum("ij,ij->i", d, d))
        if np.any(norms == 0.0):
            raise ValueError("vertex at the camera aperture")
        d = d / norms[:, None]
        o = np.broadcast_to(self.position, d.shape).copy()
        return o, d

    def pixel_rays(self, px, py):
        """Rays through pixel coordinates (fractional allowed).

        Pixel (i, j)'s center is (i + 0.5, j + 0.5).
        """
        px = np.atleast_1d(np.asarray(px, dtype=np.float64))
        py = np.atleast_1d(np.asarray(py, dtype=np.float64))
        xc = (px - self.width / 2.0) / self.focal
        yc = (self.height / 2.0 - py) / self.focal
        d = (xc[:, None] * self.right + yc[:, None] * self.true_up + self.forward)
        d /= np.sqrt(np.einsum("ij,ij->i", d, d))[:, None]
        o = np.broadcast_to(self.position, d.shape).copy()
        return o, d

    def with_size(self, width, height):
        """Same viewpoint at another image resolution."""
        return Camera(self.position, self.look_at, self.up, self.fov_y,
                      width, height)

    def to_dict(self):
        return {
            "position": [float(v) for v in self.position],
            "look_at": [float(v) for v in self.look_at],
            "up": [float(v) for v in self.up],
            "fov_y_deg": self.fov_y,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["position"], d["look_at"], d["up"], d["fov_y_deg"],
                   d["width"], d["height"])


def view_descriptor(cam, scene_center):
    """Unit direction from the scene center toward the camera position."""
    center = np.asarray(scene_center, dtype=np.float64).reshape(3)
    d = cam.position - center
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise ValueError("camera position coincides with the scene center")
    return d / norm


class CameraArray:
    """Ordered cameras plus the layout used for view interpolation.

    layout is "line", "grid" (row-major, rows x cols), or "path"
    (piecewise-linear, arc-length parameterized by camera positions).
    """

    def __init__(self, cameras, layout="line", rows=None, cols=None):
        if layout not in ("line", "grid", "path"):
            raise ValueError(f"unknown layout {layout!r}")
        self.cameras = list(cameras)
        self.layout = layout
        if layout == "grid":
            if rows is None or cols is None:
                raise ValueError("grid layout needs rows and cols")
            if rows * cols != len(self.cameras):
                raise ValueError("rows * cols must equal the camera count")
        elif layout == "line" and len(self.cameras) < 2:
            raise ValueError("line layout needs at least 2 cameras")
        elif layout == "path" and len(self.cameras) < 2:
            raise ValueError("path layout needs at least 2 cameras")
        self.rows = rows
        self.cols = cols

    def __len__(self):
        return len(self.cameras)

    def __getitem__(self, i):
        return self.cameras[i]

    def to_dict(self):
        d = {"layout": self.layout,
             "cameras": [c.to_dict() for c in self.cameras]}
        if self.layout == "grid":
            d["rows"] = self.rows
            d["cols"] = self.cols
        return d

    @classmethod
    def from_dict(cls, d):
        cams = [Camera.from_dict(c) for c in d["cameras"]]
        return cls(cams, d.get("layout", "line"),
                   d.get("rows"), d.get("cols"))


def save_camera(cam, path):
    with open(path, "w") as fh:
        json.dump(cam.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_camera(path):
    with open(path) as fh:
        return Camera.from_dict(json.load(fh))


def save_camera_array(arr, path):
    with open(path, "w") as fh:
        json.dump(arr.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_camera_array(path):
    with open(path) as fh:
        return CameraArray.from_dict(json.load(fh))
