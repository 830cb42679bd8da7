"""Dense uv-space image form of sliding fields (network input/output).

A field on a two-sided mesh becomes a width x width x 4 image: channels
0-1 hold the front side's (du, dv), channels 2-3 the back side's.
Vertices are splatted bilinearly at their uv location; sampling goes the
other way.  Pixel i covers uv [i/W, (i+1)/W) with its center at
(i + 0.5)/W, and u maps to columns, v to rows (row 0 at v = 0).
"""

import struct

import numpy as np
from scipy import ndimage

from . import _kernels, spatial
from .mesh import SIDE_FRONT, SIDE_BACK
from .slidegen import TSField, SOURCE_EXT

DEFAULT_WIDTH = 64


class PixelImage:
    """Front/back uv-space raster of a displacement field.

    data is (height, width, 4) float64; valid_mask is (height, width, 2)
    bool (front, back).  Invalid pixels hold 0.
    """

    def __init__(self, data, valid_mask):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.valid_mask = np.ascontiguousarray(valid_mask, dtype=bool)
        if self.data.ndim != 3 or self.data.shape[2] != 4:
            raise ValueError("data must be (h, w, 4)")
        if self.valid_mask.shape != self.data.shape[:2] + (2,):
            raise ValueError("valid_mask must be (h, w, 2)")

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @classmethod
    def zeros(cls, width, height=None):
        height = width if height is None else height
        return cls(np.zeros((height, width, 4)),
                   np.zeros((height, width, 2), dtype=bool))

    def copy(self):
        return PixelImage(self.data.copy(), self.valid_mask.copy())

    def loss_mask(self):
        """valid_mask expanded to the 4 channels."""
        return np.repeat(self.valid_mask, 2, axis=2)


def _vertex_sides(mesh):
    """(front_vertices, back_vertices) index arrays from face tags."""
    if mesh.side_tag is None:
        raise ValueError("mesh has no side_tag; the pixel form needs one")
    front = np.unique(mesh.faces_v[mesh.side_tag == SIDE_FRONT])
    back = np.unique(mesh.faces_v[mesh.side_tag == SIDE_BACK])
    return front, back


def _bilinear_corners(uv, width):
    """Corner indices and weights of the bilinear stencil at each uv.

    Continuous pixel coordinates x = u * W - 0.5 are clamped to
    [0, W - 1], so border uvs fold onto the edge pixels.
    """
    if width < 2:
        raise ValueError("image width must be >= 2")
    x = np.clip(uv[:, 0] * width - 0.5, 0.0, width - 1.0)
    y = np.clip(uv[:, 1] * width - 0.5, 0.0, width - 1.0)
    ix = np.minimum(np.floor(x).astype(np.int64), width - 2)
    iy = np.minimum(np.floor(y).astype(np.int64), width - 2)
    fx = x - ix
    fy = y - iy
    return ix, iy, fx, fy


def _side_coverage(mesh, side, width):
    """Pixels whose center uv lies inside some uv triangle of the side."""
    sel = mesh.side_tag == side
    if not np.any(sel):
        return np.zeros((width, width), dtype=bool)
    index = spatial.UvIndex(mesh.face_uvs()[sel])
    g = (np.arange(width) + 0.5) / width
    uu, vv = np.meshgrid(g, g, indexing="xy")
    centers = np.stack([uu.ravel(), vv.ravel()], axis=1)
    offsets, _, _ = spatial.uv_locate_batch(index, centers)
    return (np.diff(offsets) > 0).reshape(width, width)


def rasterize(mesh, field, width=DEFAULT_WIDTH):
    """Splat a field into the image form.

    Each vertex splats its d bilinearly into its side's channel pair;
    overlaps are weight-averaged (one constant survives bitwise).  Pixels
    inside the garment's uv coverage that receive no splat are filled
    from their nearest valid pixel and marked valid.
    """
    if field.n_vertices != mesh.n_vertices:
        raise ValueError("field does not match the mesh")
    front, back = _vertex_sides(mesh)
    uv = mesh.vertex_uv()
    img = PixelImage.zeros(width)
    for side, verts in ((SIDE_FRONT, front), (SIDE_BACK, back)):
        if len(verts) == 0:
            continue
        ix, iy, fx, fy = _bilinear_corners(uv[verts], width)
        pix = []
        wts = []
        vals = []
        for dx, dy, w in (
                (0, 0, (1 - fx) * (1 - fy)),
                (1, 0, fx * (1 - fy)),
                (0, 1, (1 - fx) * fy),
                (1, 1, fx * fy)):
            pix.append((iy + dy) * width + (ix + dx))
            wts.append(w)
            vals.append(field.d[verts])
        pix = np.concatenate(pix)
        wts = np.concatenate(wts)
        vals = np.ascontiguousarray(np.concatenate(vals))
        acc = np.zeros((width * width, 2))
        wsum = np.zeros(width * width)
        _kernels.splat_mean(pix, wts, vals, acc, wsum)
        valid = (wsum > 0).reshape(width, width)
        values = acc.reshape(width, width, 2)
        coverage = _side_coverage(mesh, side, width)
        holes = coverage & ~valid
        if np.any(holes) and np.any(valid):
            _, (ny, nx) = ndimage.distance_transform_edt(
                ~valid, return_indices=True)
            values[holes] = values[ny[holes], nx[holes]]
            valid |= holes
        c0 = 0 if side == SIDE_FRONT else 2
        img.data[:, :, c0:c0 + 2] = np.where(valid[:, :, None], values, 0.0)
        img.valid_mask[:, :, 0 if side == SIDE_FRONT else 1] = valid
    return img


def sample(image, mesh):
    """Read a per-vertex field back out of the image form.

    Bilinear sample at each vertex uv on its side's channels.  Vertices
    whose whole stencil is invalid get 0; their count is reported on the
    returned field as .sample_warnings.  All vertices come back assigned
    with source "ext" (image values carry no ray provenance).
    """
    front, back = _vertex_sides(mesh)
    uv = mesh.vertex_uv()
    width = image.width
    d = np.zeros((mesh.n_vertices, 2))
    warnings = 0
    for side, verts in ((SIDE_FRONT, front), (SIDE_BACK, back)):
        if len(verts) == 0:
            continue
        c0 = 0 if side == SIDE_FRONT else 2
        chan = image.data[:, :, c0:c0 + 2]
        mask = image.valid_mask[:, :, 0 if side == SIDE_FRONT else 1]
        ix, iy, fx, fy = _bilinear_corners(uv[verts], width)
        p00 = chan[iy, ix]
        p10 = chan[iy, ix + 1]
        p01 = chan[iy + 1, ix]
        p11 = chan[iy + 1, ix + 1]
        m00 = mask[iy, ix]
        m10 = mask[iy, ix + 1]
        m01 = mask[iy + 1, ix]
        m11 = mask[iy + 1, ix + 1]
        all_valid = m00 & m10 & m01 & m11
        # Nested lerp keeps constants bitwise where the stencil is valid.
        v0 = p00 + fx[:, None] * (p10 - p00)
        v1 = p01 + fx[:, None] * (p11 - p01)
        exact = v0 + fy[:, None] * (v1 - v0)
        w00 = (1 - fx) * (1 - fy) * m00
        w10 = fx * (1 - fy) * m10
        w01 = (1 - fx) * fy * m01
        w11 = fx * fy * m11
        tot = w00 + w10 + w01 + w11
        safe = np.maximum(tot, 1e-300)
        partial = (w00[:, None] * p00 + w10[:, None] * p10 +
                   w01[:, None] * p01 + w11[:, None] * p11) / safe[:, None]
        out = np.where(all_valid[:, None], exact,
                       np.where(tot[:, None] > 0, partial, 0.0))
        d[verts] = out
        warnings += int(np.sum(tot == 0))
    field = TSField(d, np.full(mesh.n_vertices, SOURCE_EXT, np.uint8))
    field.sample_warnings = warnings
    return field


def save_image(image, path):
    """Write the TSPX binary form.

    Magic "TSPX", little-endian u32 width/height/channels, f32 data
    row-major channel-interleaved, then width*height*2 mask bytes (front
    plane, back plane).
    """
    with open(path, "wb") as fh:
        fh.write(b"TSPX")
        fh.write(struct.pack("<III", image.width, image.height, 4))
        fh.write(image.data.astype("<f4").tobytes())
        fh.write(image.valid_mask[:, :, 0].astype(np.uint8).tobytes())
        fh.write(image.valid_mask[:, :, 1].astype(np.uint8).tobytes())


def load_image(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"TSPX":
        raise ValueError("not a TSPX file (bad magic)")
    w, h, c = struct.unpack_from("<III", blob, 4)
    if c != 4:
        raise ValueError(f"unsupported channel count {c}")
    off = 16
    n = w * h * c
    data = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
    data = data.reshape(h, w, c).astype(np.float64)
    off += 4 * n
    mf = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=off)
    mb = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=off + w * h)
    mask = np.stack([mf.reshape(h, w), mb.reshape(h, w)], axis=2).astype(bool)
    return PixelImage(data, mask)
