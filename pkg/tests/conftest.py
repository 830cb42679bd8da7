import numpy as np
import pytest

from texslide.mesh import TexturedMesh, SIDE_FRONT


def make_tri(vertices=((0, 0, 0), (1, 0, 0), (0, 1, 0)),
             uvs=((0, 0), (1, 0), (0, 1)), side=None):
    """Single-triangle mesh; side=None leaves side_tag off."""
    tag = None if side is None else np.array([side], np.uint8)
    return TexturedMesh(np.asarray(vertices, float), np.asarray(uvs, float),
                        np.array([[0, 1, 2]], np.int32),
                        np.array([[0, 1, 2]], np.int32), tag)


def make_grid(n, tagged=True):
    """Single-sided flat n x n sheet in y = 0, uv = (x, z)."""
    g = np.linspace(0.0, 1.0, n)
    x, z = np.meshgrid(g, g, indexing="xy")
    vertices = np.stack([x.ravel(), np.zeros(n * n), z.ravel()], axis=1)
    uvs = np.stack([x.ravel(), z.ravel()], axis=1)
    idx = np.arange(n * n).reshape(n, n)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    faces = np.concatenate([np.stack([v00, v10, v01], axis=1),
                            np.stack([v10, v11, v01], axis=1)]).astype(np.int32)
    tag = np.full(len(faces), SIDE_FRONT, np.uint8) if tagged else None
    return TexturedMesh(vertices, uvs, faces, faces.copy(), tag)


def random_soup(rng, n_faces, scale=1.0):
    """Triangle soup with bounded edge lengths, for ray-cast oracles."""
    base = rng.uniform(-scale, scale, (n_faces, 1, 3))
    tri = base + rng.uniform(-0.3 * scale, 0.3 * scale, (n_faces, 3, 3))
    return np.ascontiguousarray(tri)


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.PCG64(20240816))
