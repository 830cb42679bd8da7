import numpy as np
import pytest

from texslide.spatial import (Bvh3, UvIndex, ray_first_hit, ray_first_hits,
                              invert_barycentric, uv_locate, uv_locate_batch,
                              triangulate_point)

from conftest import make_tri, random_soup
import oracles

TRI = make_tri()  # (0,0,0), (1,0,0), (0,1,0)


def test_first_hit_at_vertex():
    hit = ray_first_hit(Bvh3(TRI), [0.0, 0.0, -1.0], [0.0, 0.0, 1.0])
    face, t, w = hit
    assert face == 0
    assert t == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(w, [1.0, 0.0, 0.0], atol=1e-12)


def test_first_hit_through_centroid():
    hit = ray_first_hit(Bvh3(TRI), [1 / 3, 1 / 3, -1.0], [0.0, 0.0, 1.0])
    assert hit is not None
    assert np.allclose(hit[2], [1 / 3, 1 / 3, 1 / 3], atol=1e-9)


def test_first_hit_orders_parallel_triangles():
    tri = np.array([TRI.face_points()[0],
                    TRI.face_points()[0] + [0.0, 0.0, 0.5]])
    bvh = Bvh3.from_triangles(tri)
    face, t, _ = ray_first_hit(bvh, [0.2, 0.2, -1.0], [0.0, 0.0, 1.0])
    assert face == 0
    assert t == pytest.approx(1.0)
    # With t_min past the first plane, the second face is next.
    face, t, _ = ray_first_hit(bvh, [0.2, 0.2, -1.0], [0.0, 0.0, 1.0],
                               t_min=1.25)
    assert face == 1
    assert t == pytest.approx(1.5)


def test_miss_returns_none():
    assert ray_first_hit(Bvh3(TRI), [5.0, 5.0, -1.0], [0.0, 0.0, 1.0]) is None


def test_bvh_matches_brute_force_scan(rng):
    tri = random_soup(rng, 200)
    bvh = Bvh3.from_triangles(tri)
    origins = rng.uniform(-2, 2, (1000, 3))
    dirs = rng.standard_normal((1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    face, t, _ = ray_first_hits(bvh, origins, dirs)
    for i in range(len(origins)):
        ref_face, ref_t = oracles.first_hit_scan(tri, origins[i], dirs[i])
        assert face[i] == ref_face
        if ref_face >= 0:
            assert abs(t[i] - ref_t) < 1e-9


def test_invert_barycentric_examples():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(invert_barycentric(tri, [0.25, 0.25]),
                       [0.5, 0.25, 0.25], atol=1e-15)
    assert np.allclose(invert_barycentric(tri, [1.0, 0.0]),
                       [0.0, 1.0, 0.0], atol=1e-15)
    w = invert_barycentric(tri, [1.0, 1.0])
    assert w.sum() == pytest.approx(1.0)
    assert w.min() < 0  # outside


def test_invert_barycentric_rejects_degenerate():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ValueError, match="degenerate"):
        invert_barycentric(tri, [0.5, 0.0])


def test_invert_barycentric_round_trip(rng):
    for _ in range(50):
        tri = rng.uniform(0, 1, (3, 2))
        a, b = tri[1] - tri[0], tri[2] - tri[0]
        if abs(a[0] * b[1] - a[1] * b[0]) < 1e-3:
            continue
        w = rng.uniform(0.05, 1.0, 3)
        w /= w.sum()
        q = w @ tri
        assert np.allclose(invert_barycentric(tri, q), w, atol=1e-9)


def test_uv_locate_single_and_empty():
    idx = UvIndex.from_mesh(TRI)
    got = uv_locate(idx, [0.25, 0.25])
    assert len(got) == 1
    assert got[0][0] == 0
    assert uv_locate(idx, [0.9, 0.9]) == []


def test_uv_locate_reports_overlaps():
    corner = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                       [[0.1, 0.1], [0.9, 0.0], [0.0, 0.9]]])
    idx = UvIndex(corner)
    got = uv_locate(idx, [0.2, 0.2])
    assert sorted(f for f, _ in got) == [0, 1]


def test_uv_locate_matches_containment_scan(rng):
    corner = rng.uniform(0, 1, (120, 3, 2))
    idx = UvIndex(corner)
    queries = rng.uniform(0, 1, (1000, 2))
    offsets, faces, w = uv_locate_batch(idx, queries)
    for i in range(len(queries)):
        got = sorted(faces[offsets[i]:offsets[i + 1]])
        assert got == oracles.uv_contain_scan(corner, queries[i])
    assert np.all(w.sum(axis=1) - 1.0 < 1e-9)


def test_uv_locate_respects_face_subsets(rng):
    corner = rng.uniform(0, 1, (40, 3, 2))
    keep = np.zeros(40, bool)
    keep[::2] = True
    idx = UvIndex(corner[keep], np.flatnonzero(keep))
    _, faces, _ = uv_locate_batch(idx, rng.uniform(0, 1, (100, 2)))
    assert np.all(faces % 2 == 0)


def test_triangulate_two_rays_exact():
    target = np.array([1.0, 2.0, 3.0])
    o = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 1.0]])
    d = target - o
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x, residual = triangulate_point(o, d)
    assert np.allclose(x, target, atol=1e-9)
    assert residual < 1e-9


def test_triangulate_skew_rays_split_the_gap():
    o = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    d = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    x, residual = triangulate_point(o, d)
    assert np.allclose(x, [0.0, 0.0, 0.5], atol=1e-12)
    assert residual == pytest.approx(np.sqrt(0.5), abs=1e-12)


def test_triangulate_many_rays(rng):
    for k in (2, 3, 8):
        target = rng.uniform(-1, 1, 3)
        o = rng.uniform(-5, 5, (k, 3))
        d = target - o
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        x, residual = triangulate_point(o, d)
        assert np.linalg.norm(x - target) < 1e-9 * max(1.0, np.abs(o).max())


def test_triangulate_parallel_rays_is_singular():
    o = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    d = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="condition number"):
        triangulate_point(o, d)


def test_triangulate_needs_two_rays():
    with pytest.raises(ValueError, match="2"):
        triangulate_point(np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]))
