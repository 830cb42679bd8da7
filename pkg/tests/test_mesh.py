import numpy as np
import pytest

from texslide.mesh import (TexturedMesh, ObjParseError, Pose, save_obj,
                           load_obj, subdivide, umbrella_smooth,
                           taubin_smooth, deformation_energy, SIDE_FRONT,
                           SIDE_BACK)

from conftest import make_tri, make_grid


def test_minimal_obj_parses(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n"
                    "vt 0 0\nvt 1 0\nvt 0 1\n"
                    "f 1/1 2/2 3/3\n")
    m = load_obj(path)
    assert m.n_vertices == 3
    assert m.n_faces == 1
    assert m.side_tag is None


def test_obj_round_trip_bitwise(tmp_path):
    rng = np.random.Generator(np.random.PCG64(3))
    m = make_grid(5)
    m = m.with_vertices(m.vertices + rng.standard_normal(m.vertices.shape))
    p1 = tmp_path / "a.obj"
    p2 = tmp_path / "b.obj"
    save_obj(m, p1)
    again = load_obj(p1)
    assert np.array_equal(again.vertices, m.vertices)
    assert np.array_equal(again.uvs, m.uvs)
    assert np.array_equal(again.faces_v, m.faces_v)
    assert np.array_equal(again.faces_t, m.faces_t)
    assert np.array_equal(again.side_tag, m.side_tag)
    save_obj(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_obj_bad_uv_index_names_line(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n"
                    "vt 0 0\nvt 1 0\nvt 0 1\n"
                    "f 1/1 2/2 3/5\n")
    with pytest.raises(ObjParseError, match="line 7"):
        load_obj(path)


def test_obj_unknown_directive_rejected(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nvn 0 0 1\n")
    with pytest.raises(ObjParseError, match="line 2"):
        load_obj(path)


def test_obj_side_tags_round_trip(tmp_path):
    m = make_grid(3)
    m.side_tag[::2] = SIDE_BACK
    path = tmp_path / "tagged.obj"
    save_obj(m, path)
    assert np.array_equal(load_obj(path).side_tag, m.side_tag)


def test_degenerate_face_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        make_tri(vertices=((0, 0, 0), (1, 0, 0), (2, 0, 0)))


def test_subdivide_single_triangle():
    out = subdivide(make_tri(), 1)
    assert out.n_vertices == 6
    assert out.n_faces == 4


def test_subdivide_shared_edge_midpoint_counted_once():
    m = TexturedMesh(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
        [[0, 0], [1, 0], [0, 1], [1, 1]],
        np.array([[0, 1, 2], [1, 3, 2]], np.int32),
        np.array([[0, 1, 2], [1, 3, 2]], np.int32))
    out = subdivide(m, 1)
    assert out.n_vertices == 9
    assert out.n_faces == 8


def test_subdivide_two_levels_multiplies_faces_by_16():
    m = make_grid(3)
    assert subdivide(m, 2).n_faces == 16 * m.n_faces


def test_subdivide_zero_levels_is_identity():
    m = make_grid(3)
    out = subdivide(m, 0)
    assert np.array_equal(out.vertices, m.vertices)
    assert np.array_equal(out.faces_v, m.faces_v)


def test_subdivide_keeps_originals_first_and_midpoints_on_edges():
    m = make_grid(4)
    out = subdivide(m, 1)
    assert np.array_equal(out.vertices[:m.n_vertices], m.vertices)
    assert np.array_equal(out.uvs[:len(m.uvs)], m.uvs)
    # Every new vertex is the midpoint of some original edge.
    e = m.edges()
    mids = 0.5 * (m.vertices[e[:, 0]] + m.vertices[e[:, 1]])
    new = out.vertices[m.n_vertices:]
    d = np.linalg.norm(new[:, None, :] - mids[None, :, :], axis=2).min(axis=1)
    assert d.max() == 0.0


def test_energy_zero_on_rest():
    m = make_grid(5)
    rep = deformation_energy(m, m)
    assert rep.extension == 0.0
    assert rep.compression == 0.0


def test_energy_uniform_scale():
    # Rest face with area 1; scaling 3D positions by 2 stretches both
    # principal directions to 2, by 0.5 compresses both to 0.5.
    rest = make_tri(vertices=((0, 0, 0), (2, 0, 0), (0, 1, 0)))
    grown = rest.with_vertices(rest.vertices * 2.0)
    rep = deformation_energy(grown, rest)
    assert rep.per_face_extension[0] == pytest.approx(2.0, abs=1e-12)
    assert rep.per_face_compression[0] == 0.0
    shrunk = rest.with_vertices(rest.vertices * 0.5)
    rep = deformation_energy(shrunk, rest)
    assert rep.per_face_compression[0] == pytest.approx(0.5, abs=1e-12)
    assert rep.per_face_extension[0] == 0.0


def test_energy_rigid_invariant(rng):
    m = make_grid(5)
    deformed = m.with_vertices(
        m.vertices + 0.1 * rng.standard_normal(m.vertices.shape))
    base = deformation_energy(deformed, m)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    moved = deformed.with_vertices(deformed.vertices @ q.T + [3.0, -1.0, 2.0])
    rep = deformation_energy(moved, m)
    assert np.allclose(rep.per_face_extension, base.per_face_extension,
                       atol=1e-9)
    assert np.allclose(rep.per_face_compression, base.per_face_compression,
                       atol=1e-9)


def test_energy_connectivity_mismatch_rejected():
    with pytest.raises(ValueError, match="connectivity"):
        deformation_energy(make_grid(3), make_grid(4))


def test_taubin_identity_at_zero_iterations():
    m = make_grid(4)
    out = taubin_smooth(m, iterations=0)
    assert np.array_equal(out.vertices, m.vertices)


def test_taubin_keeps_flat_mesh_planar():
    m = make_grid(6)
    out = taubin_smooth(m, iterations=10)
    assert np.max(np.abs(out.vertices[:, 1])) < 1e-12


def test_umbrella_step_fixes_regular_grid_interior():
    # A regular-grid interior vertex is its own ring mean, so a single
    # smoothing step leaves it exactly in place.
    m = make_grid(6)
    out = umbrella_smooth(m, iterations=1)
    interior = ~m.boundary_vertices()
    assert np.max(np.abs(out.vertices[interior] - m.vertices[interior])) < 1e-12


def test_taubin_damps_single_noisy_vertex():
    m = make_grid(7)
    noisy = m.vertices.copy()
    bump = 24  # interior vertex
    noisy[bump, 1] = 0.2
    out = taubin_smooth(m.with_vertices(noisy), iterations=1)
    assert abs(out.vertices[bump, 1]) < 0.2


def test_umbrella_fixed_mask_pins_vertices():
    m = make_grid(5)
    wavy = m.vertices.copy()
    wavy[:, 1] = np.sin(7.0 * wavy[:, 0]) * 0.1
    fixed = m.boundary_vertices()
    out = umbrella_smooth(m.with_vertices(wavy), iterations=8, fixed=fixed)
    assert np.array_equal(out.vertices[fixed], wavy[fixed])
    assert not np.array_equal(out.vertices[~fixed], wavy[~fixed])


def test_boundary_vertices_of_grid():
    m = make_grid(5)
    mask = m.boundary_vertices()
    uv = m.vertex_uv()
    on_border = ((uv == 0.0) | (uv == 1.0)).any(axis=1)
    assert np.array_equal(mask, on_border)


def test_pose_rejects_non_finite():
    with pytest.raises(ValueError, match="finite"):
        Pose(0, [1.0, np.nan])
