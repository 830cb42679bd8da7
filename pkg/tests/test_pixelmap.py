import numpy as np
import pytest

from texslide.pixelmap import (PixelImage, rasterize, sample,
                               save_image, load_image)
from texslide.slidegen import TSField, SOURCE_EXT
from texslide.synth import gen_rest

from conftest import make_grid


def constant_field(n, value):
    f = TSField.empty(n)
    f.d[:] = value
    f.source[:] = SOURCE_EXT
    return f


def test_constant_field_rasterizes_to_constant():
    m = gen_rest(5)
    f = constant_field(m.n_vertices, [0.25, -0.5])
    img = rasterize(m, f, width=16)
    assert img.valid_mask.all()
    assert (img.data[:, :, 0] == 0.25).all()
    assert (img.data[:, :, 1] == -0.5).all()
    assert (img.data[:, :, 2] == 0.25).all()
    assert (img.data[:, :, 3] == -0.5).all()


def test_zero_field_rasterizes_to_zero():
    m = make_grid(5)
    img = rasterize(m, TSField.empty(m.n_vertices), width=8)
    assert (img.data == 0.0).all()
    assert img.valid_mask[:, :, 0].all()
    # No back faces, so the back plane stays invalid.
    assert not img.valid_mask[:, :, 1].any()


def test_vertex_at_pixel_center_splats_exactly():
    m = make_grid(2)
    m.uvs = np.array([[2.5 / 8, 3.5 / 8], [4.5 / 8, 3.5 / 8],
                      [2.5 / 8, 5.5 / 8], [4.5 / 8, 5.5 / 8]])
    f = TSField.empty(4)
    f.d[0] = [0.125, -0.375]
    f.source[:] = SOURCE_EXT
    img = rasterize(m, f, width=8)
    assert img.data[3, 2, 0] == 0.125
    assert img.data[3, 2, 1] == -0.375
    back = sample(img, m)
    assert back.d[0, 0] == 0.125
    assert back.d[0, 1] == -0.375


def test_sample_of_rasterized_constant_is_bitwise():
    m = gen_rest(7)
    f = constant_field(m.n_vertices, [0.0625, -0.25])
    img = rasterize(m, f, width=16)
    back = sample(img, m)
    assert (back.d == f.d).all()
    assert (back.source == SOURCE_EXT).all()
    assert back.sample_warnings == 0


def test_linear_field_survives_the_image_round_trip():
    m = make_grid(33)
    uv = m.vertex_uv()
    f = TSField.empty(m.n_vertices)
    f.d[:] = np.stack([0.04 * uv[:, 0], -0.03 * uv[:, 1]], axis=1)
    f.source[:] = SOURCE_EXT
    width = 64
    back = sample(rasterize(m, f, width=width), m)
    scale = max(0.04, 0.03)
    assert np.abs(back.d - f.d).max() <= 2.0 / width * scale


def test_rasterize_is_linear_in_the_field(rng):
    m = make_grid(9)
    n = m.n_vertices
    f1 = TSField(rng.normal(0, 0.02, (n, 2)),
                 np.full(n, SOURCE_EXT, np.uint8))
    f2 = TSField(rng.normal(0, 0.02, (n, 2)),
                 np.full(n, SOURCE_EXT, np.uint8))
    combo = TSField(2.0 * f1.d - 0.5 * f2.d, f1.source.copy())
    a = rasterize(m, f1, width=16)
    b = rasterize(m, f2, width=16)
    c = rasterize(m, combo, width=16)
    assert (a.valid_mask == c.valid_mask).all()
    assert np.abs(c.data - (2.0 * a.data - 0.5 * b.data)).max() < 1e-12


def test_sample_counts_dead_stencils():
    m = make_grid(3)
    img = PixelImage.zeros(8)
    back = sample(img, m)
    assert (back.d == 0.0).all()
    assert back.sample_warnings == m.n_vertices
    assert back.assigned.all()


def test_partial_stencil_renormalizes_to_valid_corner():
    m = make_grid(2)
    # Interior uv: the stencil spans pixels (0..1, 0..1) with all four
    # weights nonzero; only pixel (0, 0) carries data.
    m.uvs = np.full((4, 2), 0.3)
    img = PixelImage.zeros(4)
    img.data[0, 0, :2] = [0.5, -0.25]
    img.valid_mask[0, 0, 0] = True
    back = sample(img, m)
    assert (back.d[:, 0] == 0.5).all()
    assert (back.d[:, 1] == -0.25).all()
    assert back.sample_warnings == 0


def test_tspx_round_trip_is_byte_identical(tmp_path, rng):
    img = PixelImage(rng.normal(size=(8, 8, 4)),
                     rng.random((8, 8, 2)) < 0.7)
    p1 = tmp_path / "a.tspx"
    p2 = tmp_path / "b.tspx"
    save_image(img, p1)
    loaded = load_image(p1)
    assert (loaded.valid_mask == img.valid_mask).all()
    assert (loaded.data == img.data.astype("<f4").astype(np.float64)).all()
    save_image(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_tspx_rejects_bad_magic_and_channels(tmp_path):
    p = tmp_path / "bad.tspx"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError, match="not a TSPX file"):
        load_image(p)
    import struct
    p.write_bytes(b"TSPX" + struct.pack("<III", 2, 2, 3) + b"\x00" * 64)
    with pytest.raises(ValueError, match="unsupported channel count"):
        load_image(p)


def test_rasterize_validation():
    m = make_grid(3)
    with pytest.raises(ValueError, match="field does not match"):
        rasterize(m, TSField.empty(2), width=8)
    untagged = make_grid(3, tagged=False)
    with pytest.raises(ValueError, match="mesh has no side_tag"):
        rasterize(untagged, TSField.empty(untagged.n_vertices), width=8)
    with pytest.raises(ValueError, match="image width must be >= 2"):
        rasterize(m, TSField.empty(m.n_vertices), width=1)
