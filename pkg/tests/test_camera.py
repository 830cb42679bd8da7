import numpy as np
import pytest

from texslide.camera import (Camera, CameraArray, view_descriptor,
                             save_camera, load_camera, save_camera_array,
                             load_camera_array)


def make_cam(**kw):
    args = dict(position=[0, 0, -3], look_at=[0, 0, 0], up=[0, 1, 0],
                fov_y=45.0, width=64, height=48)
    args.update(kw)
    return Camera(**args)


def test_look_at_target_projects_to_image_center():
    cam = make_cam()
    px, depth, behind = cam.project([0.0, 0.0, 0.0])
    assert np.allclose(px[0], [32.0, 24.0], atol=1e-12)
    assert depth[0] == pytest.approx(3.0)
    assert not behind[0]


def test_project_rejects_aperture_point():
    cam = make_cam()
    with pytest.raises(ValueError, match="aperture"):
        cam.project(cam.position)


def test_point_behind_camera_is_flagged():
    cam = make_cam()
    px, _, behind = cam.project([0.0, 0.0, -5.0])
    assert behind[0]
    assert np.all(np.isnan(px[0]))


def test_vertex_ray_examples():
    cam = make_cam(position=[0, 0, 0], look_at=[0, 0, 1])
    o, d = cam.vertex_rays([[0.0, 0.0, 2.0], [3.0, 0.0, 4.0]])
    assert np.array_equal(o[0], [0.0, 0.0, 0.0])
    assert np.allclose(d[0], [0.0, 0.0, 1.0], atol=1e-15)
    assert np.allclose(d[1], [0.6, 0.0, 0.8], atol=1e-15)


def test_vertex_ray_rejects_aperture_vertex():
    cam = make_cam()
    with pytest.raises(ValueError, match="aperture"):
        cam.vertex_rays([cam.position])


def test_rays_have_unit_direction(rng):
    cam = make_cam()
    pts = rng.uniform(-2, 2, (50, 3)) + [0, 0, 5]
    _, d = cam.vertex_rays(pts)
    assert np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) < 1e-12
    _, d = cam.pixel_rays(rng.uniform(0, 64, 50), rng.uniform(0, 48, 50))
    assert np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) < 1e-12


def test_project_inverts_pixel_rays(rng):
    cam = make_cam(position=[1.0, 2.0, -4.0], look_at=[0.3, -0.2, 1.0],
                   up=[0.1, 1.0, 0.0])
    px = rng.uniform(0, 64, 40)
    py = rng.uniform(0, 48, 40)
    o, d = cam.pixel_rays(px, py)
    pts = o + d * rng.uniform(0.5, 8.0, 40)[:, None]
    back, _, behind = cam.project(pts)
    assert not np.any(behind)
    assert np.max(np.abs(back - np.stack([px, py], axis=1))) < 1e-9


def test_project_matches_vertex_ray_points(rng):
    cam = make_cam()
    pts = rng.uniform(-1, 1, (20, 3)) + [0, 0, 4]
    o, d = cam.vertex_rays(pts)
    moved = o + d * 2.5  # other points on the same rays
    a, _, _ = cam.project(pts)
    b, _, _ = cam.project(moved)
    assert np.max(np.abs(a - b)) < 1e-9


def test_view_descriptor_examples():
    cam = make_cam(position=[0, 0, 5])
    assert np.allclose(view_descriptor(cam, [0, 0, 0]), [0, 0, 1])
    cam = make_cam(position=[5, 0, 5])
    assert np.allclose(view_descriptor(cam, [0, 0, 0]),
                       [np.sqrt(0.5), 0, np.sqrt(0.5)])
    with pytest.raises(ValueError, match="coincides"):
        view_descriptor(cam, cam.position)


def test_camera_validation():
    with pytest.raises(ValueError, match="fov_y"):
        make_cam(fov_y=200.0)
    with pytest.raises(ValueError, match="parallel"):
        make_cam(up=[0, 0, 1])
    with pytest.raises(ValueError, match="coincides"):
        make_cam(look_at=[0, 0, -3])


def test_with_size_keeps_viewpoint():
    cam = make_cam()
    big = cam.with_size(256, 256)
    assert big.width == 256
    assert np.array_equal(big.position, cam.position)
    assert np.array_equal(big.forward, cam.forward)


def test_camera_json_round_trip(tmp_path):
    cam = make_cam(position=[0.25, 1.5, -2.0])
    path = tmp_path / "cam.json"
    save_camera(cam, path)
    again = load_camera(path)
    assert np.array_equal(again.position, cam.position)
    assert again.fov_y == cam.fov_y
    assert (again.width, again.height) == (cam.width, cam.height)


def test_camera_array_json_round_trip(tmp_path):
    arr = CameraArray([make_cam(), make_cam(position=[1, 0, -3]),
                       make_cam(position=[2, 0, -3]),
                       make_cam(position=[3, 0, -3])],
                      layout="grid", rows=2, cols=2)
    path = tmp_path / "cams.json"
    save_camera_array(arr, path)
    again = load_camera_array(path)
    assert again.layout == "grid"
    assert (again.rows, again.cols) == (2, 2)
    assert len(again) == 4


def test_camera_array_validation():
    with pytest.raises(ValueError, match="layout"):
        CameraArray([make_cam()], layout="ring")
    with pytest.raises(ValueError, match="rows"):
        CameraArray([make_cam()], layout="grid")
    with pytest.raises(ValueError, match="at least 2"):
        CameraArray([make_cam()], layout="line")
