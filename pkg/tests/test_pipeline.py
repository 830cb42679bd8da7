import numpy as np
import pytest

from texslide import metrics, spatial
from texslide.pipeline import (subdivided, build_field, pose_fields,
                               MethodEntry, pose_method_errors, blend_sweep)
from texslide.slidegen import SOURCE_UN, SOURCE_RAY, SOURCE_EXT
from texslide.synth import (gen_rest, gen_pose, make_pose_meshes,
                            default_cameras)


@pytest.fixture(scope="module")
def scene():
    rest = gen_rest(17)
    gt, inferred = make_pose_meshes(rest, gen_pose(1, k=2), 10)
    cams = default_cameras(64, 64)
    return rest, gt, inferred, cams


def test_subdivided_levels(scene):
    _, _, inferred, _ = scene
    assert subdivided(inferred, 0) is inferred
    two = subdivided(inferred, 2)
    assert two.n_faces == inferred.n_faces * 16


def test_build_field_raw_postconditions(scene):
    _, gt, inferred, cams = scene
    tau_uv, tau_d = 0.5, 0.04
    field = build_field(gt, inferred, cams[0], tau_uv=tau_uv, tau_d=tau_d,
                        extrapolate=False)
    a = field.assigned
    assert a.any()
    assert set(np.unique(field.source)) <= {SOURCE_UN, SOURCE_RAY}
    norms = np.linalg.norm(field.d[a], axis=1)
    assert norms.max() <= tau_d
    tn = inferred.vertex_uv() + field.d
    for i, j in inferred.edges():
        if a[i] and a[j]:
            assert np.linalg.norm(tn[i] - tn[j]) <= tau_uv


def test_build_field_extrapolation_completes_it(scene):
    _, gt, inferred, cams = scene
    raw = build_field(gt, inferred, cams[0], extrapolate=False)
    full = build_field(gt, inferred, cams[0], extrapolate=True,
                       smooth_iters=5)
    assert not np.any(full.source == SOURCE_UN)
    ray = full.source == SOURCE_RAY
    assert np.array_equal(ray, raw.source == SOURCE_RAY)
    # smoothing holds ray vertices fixed
    assert np.array_equal(full.d[ray], raw.d[ray])
    assert np.isfinite(full.d).all()


def test_pose_fields_matches_per_camera_calls(scene):
    _, gt, inferred, cams = scene
    batch = pose_fields(gt, inferred, cams.cameras, extrapolate=False)
    assert len(batch) == 2
    for cam, field in zip(cams.cameras, batch):
        single = build_field(gt, inferred, cam, extrapolate=False)
        assert np.array_equal(field.d, single.d)
        assert np.array_equal(field.source, single.source)


def test_method_entry_pick():
    assert MethodEntry._pick([10, 20], 1) == 20
    assert MethodEntry._pick("solo", 1) == "solo"
    assert MethodEntry._pick(None, 0) is None


def test_pose_method_errors_match_direct_evaluation(scene):
    _, gt, inferred, cams = scene
    fields = pose_fields(gt, inferred, cams.cameras, smooth_iters=5)
    entries = [MethodEntry("baseline", inferred),
               MethodEntry("ts", inferred, fields, class_field=fields)]
    out = pose_method_errors(gt, cams.cameras, entries, width=64)
    assert set(out) == {"baseline", "ts"}
    assert len(out["baseline"]) == 2

    err, valid = metrics.pixel_error_image(gt, inferred, cams[0])
    assert out["baseline"][0] == metrics.sqrt_mse(err, valid)
    err, valid = metrics.pixel_error_image(gt, inferred, cams[0],
                                           test_field=fields[0])
    assert out["ts"][0] == metrics.sqrt_mse(err, valid)


def test_pose_method_errors_with_images(scene):
    _, gt, inferred, cams = scene
    fields = pose_fields(gt, inferred, cams.cameras, smooth_iters=5)
    entries = [MethodEntry("ts", inferred, fields, class_field=fields)]
    scores, images, breakdown = pose_method_errors(
        gt, cams.cameras, entries, width=64, with_images=True)
    assert len(images["ts"]) == 2
    err, valid = images["ts"][0]
    assert err.shape == (64, 64) and valid.dtype == bool
    assert abs(scores["ts"][0] - metrics.sqrt_mse(err, valid)) < 1e-15
    assert len(breakdown["ts"]) == 2
    assert set(breakdown["ts"][0]) <= {"ray", "ext", "combination"}
    assert len(breakdown["ts"][0]) >= 1


def test_blend_sweep_endpoints_match_single_cameras(scene):
    _, gt, inferred, cams = scene
    fields = pose_fields(gt, inferred, cams.cameras, smooth_iters=5)
    rows = blend_sweep(gt, inferred, cams, fields, [0.0, 0.5, 1.0],
                       width=64)
    assert [t for t, _ in rows] == [0.0, 0.5, 1.0]
    for t, cam, field in ((0.0, cams[0], fields[0]),
                          (1.0, cams[1], fields[1])):
        err, valid = metrics.pixel_error_image(gt, inferred, cam,
                                               test_field=field)
        want = metrics.sqrt_mse(err, valid)
        got = dict(rows)[t]
        assert got == want
    assert np.isfinite(dict(rows)[0.5])
