"""Command-line surface tying the pipeline stages together.

Every command reads a JSON config (--config) whose keys match the long
flag names; explicit flags win over config values, config values win
over defaults.  Exit codes: 0 success, 1 usage error, 2 data error (bad
file, bad format), each with a one-line diagnostic.
"""

import argparse
import csv
import json
import os
import re
import sys

import numpy as np

from . import decoder, metrics, pipeline, pixelmap, slidegen, synth
from . import viewblend
from .mesh import ObjParseError, save_obj
from .reconstruct import reconstruct_mesh
from .synth import Dataset

DATA_ERRORS = (OSError, ValueError, KeyError, IndexError, ObjParseError,
               json.JSONDecodeError)

FIELD_NAME = "field_p{pose:04d}_c{cam:02d}.json"
FIELD_RE = re.compile(r"field_p(\d+)_c(\d+)\.json$")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _finish(args, defaults):
    """Fill unset options from the config file, then from defaults."""
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError(f"config {args.config} is not a JSON object")
    for key, val in cfg.items():
        k = key.replace("-", "_")
        if hasattr(args, k) and getattr(args, k) is None:
            setattr(args, k, val)
    for k, v in defaults.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)
    return args


def _dataset(args):
    path = os.path.join(args.data, "manifest.json")
    if not os.path.exists(path):
        raise OSError(f"no manifest.json under {args.data}")
    return Dataset(path)


def _select_ids(ds, spec):
    """None -> all poses; a split name -> that split; else '0,2,5-9'."""
    if spec is None:
        return [p["id"] for p in ds.manifest["poses"]]
    if spec in ("train", "val", "test"):
        return list(ds.split[spec])
    ids = []
    for part in str(spec).split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            ids.extend(range(int(lo), int(hi) + 1))
        elif part:
            ids.append(int(part))
    return ids


def _field_path(dirpath, pose_id, cam_idx):
    return os.path.join(dirpath, FIELD_NAME.format(pose=pose_id,
                                                   cam=cam_idx))


def _load_pose_fields(dirpath, pose_id, n_cams):
    fields = []
    for ci in range(n_cams):
        path = _field_path(dirpath, pose_id, ci)
        if not os.path.exists(path):
            raise OSError(f"missing field file {path}")
        fields.append(slidegen.load_field(path))
    return fields


def cmd_synth(args):
    _finish(args, {"poses": synth.DEFAULT_POSES, "grid": synth.DEFAULT_N,
                   "wrinkles": synth.DEFAULT_K,
                   "smooth_iters": synth.DEFAULT_SMOOTH_ITERS,
                   "seed": 0, "image_size": 256})
    manifest = synth.build_dataset(
        args.out, n_poses=args.poses, n=args.grid, k=args.wrinkles,
        smoothing_iters=args.smooth_iters, seed=args.seed,
        image_size=args.image_size)
    print(f"synth: wrote {len(manifest['poses'])} poses to {args.out}")
    return 0


def cmd_tsgen(args):
    _finish(args, {"level": 0, "tau_uv": slidegen.TAU_UV_DEFAULT,
                   "tau_d": slidegen.TAU_D_DEFAULT})
    ds = _dataset(args)
    cams = ds.cameras()
    ids = _select_ids(ds, args.poses)
    os.makedirs(args.out, exist_ok=True)
    count = 0
    for pid in ids:
        gt = ds.gt(pid)
        inferred = pipeline.subdivided(ds.inferred(pid), args.level)
        fields = pipeline.pose_fields(gt, inferred, cams.cameras,
                                      tau_uv=args.tau_uv, tau_d=args.tau_d,
                                      extrapolate=False)
        for ci, field in enumerate(fields):
            slidegen.save_field(field, _field_path(args.out, pid, ci))
            count += 1
    print(f"tsgen: wrote {count} fields to {args.out}")
    return 0


def cmd_extrapolate(args):
    _finish(args, {"level": 0, "smooth_iters": 10})
    ds = _dataset(args)
    names = sorted(n for n in os.listdir(args.fields) if FIELD_RE.match(n))
    if not names:
        raise OSError(f"no field files under {args.fields}")
    os.makedirs(args.out, exist_ok=True)
    from .extrapolate import extrapolate_and_smooth
    mesh_cache = (None, None)
    for name in names:
        pid = int(FIELD_RE.match(name).group(1))
        if mesh_cache[0] != pid:
            mesh_cache = (pid, pipeline.subdivided(ds.inferred(pid),
                                                   args.level))
        field = slidegen.load_field(os.path.join(args.fields, name))
        field = extrapolate_and_smooth(mesh_cache[1], field,
                                       args.smooth_iters)
        slidegen.save_field(field, os.path.join(args.out, name))
    print(f"extrapolate: filled {len(names)} fields into {args.out}")
    return 0


def cmd_train(args):
    _finish(args, {"camera": 0, "width": pixelmap.DEFAULT_WIDTH,
                   "level": 0, "epochs": 30, "seed": 0, "batch": 8,
                   "lr": 1e-3, "stop_loss": None})
    ds = _dataset(args)
    split = ds.split

    def examples(ids):
        out = []
        for pid in ids:
            mesh = pipeline.subdivided(ds.inferred(pid), args.level)
            field = slidegen.load_field(
                _field_path(args.fields, pid, args.camera))
            img = pixelmap.rasterize(mesh, field, args.width)
            out.append((ds.pose(pid), img))
        return out

    train_set = examples(split["train"])
    val_set = examples(split["val"]) if split.get("val") else None
    p = len(train_set[0][0].params)
    model = decoder.build_model(decoder.desk_config(p), seed=args.seed)
    if model.width != args.width:
        raise ValueError(f"decoder emits {model.width}px images, "
                         f"requested {args.width}")
    result = decoder.train(model, train_set, val_set, epochs=args.epochs,
                           seed=args.seed, batch_size=args.batch,
                           lr=args.lr, stop_loss=args.stop_loss)
    decoder.save_checkpoint(result.model, args.out, seed=args.seed,
                            step=len(result.curve))
    if args.curve:
        with open(args.curve, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for epoch, tl, vl in result.curve:
                w.writerow([epoch, f"{tl:.9g}",
                            "" if np.isnan(vl) else f"{vl:.9g}"])
    last = result.curve[-1] if result.curve else (None, np.nan, np.nan)
    print(f"train: {len(result.curve)} epochs, final train loss "
          f"{last[1]:.6g}, checkpoint {args.out}")
    return 0


def cmd_infer(args):
    _finish(args, {"level": 0})
    ds = _dataset(args)
    model, _ = decoder.load_checkpoint(args.model)
    img = decoder.forward(model, ds.pose(args.pose), "eval")
    if args.image:
        pixelmap.save_image(img, args.image)
    if args.out:
        mesh = pipeline.subdivided(ds.inferred(args.pose), args.level)
        field = pixelmap.sample(img, mesh)
        slidegen.save_field(field, args.out)
    print(f"infer: pose {args.pose} decoded"
          + (f", field {args.out}" if args.out else "")
          + (f", image {args.image}" if args.image else ""))
    return 0


def _parse_param(text):
    vals = [float(v) for v in str(text).split(",")]
    return vals[0] if len(vals) == 1 else vals


def cmd_blendview(args):
    _finish(args, {})
    ds = _dataset(args)
    cams = ds.cameras()
    fields = _load_pose_fields(args.fields, args.pose, len(cams))
    w = viewblend.weights_for(cams, _parse_param(args.param))
    field = viewblend.blend(fields, w)
    slidegen.save_field(field, args.out)
    if args.camera_out:
        from .camera import save_camera
        save_camera(viewblend.interpolate_camera(cams, w), args.camera_out)
    print(f"blendview: pose {args.pose} at param {args.param} -> "
          f"{args.out}")
    return 0


def cmd_reconstruct(args):
    _finish(args, {"level": 0, "postprocess": "none"})
    ds = _dataset(args)
    cams = ds.cameras()
    inferred = pipeline.subdivided(ds.inferred(args.pose), args.level)
    fields = _load_pose_fields(args.fields, args.pose, len(cams))
    mesh, report = reconstruct_mesh(inferred, fields, cams.cameras,
                                    postprocess=args.postprocess)
    save_obj(mesh, args.out)
    if args.report:
        report.save_csv(args.report)
    n_tri = int(np.count_nonzero(report.triangulated))
    print(f"reconstruct: pose {args.pose}, {n_tri} of "
          f"{len(report.triangulated)} vertices triangulated -> {args.out}")
    return 0


def cmd_eval(args):
    _finish(args, {"width": pipeline.EVAL_WIDTH, "sweep": 0})
    ds = _dataset(args)
    cams = ds.cameras()
    ids = _select_ids(ds, args.poses)
    os.makedirs(args.out, exist_ok=True)
    per_image = []  # (pose, cam, method, value)
    methods = ["baseline"]
    if args.fields:
        methods.append("ts")
    if args.fields_l1:
        methods.append("ts_subdiv1")
    for pid in ids:
        gt = ds.gt(pid)
        inferred = ds.inferred(pid)
        entries = [pipeline.MethodEntry("baseline", inferred)]
        if args.fields:
            fields = _load_pose_fields(args.fields, pid, len(cams))
            entries.append(pipeline.MethodEntry("ts", inferred, fields))
        if args.fields_l1:
            mesh1 = pipeline.subdivided(ds.inferred(pid), 1)
            fields1 = _load_pose_fields(args.fields_l1, pid, len(cams))
            entries.append(pipeline.MethodEntry("ts_subdiv1", mesh1,
                                                fields1))
        scores = pipeline.pose_method_errors(gt, cams.cameras, entries,
                                             width=args.width)
        for name, vals in scores.items():
            for ci, v in enumerate(vals):
                per_image.append((pid, ci, name, v))
    with open(os.path.join(args.out, "images.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pose_id", "camera_id", "method", "sqrt_mse"])
        for row in per_image:
            w.writerow([row[0], row[1], row[2], f"{row[3]:.9g}"])
    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "mean_sqrt_mse", "std_sqrt_mse", "n"])
        for name in methods:
            vals = [r[3] for r in per_image if r[2] == name]
            mean, std = metrics.dataset_stats(vals)
            w.writerow([name, f"{mean:.9g}", f"{std:.9g}", len(vals)])
    if args.sweep and args.sweep_pose is not None:
        pid = int(args.sweep_pose)
        gt = ds.gt(pid)
        inferred = ds.inferred(pid)
        fields = _load_pose_fields(args.fields, pid, len(cams))
        params = np.linspace(0.0, 1.0, int(args.sweep))
        rows = pipeline.blend_sweep(gt, inferred, cams, fields, params,
                                    width=args.width)
        with open(os.path.join(args.out, "sweep.csv"), "w",
                  newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["param", "sqrt_mse"])
            for t, v in rows:
                w.writerow([f"{t:.9g}", f"{v:.9g}"])
    print(f"eval: {len(ids)} poses, methods {','.join(methods)} -> "
          f"{args.out}")
    return 0


def cmd_render(args):
    _finish(args, {"camera": 0, "level": 0, "width": pipeline.EVAL_WIDTH})
    ds = _dataset(args)
    cams = ds.cameras()
    cam = cams[args.camera]
    if cam.width != args.width:
        cam = cam.with_size(args.width, args.width)
    gt = ds.gt(args.pose)
    mesh = pipeline.subdivided(ds.inferred(args.pose), args.level)
    field = None
    if args.field:
        field = slidegen.load_field(args.field)
    err, valid = metrics.pixel_error_image(gt, mesh, cam, test_field=field)
    metrics.save_ppm(metrics.error_colormap(err, valid), args.out)
    print(f"render: pose {args.pose} camera {args.camera} error map -> "
          f"{args.out}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="JSON config; keys are flag names")
    p.add_argument("--data", help="dataset directory (manifest.json)")


def build_parser():
    parser = _Parser(prog="texslide",
                     description="texture-sliding pipeline tools")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic cloth suite")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--poses", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--wrinkles", type=int)
    p.add_argument("--smooth-iters", type=int, dest="smooth_iters")
    p.add_argument("--image-size", type=int, dest="image_size")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tsgen", help="generate sliding fields by ray cast")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--poses")
    p.add_argument("--level", type=int)
    p.add_argument("--tau-uv", type=float, dest="tau_uv")
    p.add_argument("--tau-d", type=float, dest="tau_d")
    p.set_defaults(func=cmd_tsgen)

    p = sub.add_parser("extrapolate", help="fill fields over the surface")
    _add_common(p)
    p.add_argument("--fields", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=int)
    p.add_argument("--smooth-iters", type=int, dest="smooth_iters")
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("train", help="train the decoder for one camera")
    _add_common(p)
    p.add_argument("--fields", required=True,
                   help="extrapolated fields directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--camera", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--level", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--stop-loss", type=float, dest="stop_loss")
    p.add_argument("--seed", type=int)
    p.add_argument("--curve", help="loss curve CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="decode a pose to a field/image")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--pose", type=int, required=True)
    p.add_argument("--out", help="TSField JSON path")
    p.add_argument("--image", help="pixel image path")
    p.add_argument("--level", type=int)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("blendview", help="blend fields between cameras")
    _add_common(p)
    p.add_argument("--fields", required=True)
    p.add_argument("--pose", type=int, required=True)
    p.add_argument("--param", required=True,
                   help="scalar in [0,1], or 'u,v' for grid layouts")
    p.add_argument("--out", required=True)
    p.add_argument("--camera-out", dest="camera_out",
                   help="write the interpolated camera JSON here")
    p.set_defaults(func=cmd_blendview)

    p = sub.add_parser("reconstruct", help="triangulate 3D wrinkles")
    _add_common(p)
    p.add_argument("--fields", required=True)
    p.add_argument("--pose", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=int)
    p.add_argument("--postprocess", choices=["none", "taubin"])
    p.add_argument("--report", help="per-vertex CSV path")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="per-image SqrtMSE tables")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--poses")
    p.add_argument("--fields", help="extrapolated fields (method ts)")
    p.add_argument("--fields-l1", dest="fields_l1",
                   help="fields on the once-subdivided mesh")
    p.add_argument("--width", type=int)
    p.add_argument("--sweep", type=int,
                   help="blend sweep sample count (with --sweep-pose)")
    p.add_argument("--sweep-pose", dest="sweep_pose", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="error map PPM for one view")
    _add_common(p)
    p.add_argument("--pose", type=int, required=True)
    p.add_argument("--camera", type=int)
    p.add_argument("--field", help="optional field JSON to apply")
    p.add_argument("--level", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        print("texslide: error: a command is required", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except DATA_ERRORS as e:
        print(f"texslide {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
