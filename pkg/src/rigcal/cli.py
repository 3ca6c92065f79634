"""Command-line interface.

Subcommands: simulate, calibrate, baseline, evaluate, export-cloud.
Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .archive import (SceneInputs, read_archive, read_trajectory,
                      read_result, write_archive, write_result,
                      write_trajectory)
from .errors import NumericalError, RigcalError, ValidationError
from .evaluation import (calib_errors, lift_corners, scale_accuracy,
                         scene_cloud, write_cloud)
from .geometry import RigidTransform
from .losses import LossWeights, RobustConfig
from .optimizer import CalibrationResult, OptimizerConfig, solve, initialize
from .synthetic import ScenarioConfig, generate, preset


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0,
                   help="torch thread count (0 keeps the default)")


def _optimizer_config(args) -> OptimizerConfig:
    cfg = OptimizerConfig(seed=args.seed)
    if getattr(args, "max_iters", None) is not None:
        cfg.max_iters = args.max_iters
    if getattr(args, "optimize_intrinsics", False):
        cfg.freeze_intrinsics = False
    if getattr(args, "no_cross_loss", False):
        cfg.cross_enabled = False
    if getattr(args, "robust", False):
        cfg.robust = RobustConfig(enabled=True)
    w = getattr(args, "weights", None)
    if w:
        vals = [float(x) for x in w.split(",")]
        if len(vals) != 4:
            raise ValidationError("--weights needs w3d,w2d,wcal,wcross")
        cfg.weights = LossWeights(*vals)
    return cfg


def _set_threads(args):
    if getattr(args, "threads", 0) > 0:
        import torch
        torch.set_num_threads(args.threads)


def _truth_result(gt) -> CalibrationResult:
    lam0 = float(gt.lambdas[0])
    m = len(gt.extrinsics)
    return CalibrationResult(
        camera_ids=list(range(m)),
        extrinsics=list(gt.extrinsics),
        lambdas=gt.lambdas.copy(),
        intrinsics=[gt.intrinsics] * m,
        flags={c: [] for c in range(m)},
        view_ids=list(gt.view_ids),
        view_cameras=list(gt.view_cameras),
        view_pose_indices=list(gt.view_pose_indices),
        sigmas=np.array([gt.lambdas[c] / lam0 for c in gt.view_cameras]),
        poses_world=[RigidTransform(p.rotation, p.translation / lam0)
                     for p in gt.view_poses],
        poses_metric=list(gt.view_poses),
        world_scale=lam0)


def cmd_simulate(args) -> int:
    if args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ScenarioConfig()
    cfg.cameras = args.cameras or cfg.cameras
    cfg.poses = args.poses or cfg.poses
    cfg.n_points = args.points or cfg.n_points
    cfg.seed = args.seed
    if args.scale:
        cfg.lambda_star = tuple([args.scale] * cfg.cameras)
        cfg.__post_init__()
    cfg.noise_depth_rel = args.noise_depth
    cfg.noise_outlier_frac = args.outliers
    cfg.noise_pose_jitter = args.pose_jitter
    scene, traj, gt = generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_archive(scene, os.path.join(args.out, "archive"))
    write_trajectory(traj, os.path.join(args.out, "trajectory.txt"))
    write_result(_truth_result(gt), os.path.join(args.out, "truth.txt"))
    print(f"simulated {len(scene.views)} views, "
          f"{len(scene.matches)} match edges -> {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    _set_threads(args)
    scene = read_archive(args.archive)
    traj = read_trajectory(args.trajectory)
    cfg = _optimizer_config(args)
    result = solve(scene.views, scene.matches, traj, scene.scores, cfg)
    write_result(result, args.out)
    if args.cloud:
        metric_sig = result.sigmas * result.world_scale
        intr = [result.intrinsics[result.camera_ids.index(c)]
                for c in result.view_cameras]
        cloud = scene_cloud(scene.views, metric_sig, intr,
                            result.poses_metric)
        write_cloud(args.cloud, cloud)
    print(f"calibrated {len(result.camera_ids)} camera(s) in "
          f"{result.iterations} iterations "
          f"(converged={result.converged}, loss={result.report.total:.6g})")
    for j, c in enumerate(result.camera_ids):
        fl = ",".join(result.flags[c]) or "-"
        print(f"camera {c} scale {result.lambdas[j]:.6g} flags {fl}")
    return 0


def cmd_baseline(args) -> int:
    _set_threads(args)
    scene = read_archive(args.archive)
    traj = read_trajectory(args.trajectory)
    cfg = _optimizer_config(args)
    params, flags, obs = initialize(scene.views, scene.matches, traj,
                                    scene.scores, cfg)
    lam0 = float(params.lambdas[0])
    result = CalibrationResult(
        camera_ids=params.camera_ids,
        extrinsics=list(params.extrinsics),
        lambdas=np.array([
            params.lambdas[j] * float(np.median(
                [params.sigmas[i] for i, c in enumerate(params.view_cameras)
                 if c == cam]))
            for j, cam in enumerate(params.camera_ids)]),
        intrinsics=list(params.intrinsics),
        flags=flags,
        view_ids=list(params.view_ids),
        view_cameras=list(params.view_cameras),
        view_pose_indices=list(params.view_pose_indices),
        sigmas=params.sigmas.copy(),
        poses_world=list(params.poses),
        poses_metric=[RigidTransform(p.rotation, p.translation * lam0)
                      for p in params.poses],
        world_scale=lam0,
        observability=obs)
    write_result(result, args.out)
    print(f"baseline written to {args.out} "
          f"(planar={obs.planar}, sv={obs.smallest_sv:.3g})")
    return 0


def cmd_evaluate(args) -> int:
    result = read_result(args.result)
    truth = read_result(args.truth)
    if result.camera_ids != truth.camera_ids:
        raise ValidationError("result and reference cover different cameras")
    et, eth = calib_errors(result.extrinsics, truth.extrinsics)
    print(f"e_t {et:.8g}")
    print(f"e_theta {eth:.8g}")
    for j, c in enumerate(result.camera_ids):
        rel = abs(result.lambdas[j] / truth.lambdas[j] - 1.0)
        print(f"scale-rel-err {c} {rel:.8g}")
    if args.archive:
        scene = read_archive(args.archive)
        if scene.board is not None:
            vmap = {vid: i for i, vid in enumerate(result.view_ids)}
            sets = []
            for v in scene.views:
                if v.corners is None or v.view_id not in vmap:
                    continue
                i = vmap[v.view_id]
                k = result.intrinsics[result.camera_ids.index(v.camera_id)]
                sets.append(lift_corners(
                    v, result.sigmas[i] * result.world_scale, k,
                    result.poses_metric[i]))
            if sets:
                m_s, s_s, d_s = scale_accuracy(sets, scene.board)
                print(f"square-mean {m_s:.8g}")
                print(f"square-std {s_s:.8g}")
                print(f"square-err-pct {d_s:.8g}")
    return 0


def cmd_export_cloud(args) -> int:
    scene = read_archive(args.archive)
    result = read_result(args.result)
    metric_sig = result.sigmas * result.world_scale
    intr = [result.intrinsics[result.camera_ids.index(c)]
            for c in result.view_cameras]
    cloud = scene_cloud(scene.views, metric_sig, intr, result.poses_metric,
                        stride=args.stride)
    write_cloud(args.out, cloud)
    print(f"wrote {len(cloud)} points to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rigcal",
        description="joint camera-rig calibration and metric "
                    "reconstruction from pointmaps and robot poses")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--preset", choices=["franka-like", "memroc-like"])
    p.add_argument("--cameras", type=int)
    p.add_argument("--poses", type=int)
    p.add_argument("--points", type=int, help="scene point count")
    p.add_argument("--scale", type=float,
                   help="true metric scale of every camera")
    p.add_argument("--noise-depth", type=float, default=0.0)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--pose-jitter", type=float, default=0.0)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run the full solver")
    p.add_argument("--archive", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cloud")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--optimize-intrinsics", action="store_true")
    p.add_argument("--freeze-intrinsics", action="store_true",
                   help="keep intrinsics at their priors (default)")
    p.add_argument("--no-cross-loss", action="store_true")
    p.add_argument("--robust", action="store_true")
    p.add_argument("--weights", help="w3d,w2d,wcal,wcross")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("baseline", help="closed-form initialization only")
    p.add_argument("--archive", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="compare a result to a reference")
    p.add_argument("--result", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--archive", help="archive with checkerboard detections")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-cloud", help="fuse the metric point cloud")
    p.add_argument("--archive", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.set_defaults(func=cmd_export_cloud)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; normalize to 1 (validation)
        return 0 if e.code in (0, None) else 1
    if not hasattr(args, "func"):
        build_parser().print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 2
    except (ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RigcalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
