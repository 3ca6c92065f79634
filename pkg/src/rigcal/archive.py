"""On-disk formats: scene archives, trajectories, and result files.

An archive is a directory with a text manifest plus raw little-endian
binaries (float32 grids, uint8 masks). All numeric payloads have exact
known byte sizes, so truncation or padding is detected on read, and a
read-write cycle reproduces the bytes exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import (CorruptBinary, DimensionMismatch, MalformedLine,
                     MissingChannel, NonRigidRotation, FirstPoseNotIdentity)
from .evaluation import CheckerboardSpec
from .geometry import Intrinsics, RigidTransform, Rotation
from .graph import validate_scores
from .losses import RobotTrajectory
from .optimizer import CalibrationResult
from .pointmap import MatchSet, Pointmap, ViewRecord, canonical_pointmap

_ARCHIVE_MAGIC = "format rigcal-archive 1"
_TRAJ_MAGIC = "format rigcal-trajectory 1"
_RESULT_MAGIC = "format rigcal-result 1"


@dataclass
class SceneInputs:
    """Everything the solver consumes besides the robot trajectory."""

    views: List[ViewRecord]
    matches: Dict[Tuple[int, int], MatchSet]
    scores: Optional[np.ndarray] = None
    board: Optional[CheckerboardSpec] = None
    estimates: Dict[int, List[Pointmap]] = field(default_factory=dict)


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_exact(path, nbytes: int) -> bytes:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) != nbytes:
        raise CorruptBinary(
            f"{os.path.basename(path)}: {len(blob)} bytes, "
            f"expected {nbytes}")
    return blob


# --- archive ----------------------------------------------------------------

def write_archive(scene: SceneInputs, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = [_ARCHIVE_MAGIC]
    if scene.board is not None:
        b = scene.board
        lines.append(f"board {b.rows} {b.cols} {_fmt(b.square_size)}")
    for v in scene.views:
        k = v.intrinsics_prior
        ests = scene.estimates.get(v.view_id) or [v.pointmap]
        channels = []
        if v.ground_mask is not None:
            channels.append("mask")
        if v.corners is not None:
            channels.append(f"corners:{len(v.corners)}")
        lines.append(
            f"view {v.view_id} {v.camera_id} {v.pose_index} "
            f"{k.width} {k.height} {_fmt(k.fx)} {_fmt(k.fy)} "
            f"{_fmt(k.cx)} {_fmt(k.cy)} {len(ests)} "
            f"{','.join(channels) if channels else '-'}")
        for e, pm in enumerate(ests):
            grid = np.concatenate(
                [pm.points, pm.confidence[..., None]], axis=-1)
            with open(os.path.join(
                    directory, f"view_{v.view_id}_est{e}.f32"), "wb") as f:
                f.write(grid.astype("<f4").tobytes(order="C"))
        if v.ground_mask is not None:
            with open(os.path.join(
                    directory, f"view_{v.view_id}_mask.u8"), "wb") as f:
                f.write(v.ground_mask.astype(np.uint8).tobytes(order="C"))
        if v.corners is not None:
            with open(os.path.join(
                    directory, f"view_{v.view_id}_corners.f32"), "wb") as f:
                f.write(v.corners.astype("<f4").tobytes(order="C"))
    for (a, b) in sorted(scene.matches):
        m = scene.matches[(a, b)]
        lines.append(f"matches {a} {b} {len(m)}")
        block = np.concatenate(
            [m.pixels_a, m.pixels_b, m.weights[:, None]], axis=1)
        with open(os.path.join(directory, f"matches_{a}_{b}.f32"),
                  "wb") as f:
            f.write(block.astype("<f4").tobytes(order="C"))
    if scene.scores is not None:
        lines.append(f"scores {len(scene.scores)}")
        with open(os.path.join(directory, "scores.f32"), "wb") as f:
            f.write(scene.scores.astype("<f4").tobytes(order="C"))
    with open(os.path.join(directory, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def read_archive(directory) -> SceneInputs:
    manifest = os.path.join(directory, "manifest.txt")
    with open(manifest) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or lines[0] != _ARCHIVE_MAGIC:
        raise MalformedLine("not an archive manifest")
    board = None
    views: List[ViewRecord] = []
    estimates: Dict[int, List[Pointmap]] = {}
    matches: Dict[Tuple[int, int], MatchSet] = {}
    scores = None
    for ln in lines[1:]:
        fields = ln.split()
        kind = fields[0]
        if kind == "board":
            if len(fields) != 4:
                raise MalformedLine(f"bad board line: {ln!r}")
            board = CheckerboardSpec(int(fields[1]), int(fields[2]),
                                     float(fields[3]))
        elif kind == "view":
            if len(fields) != 12:
                raise MalformedLine(f"bad view line: {ln!r}")
            vid, cam, pidx = int(fields[1]), int(fields[2]), int(fields[3])
            w, h = int(fields[4]), int(fields[5])
            k = Intrinsics(float(fields[6]), float(fields[7]),
                           float(fields[8]), float(fields[9]), w, h)
            n_est = int(fields[10])
            channels = [] if fields[11] == "-" else fields[11].split(",")
            ests = []
            for e in range(n_est):
                path = os.path.join(directory, f"view_{vid}_est{e}.f32")
                if not os.path.exists(path):
                    raise MissingChannel(
                        f"view {vid} estimate {e} binary missing")
                blob = _read_exact(path, h * w * 4 * 4)
                grid = np.frombuffer(blob, dtype="<f4").reshape(
                    h, w, 4).astype(float)
                ests.append(Pointmap(grid[..., :3], grid[..., 3]))
            mask = None
            corners = None
            for ch in channels:
                if ch == "mask":
                    path = os.path.join(directory, f"view_{vid}_mask.u8")
                    if not os.path.exists(path):
                        raise MissingChannel(f"view {vid} mask missing")
                    mask = np.frombuffer(_read_exact(path, h * w),
                                         dtype=np.uint8).reshape(
                                             h, w).astype(bool)
                elif ch.startswith("corners:"):
                    n = int(ch.split(":", 1)[1])
                    path = os.path.join(directory,
                                        f"view_{vid}_corners.f32")
                    if not os.path.exists(path):
                        raise MissingChannel(f"view {vid} corners missing")
                    corners = np.frombuffer(
                        _read_exact(path, n * 2 * 4),
                        dtype="<f4").reshape(n, 2).astype(float)
                else:
                    raise MissingChannel(f"unknown channel {ch!r}")
            views.append(ViewRecord(
                view_id=vid, camera_id=cam, pose_index=pidx,
                pointmap=canonical_pointmap(ests), intrinsics_prior=k,
                ground_mask=mask, corners=corners))
            estimates[vid] = ests
        elif kind == "matches":
            if len(fields) != 4:
                raise MalformedLine(f"bad matches line: {ln!r}")
            a, b, n = int(fields[1]), int(fields[2]), int(fields[3])
            path = os.path.join(directory, f"matches_{a}_{b}.f32")
            if not os.path.exists(path):
                raise MissingChannel(f"matches {a} {b} binary missing")
            block = np.frombuffer(_read_exact(path, n * 5 * 4),
                                  dtype="<f4").reshape(n, 5).astype(float)
            matches[(a, b)] = MatchSet((a, b), block[:, 0:2], block[:, 2:4],
                                       block[:, 4])
        elif kind == "scores":
            n = int(fields[1])
            path = os.path.join(directory, "scores.f32")
            blob = _read_exact(path, n * n * 4)
            scores = np.frombuffer(blob, dtype="<f4").reshape(
                n, n).astype(float)
            if n != len(views):
                raise DimensionMismatch(
                    f"scores are {n}x{n} for {len(views)} views")
            validate_scores(scores)
        else:
            raise MalformedLine(f"unknown manifest line: {ln!r}")
    return SceneInputs(views=views, matches=matches, scores=scores,
                       board=board, estimates=estimates)


# --- trajectory -------------------------------------------------------------

def write_trajectory(traj: RobotTrajectory, path) -> None:
    lines = [_TRAJ_MAGIC]
    for i, p in enumerate(traj.poses):
        m = p.as_matrix()[:3]
        lines.append(" ".join([str(i)] + [_fmt(x) for x in m.ravel()]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _pose_from_12(nums, what: str) -> RigidTransform:
    m = np.array(nums, dtype=float).reshape(3, 4)
    r = m[:, :3]
    if (np.max(np.abs(r.T @ r - np.eye(3))) <= 1e-12
            and np.linalg.det(r) > 0):
        return RigidTransform(Rotation.from_matrix(r), m[:, 3])
    u, _, vt = np.linalg.svd(r)
    fixed = u @ vt
    if np.linalg.det(fixed) < 0:
        u2 = u.copy()
        u2[:, -1] = -u2[:, -1]
        fixed = u2 @ vt
    if np.max(np.abs(fixed - r)) > 1e-3:
        raise NonRigidRotation(f"{what}: rotation block is not orthonormal")
    return RigidTransform(Rotation.from_matrix(fixed), m[:, 3])


def read_trajectory(path) -> RobotTrajectory:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != _TRAJ_MAGIC:
        raise MalformedLine("not a trajectory file")
    poses = []
    for ln in lines[1:]:
        fields = ln.split()
        if len(fields) != 13:
            raise MalformedLine(f"bad trajectory line: {ln!r}")
        idx = int(fields[0])
        if idx != len(poses):
            raise MalformedLine(
                f"trajectory index {idx} out of order (expected "
                f"{len(poses)})")
        poses.append(_pose_from_12([float(x) for x in fields[1:]],
                                   f"pose {idx}"))
    if not poses:
        raise MalformedLine("trajectory file has no poses")
    gap = np.max(np.abs(poses[0].as_matrix() - np.eye(4)))
    if gap > 1e-6:
        raise FirstPoseNotIdentity(
            f"first pose differs from identity by {gap:.2e}")
    poses[0] = RigidTransform.identity()
    return RobotTrajectory(poses)


# --- result -----------------------------------------------------------------

def write_result(result: CalibrationResult, path) -> None:
    lines = [_RESULT_MAGIC]
    for j, c in enumerate(result.camera_ids):
        k = result.intrinsics[j]
        x12 = " ".join(_fmt(v) for v in
                       result.extrinsics[j].as_matrix()[:3].ravel())
        fl = ",".join(result.flags.get(c, [])) or "-"
        lines.append(
            f"camera {c} {_fmt(result.lambdas[j])} {k.width} {k.height} "
            f"{_fmt(k.fx)} {_fmt(k.fy)} {_fmt(k.cx)} {_fmt(k.cy)} "
            f"{x12} {fl}")
    for i, vid in enumerate(result.view_ids):
        p12 = " ".join(_fmt(v) for v in
                       result.poses_metric[i].as_matrix()[:3].ravel())
        lines.append(
            f"view {vid} {result.view_cameras[i]} "
            f"{result.view_pose_indices[i]} {_fmt(result.sigmas[i])} {p12}")
    lines.append(f"world-scale {_fmt(result.world_scale)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_result(path) -> CalibrationResult:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != _RESULT_MAGIC:
        raise MalformedLine("not a result file")
    cam_ids, extr, lams, intr, flags = [], [], [], [], {}
    vids, vcams, vpidx, sigmas, poses_m = [], [], [], [], []
    world_scale = 1.0
    for ln in lines[1:]:
        fields = ln.split()
        if fields[0] == "camera":
            if len(fields) != 22:
                raise MalformedLine(f"bad camera line: {ln!r}")
            c = int(fields[1])
            cam_ids.append(c)
            lams.append(float(fields[2]))
            intr.append(Intrinsics(*[float(x) for x in fields[5:9]],
                                   int(fields[3]), int(fields[4])))
            extr.append(_pose_from_12([float(x) for x in fields[9:21]],
                                      f"camera {c}"))
            flags[c] = [] if fields[21] == "-" else fields[21].split(",")
        elif fields[0] == "view":
            if len(fields) != 17:
                raise MalformedLine(f"bad view line: {ln!r}")
            vids.append(int(fields[1]))
            vcams.append(int(fields[2]))
            vpidx.append(int(fields[3]))
            sigmas.append(float(fields[4]))
            poses_m.append(_pose_from_12([float(x) for x in fields[5:17]],
                                         f"view {fields[1]}"))
        elif fields[0] == "world-scale":
            world_scale = float(fields[1])
        else:
            raise MalformedLine(f"unknown result line: {ln!r}")
    ws = world_scale if world_scale > 0 else 1.0
    poses_world = [RigidTransform(p.rotation, p.translation / ws)
                   for p in poses_m]
    return CalibrationResult(
        camera_ids=cam_ids, extrinsics=extr, lambdas=np.array(lams),
        intrinsics=intr, flags=flags, view_ids=vids, view_cameras=vcams,
        view_pose_indices=vpidx, sigmas=np.array(sigmas),
        poses_world=poses_world, poses_metric=poses_m,
        world_scale=world_scale)
