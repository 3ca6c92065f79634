"""Synthetic scene generator with exact ground truth.

Scenes are sparse point clouds rendered into pixel-owned pointmaps: every
visible scene point owns its nearest integer pixel (z-buffered), the stored
depth there is the point's exact camera-frame z divided by the camera's
scale factor, and matches carry the exact float projections. With zero
noise the unified loss is identically zero at the ground-truth parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .archive import SceneInputs
from .errors import InvalidConfig, UnknownPreset
from .evaluation import CheckerboardSpec
from .geometry import Intrinsics, RigidTransform, Rotation
from .losses import ParameterBlock, RobotTrajectory
from .graph import build_graph
from .pointmap import MatchSet, Pointmap, ViewRecord


@dataclass
class ScenarioConfig:
    mode: str = "arm"                      # "arm" | "mobile"
    cameras: int = 1
    poses: int = 25
    n_points: int = 400
    extent: float = 1.0
    board: Optional[CheckerboardSpec] = None
    noise_depth_rel: float = 0.0
    noise_outlier_frac: float = 0.0
    noise_pose_jitter: float = 0.0
    lambda_star: Tuple[float, ...] = (1.0,)
    seed: int = 0
    width: int = 64
    height: int = 48
    focal: float = 70.0
    k_fps: int = 10
    k_nn: int = 3
    max_matches_per_edge: int = 150
    estimates_per_view: int = 1

    def __post_init__(self):
        if self.mode not in ("arm", "mobile"):
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        if self.cameras < 1 or self.poses < 2:
            raise InvalidConfig("need >= 1 camera and >= 2 poses")
        if (self.noise_depth_rel < 0 or self.noise_outlier_frac < 0
                or self.noise_pose_jitter < 0):
            raise InvalidConfig("noise parameters must be >= 0")
        lam = self.lambda_star
        if np.isscalar(lam):
            lam = (float(lam),) * self.cameras
        elif len(lam) == 1:
            lam = (float(lam[0]),) * self.cameras
        elif len(lam) != self.cameras:
            raise InvalidConfig("lambda_star length must match camera count")
        if any(v <= 0 for v in lam):
            raise InvalidConfig("lambda_star must be positive")
        self.lambda_star = tuple(float(v) for v in lam)

    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.focal, self.focal,
                          self.width / 2.0 - 0.5, self.height / 2.0 - 0.5,
                          self.width, self.height)


@dataclass
class GroundTruth:
    extrinsics: List[RigidTransform]
    lambdas: np.ndarray
    view_poses: List[RigidTransform]     # metric, in R0
    view_ids: List[int]
    view_cameras: List[int]
    view_pose_indices: List[int]
    scene_points: np.ndarray             # (P, 3) metric, in R0
    trajectory: RobotTrajectory          # noise-free
    board_corners: Optional[np.ndarray]  # (K, 3) metric, in R0
    intrinsics: Intrinsics

    def parameter_block(self) -> ParameterBlock:
        """Ground truth in the optimizer's gauge: world at camera-0
        reconstruction scale, sigma of view (0,0) equal to one."""
        lam0 = float(self.lambdas[0])
        poses = [RigidTransform(p.rotation, p.translation / lam0)
                 for p in self.view_poses]
        sigmas = np.array([self.lambdas[c] / lam0 for c in self.view_cameras])
        m = len(self.extrinsics)
        return ParameterBlock(
            view_ids=list(self.view_ids),
            view_cameras=list(self.view_cameras),
            view_pose_indices=list(self.view_pose_indices),
            poses=poses, sigmas=sigmas,
            intrinsics=[self.intrinsics] * m,
            lambdas=np.full(m, lam0),
            extrinsics=list(self.extrinsics))


def preset(name: str) -> ScenarioConfig:
    if name == "franka-like":
        return ScenarioConfig(
            mode="arm", cameras=1, poses=25, n_points=350,
            board=CheckerboardSpec(7, 10, 0.03))
    if name == "memroc-like":
        return ScenarioConfig(
            mode="mobile", cameras=3, poses=25, n_points=450,
            board=CheckerboardSpec(7, 6, 0.10),
            lambda_star=(1.0, 1.0, 1.0))
    raise UnknownPreset(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------

def _look_at(position, target, up_hint):
    z = target - position
    z = z / np.linalg.norm(z)
    x = np.cross(up_hint, z)
    n = np.linalg.norm(x)
    if n < 1e-6:
        x = np.cross(np.array([1.0, 0, 0]), z)
        n = np.linalg.norm(x)
    x = x / n
    y = np.cross(z, x)
    return Rotation.from_matrix(np.stack([x, y, z], axis=1))


def _arm_extrinsics(rng, m):
    out = []
    for _ in range(m):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.1, 0.4)
        out.append(RigidTransform(Rotation.from_axis_angle(angle * axis),
                                  rng.uniform(-0.08, 0.08, size=3)))
    return out


_CAM_TO_BASE = Rotation.from_matrix(np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
]))


def _mobile_extrinsics(rng, m):
    out = []
    for j in range(m):
        yaw = (j - (m - 1) / 2.0) * 0.35 + rng.uniform(-0.05, 0.05)
        tilt = Rotation.from_axis_angle(rng.uniform(-0.06, 0.06, size=3))
        rot = Rotation.from_axis_angle(np.array([0, 0, yaw])).compose(
            _CAM_TO_BASE).compose(tilt)
        t = np.array([rng.uniform(0.05, 0.2),
                      (j - (m - 1) / 2.0) * 0.15 + rng.uniform(-0.02, 0.02),
                      rng.uniform(0.3, 0.5)])
        out.append(RigidTransform(rot, t))
    return out


def _arm_scene(rng, cfg, x0):
    center = x0.apply(np.array([0.0, 0.0, 0.85]))
    pts = center + rng.uniform(-cfg.extent / 2, cfg.extent / 2,
                               size=(cfg.n_points, 3))
    corners = None
    if cfg.board is not None:
        b = cfg.board
        normal = x0.apply(np.zeros(3)) - center
        normal /= np.linalg.norm(normal)
        u = np.cross(normal, np.array([0.0, 0.0, 1.0]))
        if np.linalg.norm(u) < 1e-6:
            u = np.cross(normal, np.array([0.0, 1.0, 0.0]))
        u /= np.linalg.norm(u)
        v = np.cross(normal, u)
        r = np.arange(b.rows) - (b.rows - 1) / 2.0
        c = np.arange(b.cols) - (b.cols - 1) / 2.0
        grid = (center[None, None, :]
                + b.square_size * r[:, None, None] * v[None, None, :]
                + b.square_size * c[None, :, None] * u[None, None, :])
        corners = grid.reshape(-1, 3)
    return pts, corners


def _mobile_scene(rng, cfg):
    n_ground = int(0.4 * cfg.n_points)
    n_wall = cfg.n_points - n_ground
    ground = np.stack([rng.uniform(0.8, 3.5, size=n_ground),
                       rng.uniform(-2.0, 2.0, size=n_ground),
                       np.zeros(n_ground)], axis=1)
    wall = np.stack([rng.uniform(1.8, 3.5, size=n_wall),
                     rng.uniform(-2.0, 2.0, size=n_wall),
                     rng.uniform(0.1, 2.2, size=n_wall)], axis=1)
    pts = np.concatenate([ground, wall], axis=0)
    ground_ids = set(range(n_ground))
    corners = None
    if cfg.board is not None:
        b = cfg.board
        center = np.array([3.4, 0.0, 0.9])
        u = np.array([0.0, 1.0, 0.0])
        v = np.array([0.0, 0.0, 1.0])
        r = np.arange(b.rows) - (b.rows - 1) / 2.0
        c = np.arange(b.cols) - (b.cols - 1) / 2.0
        grid = (center[None, None, :]
                + b.square_size * r[:, None, None] * v[None, None, :]
                + b.square_size * c[None, :, None] * u[None, None, :])
        corners = grid.reshape(-1, 3)
    return pts, ground_ids, corners


def _arm_trajectory(rng, cfg, x0, center):
    poses = [RigidTransform.identity()]
    c00 = x0  # camera 0 at robot pose 0
    for _ in range(cfg.poses - 1):
        radius = np.linalg.norm(c00.translation - center)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        pos = center + direction * radius * rng.uniform(0.85, 1.15)
        up = rng.normal(size=3)
        up /= np.linalg.norm(up)
        cam = RigidTransform(
            _look_at(pos, center + rng.uniform(-0.05, 0.05, size=3), up), pos)
        poses.append(cam @ x0.inverse())
    return poses


def _mobile_trajectory(rng, cfg):
    poses = [RigidTransform.identity()]
    for _ in range(cfg.poses - 1):
        x = rng.uniform(-0.5, 0.8)
        y = rng.uniform(-0.8, 0.8)
        heading = rng.uniform(-0.35, 0.35)
        poses.append(RigidTransform(
            Rotation.from_axis_angle(np.array([0.0, 0.0, heading])),
            np.array([x, y, 0.0])))
    return poses


def _render_view(points, corner_points, cam_pose, k, lam, rng_noise,
                 depth_noise, ground_ids=None):
    """Returns (owner map data) for one view.

    corner points take z-buffer priority so checkerboard detections stay
    complete; regular points then fill remaining pixels nearest-first.
    Pixels owned by a ground point store the exact depth of the pixel
    centre ray's intersection with the z=0 plane, so the unprojected grid
    is exactly planar there (the sample point itself projects up to half a
    pixel away from the centre, which would otherwise leave the stored
    xyz slightly off the plane).
    """
    w, h = k.width, k.height
    all_pts = points if corner_points is None else np.concatenate(
        [points, corner_points])
    n_reg = len(points)
    local = cam_pose.inverse().apply(all_pts)
    z = local[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * local[:, 0] / z + k.cx
        v = k.fy * local[:, 1] / z + k.cy
    ok = (z > 0.05) & (u >= -0.49) & (u <= w - 0.51) & (v >= -0.49) \
        & (v <= h - 0.51)
    ui = np.rint(u).astype(int)
    vi = np.rint(v).astype(int)

    owner = {}
    order = np.argsort(z, kind="stable")
    for idx in order:  # nearest first
        if not ok[idx]:
            continue
        key = (vi[idx], ui[idx])
        if key in owner:
            prev = owner[key]
            if prev >= n_reg:
                continue  # corners keep priority
            if idx >= n_reg:
                pass      # corner overrides a regular point
            else:
                continue
        owner[key] = idx

    visible = {}
    depth_map = np.zeros((h, w))
    conf = np.zeros((h, w))
    rot = cam_pose.rotation.as_matrix()
    cam_z = cam_pose.translation[2]
    for (pv, pu), idx in owner.items():
        d = z[idx]
        if ground_ids and idx in ground_ids:
            ray = np.array([(pu - k.cx) / k.fx, (pv - k.cy) / k.fy, 1.0])
            dz = rot[2] @ ray
            if abs(dz) > 1e-9:
                s = -cam_z / dz
                if 0.05 < s < 4.0 * d:
                    d = s
        if depth_noise > 0:
            d = d * (1.0 + rng_noise.normal(scale=depth_noise))
            if d <= 1e-3:
                continue
        depth_map[pv, pu] = d / lam
        conf[pv, pu] = 1.0
        visible[int(idx)] = (float(u[idx]), float(v[idx]), float(d))
    return visible, depth_map, conf


def _pointmap_from_depth(depth_map, conf, k):
    h, w = depth_map.shape
    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pts = np.stack([(uu - k.cx) / k.fx * depth_map,
                    (vv - k.cy) / k.fy * depth_map,
                    depth_map], axis=-1)
    return Pointmap(pts, conf)


def generate(config: ScenarioConfig):
    """Build (SceneInputs, RobotTrajectory, GroundTruth) for a scenario."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    k = cfg.intrinsics()
    m = cfg.cameras

    if cfg.mode == "arm":
        extrinsics = _arm_extrinsics(rng, m)
        points, corners = _arm_scene(rng, cfg, extrinsics[0])
        ground_ids = set()
        center = points.mean(axis=0)
        trajectory_true = _arm_trajectory(rng, cfg, extrinsics[0], center)
    else:
        extrinsics = _mobile_extrinsics(rng, m)
        points, ground_ids, corners = _mobile_scene(rng, cfg)
        trajectory_true = _mobile_trajectory(rng, cfg)

    lambdas = np.array(cfg.lambda_star)
    n_reg = len(points)
    n_board = 0 if corners is None else len(corners)

    views: List[ViewRecord] = []
    gt_poses: List[RigidTransform] = []
    view_ids, view_cams, view_pidx = [], [], []
    visible_sets: List[Dict[int, tuple]] = []
    estimates: Dict[int, List[Pointmap]] = {}
    noise_rng = np.random.default_rng(cfg.seed + 1)

    vid = 0
    for j in range(m):
        for i in range(cfg.poses):
            cam_pose = trajectory_true[i] @ extrinsics[j]
            n_est = max(1, cfg.estimates_per_view)
            est_list = []
            visible = None
            for _ in range(n_est):
                vis_e, depth_map, conf = _render_view(
                    points, corners, cam_pose, k, lambdas[j], noise_rng,
                    cfg.noise_depth_rel, ground_ids)
                if visible is None:
                    visible = vis_e
                if n_est > 1:
                    conf = conf * noise_rng.uniform(0.5, 1.5,
                                                    size=conf.shape)
                est_list.append(_pointmap_from_depth(depth_map, conf, k))
            if len(visible) < 12:
                raise InvalidConfig(
                    f"camera {j} pose {i} sees too few points; "
                    "adjust scene extent or focal")
            from .pointmap import canonical_pointmap
            pm = canonical_pointmap(est_list)

            mask = None
            if ground_ids:
                mask = np.zeros(pm.confidence.shape, dtype=bool)
                for pid, (uu, vv, _) in visible.items():
                    if pid in ground_ids:
                        mask[int(round(vv)), int(round(uu))] = True

            corner_px = None
            if n_board:
                have = [visible.get(n_reg + t) for t in range(n_board)]
                if all(h is not None for h in have):
                    corner_px = np.array([[h[0], h[1]] for h in have])

            views.append(ViewRecord(
                view_id=vid, camera_id=j, pose_index=i, pointmap=pm,
                intrinsics_prior=k, ground_mask=mask, corners=corner_px))
            estimates[vid] = est_list
            gt_poses.append(cam_pose)
            view_ids.append(vid)
            view_cams.append(j)
            view_pidx.append(i)
            visible_sets.append(visible)
            vid += 1

    # co-visibility scores: shared visible point fraction
    nv = len(views)
    scores = np.zeros((nv, nv))
    keysets = [set(vs.keys()) for vs in visible_sets]
    for a in range(nv):
        for b in range(a + 1, nv):
            shared = len(keysets[a] & keysets[b])
            s = shared / max(1, min(len(keysets[a]), len(keysets[b])))
            scores[a, b] = scores[b, a] = min(1.0, s)

    edges = build_graph(scores, cfg.k_fps, cfg.k_nn)
    match_rng = np.random.default_rng(cfg.seed + 2)
    matches: Dict[Tuple[int, int], MatchSet] = {}
    for (a, b) in edges:
        # ground pixels carry plane-snapped depth, so their grid entries no
        # longer reproduce the sample point exactly; keep them out of the
        # correspondence sets
        shared = sorted((keysets[a] & keysets[b]) - ground_ids)
        if len(shared) < 3:
            continue
        if len(shared) > cfg.max_matches_per_edge:
            pick = match_rng.choice(len(shared), cfg.max_matches_per_edge,
                                    replace=False)
            shared = [shared[t] for t in sorted(pick)]
        pa = np.array([visible_sets[a][p][:2] for p in shared])
        pb = np.array([visible_sets[b][p][:2] for p in shared])
        n_out = int(round(cfg.noise_outlier_frac * len(shared)))
        if n_out > 0:
            pool = sorted(keysets[b])
            out_idx = match_rng.choice(len(shared), n_out, replace=False)
            for t in out_idx:
                swap = pool[int(match_rng.integers(len(pool)))]
                pb[t] = visible_sets[b][swap][:2]
        matches[(a, b)] = MatchSet((a, b), pa, pb, np.ones(len(shared)))

    traj_true = RobotTrajectory(trajectory_true)
    if cfg.noise_pose_jitter > 0:
        jit_rng = np.random.default_rng(cfg.seed + 3)
        jittered = [trajectory_true[0]]
        for p in trajectory_true[1:]:
            from .geometry import Tangent6, exp_map
            xi = Tangent6(jit_rng.normal(scale=cfg.noise_pose_jitter, size=6))
            jittered.append(exp_map(xi) @ p)
        traj_input = RobotTrajectory(jittered)
    else:
        traj_input = traj_true

    scene = SceneInputs(views=views, matches=matches, scores=scores,
                        board=cfg.board, estimates=estimates)
    gt = GroundTruth(
        extrinsics=extrinsics, lambdas=lambdas, view_poses=gt_poses,
        view_ids=view_ids, view_cameras=view_cams,
        view_pose_indices=view_pidx, scene_points=points,
        trajectory=traj_true, board_corners=corners, intrinsics=k)
    return scene, traj_input, gt
