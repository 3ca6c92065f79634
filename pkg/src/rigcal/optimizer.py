"""Joint calibration solver.

Pipeline: closed-form initialization (pairwise similarity registration of
pointmaps chained over a spanning tree, then hand-eye with scale per
camera), followed by adaptive first-order refinement of all parameters on
the unified loss. Planar trajectories get a degenerate-motion fallback and
post-hoc height recovery from ground-labelled pixels.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (DegenerateMotion, GraphDisconnected, InsufficientPoses,
                     NonFiniteLoss, ZeroCameraTranslation)
from .geometry import (Intrinsics, RigidTransform, Rotation, Tangent6,
                       exp_map)
from .graph import SceneGraph
from .groundplane import PlaneModel, fit_plane, mean_camera_height
from .handeye import (MotionPairSet, solve_with_scale, unobservable_axis)
from .losses import (LossContext, LossReport, LossWeights, ParameterBlock,
                     RobotTrajectory, RobustConfig)
from .pointmap import MatchSet, ViewRecord, local_points_at


@dataclass
class OptimizerConfig:
    max_iters: int = 600
    lr: float = 1e-2
    lr_grow: float = 1.3
    lr_min: float = 1e-12
    backtrack_max: int = 12
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_frac: float = 0.3
    ramp_end_frac: float = 0.6
    stop_rel: float = 1e-7
    stop_window: int = 20
    stop_abs: float = 1e-8
    intrinsics_multiplier: float = 0.1
    freeze_intrinsics: bool = True
    cross_enabled: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    robust: RobustConfig = field(default_factory=RobustConfig)
    planar_tol: float = 1e-6
    plane_ransac_iters: int = 500
    plane_threshold: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.robust, bool):
            self.robust = RobustConfig(enabled=self.robust)


@dataclass
class ObservabilityReport:
    smallest_sv: float
    axis: np.ndarray
    planar: bool


@dataclass
class CalibrationResult:
    camera_ids: List[int]
    extrinsics: List[RigidTransform]       # metric camera-to-robot
    lambdas: np.ndarray                    # per-camera metric scale
    intrinsics: List[Intrinsics]
    flags: Dict[int, List[str]]
    view_ids: List[int]
    view_cameras: List[int]
    view_pose_indices: List[int]
    sigmas: np.ndarray                     # per-view, world units
    poses_world: List[RigidTransform]
    poses_metric: List[RigidTransform]
    world_scale: float                     # metric meters per world unit
    report: Optional[LossReport] = None
    observability: Optional[ObservabilityReport] = None
    iterations: int = 0
    converged: bool = False
    history: List[float] = field(default_factory=list)

    def extrinsic_of(self, camera_id: int) -> RigidTransform:
        return self.extrinsics[self.camera_ids.index(camera_id)]


def analyze_observability(traj: RobotTrajectory,
                          tol: float = 1e-6) -> ObservabilityReport:
    """Detect the unconstrained translation axis of planar trajectories."""
    rots = [traj.relative_motion(i, i + 1).rotation
            for i in range(len(traj) - 1)]
    sv, axis = unobservable_axis(rots)
    if axis[2] < 0:
        axis = -axis
    return ObservabilityReport(sv, axis, planar=bool(sv <= tol))


# ---------------------------------------------------------------------------
# initialization: similarity registration + hand-eye

def _umeyama(src, dst, w):
    """Weighted similarity fit: dst ~ s R src + t."""
    w = w / w.sum()
    mu_s = w @ src
    mu_d = w @ dst
    ps = src - mu_s
    pd = dst - mu_d
    cov = (pd * w[:, None]).T @ ps
    u, d, vt = np.linalg.svd(cov)
    s3 = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s3[2, 2] = -1.0
    rot = u @ s3 @ vt
    var = float((w * (ps * ps).sum(axis=1)).sum())
    scale = float(np.trace(np.diag(d) @ s3)) / max(var, 1e-12)
    t = mu_d - scale * rot @ mu_s
    return scale, rot, t


def _register_edge(va: ViewRecord, vb: ViewRecord, m: MatchSet,
                   ka: Intrinsics, kb: Intrinsics, trim_rounds: int = 2):
    pa = local_points_at(va, m.pixels_a, ka)
    pb = local_points_at(vb, m.pixels_b, kb)
    w = m.weights.astype(float).copy()
    keep = np.ones(len(pa), dtype=bool)
    for _ in range(trim_rounds + 1):
        s, rot, t = _umeyama(pa[keep], pb[keep], w[keep])
        res = np.linalg.norm(pb - (s * pa @ rot.T + t), axis=1)
        med = np.median(res[keep])
        new_keep = res <= max(3.0 * med, 1e-9)
        if new_keep.sum() < 4 or np.array_equal(new_keep, keep):
            break
        keep = new_keep
    return s, rot, t


def _camera_spanning_tree(view_idx: List[int],
                          matches: Dict[Tuple[int, int], MatchSet],
                          scores: Optional[np.ndarray]):
    """Maximum-score spanning tree over the given views."""
    vset = set(view_idx)
    edges = []
    for (a, b), m in matches.items():
        if a in vset and b in vset:
            s = scores[a, b] if scores is not None else float(len(m))
            edges.append((s, a, b))
    edges.sort(key=lambda e: (-e[0], e[1], e[2]))
    parent = {v: v for v in vset}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    adj = {v: [] for v in vset}
    for _, a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            adj[a].append(b)
            adj[b].append(a)
    return adj


def _register_views(views: List[ViewRecord], root: int,
                    matches: Dict[Tuple[int, int], MatchSet],
                    scores: Optional[np.ndarray]):
    """Per-view (sigma, pose) in the frame of the root view, chained over
    a maximum-score spanning tree of the match graph."""
    by_id = {v.view_id: v for v in views}
    adj = _camera_spanning_tree(list(by_id), matches, scores)
    sigma = {root: 1.0}
    pose = {root: RigidTransform.identity()}
    stack = [root]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if b in sigma:
                continue
            lo, hi = (a, b) if a < b else (b, a)
            m = matches[(lo, hi)]
            s, rot, t = _register_edge(
                by_id[lo], by_id[hi], m,
                by_id[lo].intrinsics_prior, by_id[hi].intrinsics_prior)
            # p_hi = s R p_lo + t with s = sigma_lo / sigma_hi and
            # (R, t * sigma_hi) = T_hi^-1 T_lo
            if b == hi:
                sigma[hi] = sigma[lo] / s
                rel = RigidTransform(Rotation.from_matrix(rot),
                                     t * sigma[hi])
                pose[hi] = pose[lo] @ rel.inverse()
            else:
                sigma[lo] = sigma[hi] * s
                rel = RigidTransform(Rotation.from_matrix(rot),
                                     t * sigma[hi])
                pose[lo] = pose[hi] @ rel
            stack.append(b)
    missing = [v for v in by_id if v not in sigma]
    return sigma, pose, missing


def _aligned_rotvecs(pairs: MotionPairSet):
    va_list, vb_list = [], []
    ref = None
    for a, b in pairs.pairs:
        va = a.rotation.axis_angle()
        vb = b.rotation.axis_angle()
        if np.linalg.norm(va) < 1e-4:
            continue
        if ref is None:
            ref = va
        elif va @ ref < 0:
            va, vb = -va, -vb
        va_list.append(va)
        vb_list.append(vb)
    return np.array(va_list), np.array(vb_list)


def _minimal_rotation(src, dst) -> Rotation:
    """Rotation taking unit vector src onto dst along the shortest arc."""
    c = float(np.clip(src @ dst, -1.0, 1.0))
    axis = np.cross(src, dst)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        if c > 0:
            return Rotation.identity()
        ortho = np.cross(src, np.array([1.0, 0, 0]))
        if np.linalg.norm(ortho) < 1e-6:
            ortho = np.cross(src, np.array([0.0, 1.0, 0]))
        return Rotation.from_axis_angle(np.pi * ortho / np.linalg.norm(ortho))
    return Rotation.from_axis_angle(axis / n * math.atan2(n, c))


def _planar_handeye(pairs: MotionPairSet, grid: int = 720):
    """Hand-eye for single-axis rotation sets.

    All valid X share the family Rot(n_a, phi) . R0 where R0 aligns the
    camera-side axis to the robot-side axis; phi and the in-plane
    translation (plus scale) come from a linear fit swept over phi.
    """
    va, vb = _aligned_rotvecs(pairs)
    if len(va) == 0:
        raise DegenerateMotion("no rotational motion for planar fallback")
    n_a = va.sum(axis=0)
    n_a /= np.linalg.norm(n_a)
    n_b = vb.sum(axis=0)
    n_b /= np.linalg.norm(n_b)
    r0 = _minimal_rotation(n_b, n_a)

    rows_a = np.concatenate(
        [a.rotation.as_matrix() - np.eye(3) for a, _ in pairs.pairs])
    rhs = -np.concatenate([a.translation for a, _ in pairs.pairs])
    tb = np.array([b.translation for _, b in pairs.pairs])

    def fit(phi):
        rx = Rotation.from_axis_angle(phi * n_a).compose(r0).as_matrix()
        col = -(tb @ rx.T).reshape(-1)
        block = np.concatenate([rows_a, col[:, None]], axis=1)
        sol, *_ = np.linalg.lstsq(block, rhs, rcond=None)
        res = float(np.linalg.norm(block @ sol - rhs))
        return res, sol, rx

    # (phi, lam) and (phi + pi, -lam) fit planar motion equally well;
    # only candidates with a positive scale are physical
    phis = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    best = None
    for phi in phis:
        res, sol, rx = fit(phi)
        if sol[3] <= 0:
            continue
        if best is None or res < best[0]:
            best = (res, phi, sol, rx)
    if best is None:
        raise DegenerateMotion(
            "planar fallback found no positive-scale solution")
    # parabolic refinement around the best grid sample
    step = phis[1] - phis[0]
    _, phi_c, _, _ = best
    f0 = fit(phi_c - step)[0]
    f1 = best[0]
    f2 = fit(phi_c + step)[0]
    denom = f0 - 2 * f1 + f2
    if abs(denom) > 1e-18:
        phi_c = phi_c + step * 0.5 * (f0 - f2) / denom
        res, sol, rx = fit(phi_c)
        if res < best[0] and sol[3] > 0:
            best = (res, phi_c, sol, rx)
    res, phi, sol, rx = best
    t, lam = sol[:3], float(sol[3])
    flags = ["z-unobservable"]
    if lam <= 1e-6:
        lam, _ = _scale_ratio_fallback(pairs)
        flags.append("scale-fallback")
        # re-solve the translation with the scale held fixed
        t, *_ = np.linalg.lstsq(rows_a, rhs + (lam * tb @ rx.T).reshape(-1),
                                rcond=None)
    rot = Rotation.from_matrix(rx)
    return RigidTransform(rot, t), lam, flags, n_a


def _scale_ratio_fallback(pairs: MotionPairSet):
    ratios = [np.linalg.norm(a.translation) / np.linalg.norm(b.translation)
              for a, b in pairs.pairs
              if np.linalg.norm(b.translation) > 1e-6]
    if not ratios:
        return 1.0, False
    return float(np.median(ratios)), True


def _motion_pairs(traj: RobotTrajectory, pose_index: List[int],
                  poses: List[RigidTransform]) -> MotionPairSet:
    order = np.argsort(pose_index)
    pairs = []
    for u, v in zip(order[:-1], order[1:]):
        a = traj.relative_motion(pose_index[u], pose_index[v])
        b = poses[u].inverse() @ poses[v]
        pairs.append((a, b))
    return MotionPairSet(pairs)


def initialize(views: Sequence[ViewRecord],
               matches: Dict[Tuple[int, int], MatchSet],
               traj: RobotTrajectory,
               scores: Optional[np.ndarray] = None,
               config: Optional[OptimizerConfig] = None):
    """Closed-form starting point.

    Returns (ParameterBlock, flags per camera, observability report).
    """
    config = config or OptimizerConfig()
    if len(traj) < 3:
        raise InsufficientPoses("need at least 3 robot poses")
    obs = analyze_observability(traj, config.planar_tol)

    cam_ids = sorted({v.camera_id for v in views})
    flags: Dict[int, List[str]] = {c: [] for c in cam_ids}

    # gauge anchor: first camera's lowest pose index; its pointmap scale
    # defines the size of one world unit
    cam0_views = [v for v in views if v.camera_id == cam_ids[0]]
    anchor_vid = min(cam0_views, key=lambda v: v.pose_index).view_id
    sigma_g, pose_g, missing = _register_views(
        list(views), anchor_vid, matches, scores)
    if missing:
        miss_set = set(missing)
        for c in cam_ids:
            if any(v.view_id in miss_set for v in views
                   if v.camera_id == c):
                flags[c].append("registration-gap")
        for vid in missing:
            sigma_g[vid] = 1.0
            pose_g[vid] = RigidTransform.identity()

    extr: Dict[int, RigidTransform] = {}
    lam: Dict[int, float] = {}
    for c in cam_ids:
        cam_views = [v for v in views if v.camera_id == c]
        if len(cam_views) < 2:
            raise InsufficientPoses(f"camera {c} has fewer than two views")
        ordered = sorted(cam_views, key=lambda v: v.pose_index)
        pidx = [v.pose_index for v in ordered]
        pset = _motion_pairs(traj, pidx,
                             [pose_g[v.view_id] for v in ordered])
        try:
            x, scale = solve_with_scale(pset)
        except DegenerateMotion:
            x, scale, extra, _ = _planar_handeye(pset)
            flags[c].extend(extra)
        except ZeroCameraTranslation:
            x = RigidTransform.identity()
            scale, _ = _scale_ratio_fallback(pset)
            flags[c].append("scale-fallback")
        if scale <= 1e-6:
            scale, _ = _scale_ratio_fallback(pset)
            if "scale-fallback" not in flags[c]:
                flags[c].append("scale-fallback")
        extr[c] = x
        lam[c] = scale

    # every camera's hand-eye scale measures meters per world unit; the
    # first camera's estimate fixes the world scale used for the poses
    lam0 = lam[cam_ids[0]]

    if obs.planar and len(cam_ids) > 1:
        # single-axis motion leaves each mount's height unobservable, but
        # registration pins the rigs' relative geometry: X_0^-1 X_j is the
        # relative pose of same-index views, known up to the world scale
        by_cam_pose = {(v.camera_id, v.pose_index): v.view_id
                       for v in views}
        c0 = cam_ids[0]
        for c in cam_ids[1:]:
            rels = []
            for (cc, i), vid in by_cam_pose.items():
                if cc != c or (c0, i) not in by_cam_pose:
                    continue
                z = pose_g[by_cam_pose[(c0, i)]].inverse() @ pose_g[vid]
                rels.append(z)
            if not rels:
                continue
            rmean = sum(r.rotation.as_matrix() for r in rels) / len(rels)
            u, _, vt = np.linalg.svd(rmean)
            if np.linalg.det(u @ vt) < 0:
                u = u.copy()
                u[:, -1] = -u[:, -1]
            tmean = np.mean([r.translation for r in rels], axis=0) * lam0
            extr[c] = extr[c0] @ RigidTransform(
                Rotation.from_matrix(u @ vt), tmean)
    view_ids = [v.view_id for v in views]
    poses_init: List[RigidTransform] = []
    for v in views:
        e = traj.poses[v.pose_index] @ extr[v.camera_id]
        poses_init.append(RigidTransform(e.rotation, e.translation / lam0))
    sigmas_init = np.array([sigma_g[v.view_id] for v in views])

    params = ParameterBlock(
        view_ids=view_ids,
        view_cameras=[v.camera_id for v in views],
        view_pose_indices=[v.pose_index for v in views],
        poses=poses_init,
        sigmas=sigmas_init,
        intrinsics=[next(v.intrinsics_prior for v in views
                         if v.camera_id == c) for c in cam_ids],
        lambdas=np.array([lam[c] for c in cam_ids]),
        extrinsics=[extr[c] for c in cam_ids])
    return params, flags, obs


# ---------------------------------------------------------------------------
# first-order refinement

def _apply_step(params: ParameterBlock, step: np.ndarray) -> ParameterBlock:
    v = params.num_views
    m = len(params.camera_ids)
    p = params.copy()
    off = 0
    pose_step = step[off:off + 6 * v].reshape(v, 6)
    off += 6 * v
    ls_step = step[off:off + v]
    off += v
    k_step = step[off:off + 4 * m].reshape(m, 4)
    off += 4 * m
    ll_step = step[off:off + m]
    off += m
    x_step = step[off:off + 6 * m].reshape(m, 6)

    p.poses = [exp_map(Tangent6(pose_step[i])) @ params.poses[i]
               for i in range(v)]
    p.sigmas = params.sigmas * np.exp(ls_step)
    p.lambdas = params.lambdas * np.exp(ll_step)
    p.extrinsics = [exp_map(Tangent6(x_step[j])) @ params.extrinsics[j]
                    for j in range(m)]
    p.intrinsics = [Intrinsics(k.fx + d[0], k.fy + d[1], k.cx + d[2],
                               k.cy + d[3], k.width, k.height)
                    for k, d in zip(params.intrinsics, k_step)]
    return p


def _multipliers(params: ParameterBlock, anchor: int,
                 cfg: OptimizerConfig) -> np.ndarray:
    v = params.num_views
    m = len(params.camera_ids)
    pose = np.ones((v, 6))
    pose[anchor] = 0.0
    ls = np.ones(v)
    ls[anchor] = 0.0
    k = np.full((m, 4), 0.0 if cfg.freeze_intrinsics
                else cfg.intrinsics_multiplier)
    ll = np.ones(m)
    x = np.ones((m, 6))
    return np.concatenate([pose.ravel(), ls, k.ravel(), ll, x.ravel()])


def _w2d_scale(it: int, total: int, cfg: OptimizerConfig) -> float:
    a = cfg.warmup_frac * total
    b = cfg.ramp_end_frac * total
    if it < a:
        return 0.0
    if it >= b or b <= a:
        return 1.0
    return (it - a) / (b - a)


def minimize(ctx: LossContext, params: ParameterBlock,
             config: Optional[OptimizerConfig] = None,
             pin_axis: Optional[np.ndarray] = None):
    """Adaptive per-coordinate descent on the unified loss.

    ``pin_axis`` holds the unobservable translation direction (robot base
    frame).  Only the anchor camera's component along it is frozen: match
    and conjugation terms still observe the *relative* offsets between
    mounts along the axis, so the other cameras stay free and only the
    common shift is gauge-fixed.
    """
    cfg = config or OptimizerConfig()
    mult = _multipliers(params, ctx.anchor_idx, cfg)
    m1 = np.zeros_like(mult)
    m2 = np.zeros_like(mult)
    pin = None
    if pin_axis is not None:
        cams = sorted(set(params.view_cameras))
        anchor_cam = cams.index(params.view_cameras[ctx.anchor_idx])
        pin = (anchor_cam,
               float(params.extrinsics[anchor_cam].translation @ pin_axis))

    history: List[float] = []
    recent: deque = deque(maxlen=cfg.stop_window + 1)
    best_params = params
    best_total = math.inf
    converged = False
    lr = cfg.lr
    it = 0
    for it in range(cfg.max_iters):
        w2 = _w2d_scale(it, cfg.max_iters, cfg)
        try:
            report, grad = ctx.evaluate(
                params, cfg.weights, cfg.robust, anchored=True,
                with_grad=True, w2d_scale=w2,
                cross_enabled=cfg.cross_enabled)
        except NonFiniteLoss:
            break
        # objective with the full 2D weight, comparable across the ramp
        full = (cfg.weights.w3d * sum(report.l3d.values())
                + cfg.weights.w2d * sum(report.l2d.values())
                + cfg.weights.wcal * sum(report.lcal.values())
                + cfg.weights.wcross * sum(report.lcross.values()))
        history.append(full)
        if full < best_total:
            best_total = full
            best_params = params
        if full < cfg.stop_abs:
            converged = True
            break
        if w2 >= 1.0:
            recent.append(full)
            if len(recent) > cfg.stop_window:
                old = recent[0]
                rel = (old - full) / max(abs(old), 1e-300)
                if rel < cfg.stop_rel:
                    converged = True
                    break

        g = grad.flat() * mult
        m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * g
        m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * g * g
        bc1 = 1 - cfg.beta1 ** (it + 1)
        bc2 = 1 - cfg.beta2 ** (it + 1)
        direction = -(m1 / bc1) / (np.sqrt(m2 / bc2) + cfg.eps) * mult

        # monotone acceptance: the adaptive direction has unit-scale
        # coordinates, so an unchecked step can leap over a sharp optimum;
        # shrink the rate until the ramped objective stops increasing and
        # let it grow back after accepted steps
        accepted = False
        for _ in range(cfg.backtrack_max):
            cand = _apply_step(params, lr * direction)
            if pin is not None:
                j, p0 = pin
                x = cand.extrinsics[j]
                cand.extrinsics[j] = RigidTransform(
                    x.rotation,
                    x.translation
                    + (p0 - x.translation @ pin_axis) * pin_axis)
            try:
                cand_rep, _ = ctx.evaluate(
                    cand, cfg.weights, cfg.robust, anchored=True,
                    w2d_scale=w2, cross_enabled=cfg.cross_enabled)
            except NonFiniteLoss:
                lr *= 0.5
                continue
            if cand_rep.total <= report.total:
                params = cand
                lr = min(lr * cfg.lr_grow, cfg.lr)
                accepted = True
                break
            lr *= 0.5
        if not accepted and lr < cfg.lr_min:
            converged = True
            break

    if best_total == math.inf:
        best_params = params
    return best_params.copy(), history, converged, it + 1


# ---------------------------------------------------------------------------
# end-to-end solve

def _ground_points_metric(views, params: ParameterBlock, world_scale: float,
                          use_all: bool = False):
    pts = []
    for i, v in enumerate(views):
        pm = v.pointmap
        if use_all:
            sel = pm.valid
        elif v.ground_mask is None or not v.ground_mask.any():
            continue
        else:
            sel = v.ground_mask & pm.valid
        if not sel.any():
            continue
        local = pm.points[sel] * params.sigmas[i] * world_scale
        pose = params.poses[i]
        metric = RigidTransform(pose.rotation,
                                pose.translation * world_scale)
        pts.append(metric.apply(local))
    return np.concatenate(pts) if pts else np.zeros((0, 3))


def solve(views: Sequence[ViewRecord],
          matches: Dict[Tuple[int, int], MatchSet],
          traj: RobotTrajectory,
          scores: Optional[np.ndarray] = None,
          config: Optional[OptimizerConfig] = None) -> CalibrationResult:
    cfg = config or OptimizerConfig()
    params, flags, obs = initialize(views, matches, traj, scores, cfg)
    graph = SceneGraph(list(views), dict(matches))
    ctx = LossContext(params, graph=graph, traj=traj)
    pin = obs.axis if obs.planar else None
    params, history, converged, iters = minimize(ctx, params, cfg, pin)
    report, _ = ctx.evaluate(params, cfg.weights, cfg.robust, anchored=True,
                             cross_enabled=cfg.cross_enabled)

    cam_ids = params.camera_ids
    world_scale = float(params.lambdas[0])
    extr = list(params.extrinsics)

    if obs.planar:
        for c in cam_ids:
            if "z-unobservable" not in flags[c]:
                flags[c].append("z-unobservable")
        ground = _ground_points_metric(views, params, world_scale)
        min_frac = 0.0
        if len(ground) < 3:
            # no ground labels: fall back to the full cloud with a strict
            # consensus requirement, since RANSAC may latch onto walls
            warnings.warn("no ground masks; fitting the ground plane on the "
                          "full reconstruction with a 60% consensus floor")
            ground = _ground_points_metric(views, params, world_scale,
                                           use_all=True)
            min_frac = 0.6
        if len(ground) >= 3:
            centroid = np.mean(
                [p.translation * world_scale for p in params.poses], axis=0)
            try:
                plane = fit_plane(ground, cfg.plane_ransac_iters,
                                  cfg.plane_threshold, cfg.seed,
                                  orient_toward=centroid,
                                  min_inlier_frac=min_frac)
                new_extr = []
                for j, c in enumerate(cam_ids):
                    heights = [plane.height(params.poses[i].translation
                                            * world_scale)
                               for i, v in enumerate(views)
                               if v.camera_id == c]
                    h = float(np.mean(heights))
                    x = extr[j]
                    t = x.translation + (h - x.translation @ obs.axis) \
                        * obs.axis
                    new_extr.append(RigidTransform(x.rotation, t))
                    flags[c].append("z-recovered")
                extr = new_extr
            except Exception:
                for c in cam_ids:
                    flags[c].append("z-unrecovered")
        else:
            for c in cam_ids:
                flags[c].append("z-unrecovered")

    lam_report = np.array([
        params.lambdas[j] * float(np.median(
            [params.sigmas[i] for i, v in enumerate(views)
             if v.camera_id == c]))
        for j, c in enumerate(cam_ids)])

    poses_metric = [RigidTransform(p.rotation, p.translation * world_scale)
                    for p in params.poses]
    return CalibrationResult(
        camera_ids=list(cam_ids),
        extrinsics=extr,
        lambdas=lam_report,
        intrinsics=list(params.intrinsics),
        flags=flags,
        view_ids=list(params.view_ids),
        view_cameras=list(params.view_cameras),
        view_pose_indices=list(params.view_pose_indices),
        sigmas=params.sigmas.copy(),
        poses_world=list(params.poses),
        poses_metric=poses_metric,
        world_scale=world_scale,
        report=report,
        observability=obs,
        iterations=iters,
        converged=converged,
        history=history)
