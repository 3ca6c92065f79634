"""Loss-term tests against independent brute-force oracles plus gauge
invariance and finite-difference gradient checks."""

import dataclasses

import numpy as np
import pytest

from rigcal.errors import (EmptyInput, FirstPoseNotIdentity,
                           InsufficientPoses, PoseIndexMismatch)
from rigcal.geometry import (RigidTransform, Rotation, Tangent6, exp_map,
                             pixel_ray)
from rigcal.graph import SceneGraph
from rigcal.losses import (LossContext, LossWeights, ParameterBlock,
                           RobotTrajectory, RobustConfig, loss_cal,
                           loss_cross, total_loss)
from rigcal.optimizer import _apply_step
from rigcal.pointmap import nearest_valid_depth

_TINY = 1e-32


# -- trajectory validation --------------------------------------------------

def test_trajectory_validation(rng):
    with pytest.raises(EmptyInput):
        RobotTrajectory([])
    with pytest.raises(FirstPoseNotIdentity):
        RobotTrajectory([RigidTransform.random(rng)])
    traj = RobotTrajectory([RigidTransform.identity(),
                            RigidTransform.random(rng)])
    a = traj.relative_motion(0, 1)
    assert np.allclose(a.as_matrix(), traj.poses[1].as_matrix())


# -- brute-force oracle -----------------------------------------------------

def _norm(x):
    return float(np.sqrt(np.sum(np.asarray(x) ** 2) + _TINY))


def _brute_force(scene, traj, params, weights):
    """Plain-loop recomputation of every loss term."""
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    vidx = {vid: i for i, vid in enumerate(params.view_ids)}
    cams = params.camera_ids
    cidx = {c: j for j, c in enumerate(cams)}
    l3d = {c: 0.0 for c in cams}
    l2d = {c: 0.0 for c in cams}

    def world_point(view, pixel):
        i = vidx[view.view_id]
        z = nearest_valid_depth(view, np.asarray(pixel).reshape(1, 2))[0]
        k = params.intrinsics[cidx[view.camera_id]]
        p = params.sigmas[i] * z * pixel_ray(np.asarray(pixel, float), k)
        return params.poses[i].apply(p)

    for (a, b) in sorted(graph.edges):
        m = graph.edges[(a, b)]
        va, vb = graph.view(a), graph.view(b)
        owner = va.camera_id
        for k in range(len(m)):
            chi_a = world_point(va, m.pixels_a[k])
            chi_b = world_point(vb, m.pixels_b[k])
            q = m.weights[k]
            l3d[owner] += q * _norm(chi_a - chi_b)
            for view, pix, other in ((va, m.pixels_a[k], chi_b),
                                     (vb, m.pixels_b[k], chi_a)):
                i = vidx[view.view_id]
                local = params.poses[i].inverse().apply(other)
                if local[2] <= 1e-9:
                    continue
                kk = params.intrinsics[cidx[view.camera_id]]
                uv = np.array([kk.fx * local[0] / local[2] + kk.cx,
                               kk.fy * local[1] / local[2] + kk.cy])
                l2d[owner] += q * _norm(np.asarray(pix) - uv)

    lcal = {c: 0.0 for c in cams}
    for c in cams:
        entries = sorted((params.view_pose_indices[i], i)
                         for i in range(params.num_views)
                         if params.view_cameras[i] == c)
        x = params.extrinsics[cidx[c]]
        lam = params.lambdas[cidx[c]]
        for (i0, v0), (i1, v1) in zip(entries, entries[1:]):
            a = traj.relative_motion(i0, i1)
            b = params.poses[v0].inverse() @ params.poses[v1]
            rres = (a.rotation.as_matrix() @ x.rotation.as_matrix()
                    - x.rotation.as_matrix() @ b.rotation.as_matrix())
            tres = (a.rotation.as_matrix() @ x.translation + a.translation
                    - x.rotation.as_matrix() @ (lam * b.translation)
                    - x.translation)
            lcal[c] += float(np.sqrt(
                weights.w_rot * np.sum(rres ** 2)
                + weights.w_trans * np.sum(tres ** 2) + _TINY))

    lcross = {}
    by_cam = {c: {params.view_pose_indices[i]: i
                  for i in range(params.num_views)
                  if params.view_cameras[i] == c} for c in cams}
    for a_i, cn in enumerate(cams):
        for cm in cams[a_i + 1:]:
            common = sorted(set(by_cam[cn]) & set(by_cam[cm]))
            if len(common) < 2:
                continue
            xn = params.extrinsics[cidx[cn]]
            xm = params.extrinsics[cidx[cm]]
            z = xn.inverse() @ xm
            ln = params.lambdas[cidx[cn]]
            lm = params.lambdas[cidx[cm]]
            acc = 0.0
            for i0, i1 in zip(common, common[1:]):
                bn = (params.poses[by_cam[cn][i0]].inverse()
                      @ params.poses[by_cam[cn][i1]])
                bm = (params.poses[by_cam[cm][i0]].inverse()
                      @ params.poses[by_cam[cm][i1]])
                rres = (bn.rotation.as_matrix() @ z.rotation.as_matrix()
                        - z.rotation.as_matrix() @ bm.rotation.as_matrix())
                tres = (bn.rotation.as_matrix() @ z.translation
                        + ln * bn.translation
                        - z.rotation.as_matrix() @ (lm * bm.translation)
                        - z.translation)
                acc += float(np.sqrt(
                    weights.w_rot * np.sum(rres ** 2)
                    + weights.w_trans * np.sum(tres ** 2) + _TINY))
            lcross[(cn, cm)] = acc
    return l3d, l2d, lcal, lcross


def _perturbed(params, rng, scale=0.02):
    n = 6 * params.num_views + params.num_views \
        + 4 * len(params.camera_ids) + len(params.camera_ids) \
        + 6 * len(params.camera_ids)
    step = rng.normal(scale=scale, size=n)
    # keep intrinsics fixed: they are frozen by default in the solver
    v, m = params.num_views, len(params.camera_ids)
    step[7 * v:7 * v + 4 * m] = 0.0
    return _apply_step(params, step)


def test_terms_match_brute_force(arm_tiny, rng):
    scene, traj, gt = arm_tiny
    weights = LossWeights(w3d=1.3, w2d=0.7, wcal=2.0, wcross=1.1,
                          w_rot=0.9, w_trans=1.4)
    params = _perturbed(gt.parameter_block(), rng)
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    report = total_loss(graph, traj, params, weights)
    l3d, l2d, lcal, lcross = _brute_force(scene, traj, params, weights)
    for c in params.camera_ids:
        assert report.l3d[c] == pytest.approx(l3d[c], rel=1e-9, abs=1e-9)
        assert report.l2d[c] == pytest.approx(l2d[c], rel=1e-9, abs=1e-9)
        assert report.lcal[c] == pytest.approx(lcal[c], rel=1e-9, abs=1e-9)
    assert report.lcross == {} or all(
        report.lcross[k] == pytest.approx(lcross[k], rel=1e-9, abs=1e-9)
        for k in lcross)


def test_cross_term_matches_brute_force(mobile_tiny, rng):
    scene, traj, gt = mobile_tiny
    weights = LossWeights()
    params = _perturbed(gt.parameter_block(), rng)
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    report = total_loss(graph, traj, params, weights)
    _, _, _, lcross = _brute_force(scene, traj, params, weights)
    assert set(report.lcross) == set(lcross)
    for k in lcross:
        assert report.lcross[k] == pytest.approx(lcross[k], rel=1e-9,
                                                 abs=1e-9)


# -- bookkeeping and gauge invariances --------------------------------------

def test_total_is_sum_of_terms(mobile_tiny, rng):
    scene, traj, gt = mobile_tiny
    params = _perturbed(gt.parameter_block(), rng)
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    w = LossWeights(w3d=0.9, w2d=1.2, wcal=1.5, wcross=0.8)
    report = total_loss(graph, traj, params, w)
    manual = (w.w3d * sum(report.l3d.values())
              + w.w2d * sum(report.l2d.values())
              + w.wcal * sum(report.lcal.values())
              + w.wcross * sum(report.lcross.values()))
    assert report.total == pytest.approx(manual, rel=1e-12, abs=1e-9)
    assert all(v >= 0 for d in (report.l3d, report.l2d, report.lcal,
                                report.lcross) for v in d.values())


def test_left_multiplication_gauge(mobile_tiny, rng):
    """L_cal and L_cross see poses only through relative motions."""
    scene, traj, gt = mobile_tiny
    params = _perturbed(gt.parameter_block(), rng)
    g = RigidTransform.random(rng)
    moved = params.copy()
    target_cam = params.camera_ids[1]
    moved.poses = [g @ p if c == target_cam else p
                   for p, c in zip(params.poses, params.view_cameras)]
    ctx = LossContext(params, traj=traj)
    before, _ = ctx.evaluate(params)
    after, _ = ctx.evaluate(moved)
    for c in params.camera_ids:
        assert after.lcal[c] == pytest.approx(before.lcal[c], abs=1e-9)
    for k in before.lcross:
        assert after.lcross[k] == pytest.approx(before.lcross[k], abs=1e-9)


def test_scale_coupling_gauge(mobile_tiny, rng):
    """Scaling camera j's pose translations and sigmas by alpha while
    dividing lambda_j by alpha leaves L_cal unchanged."""
    scene, traj, gt = mobile_tiny
    params = _perturbed(gt.parameter_block(), rng)
    alpha = 1.7
    j = 1
    target_cam = params.camera_ids[j]
    moved = params.copy()
    moved.poses = [RigidTransform(p.rotation, alpha * p.translation)
                   if c == target_cam else p
                   for p, c in zip(params.poses, params.view_cameras)]
    moved.sigmas = np.array([
        s * alpha if c == target_cam else s
        for s, c in zip(params.sigmas, params.view_cameras)])
    moved.lambdas = params.lambdas.copy()
    moved.lambdas[j] /= alpha
    ctx = LossContext(params, traj=traj)
    before, _ = ctx.evaluate(params)
    after, _ = ctx.evaluate(moved)
    assert after.lcal[target_cam] == pytest.approx(
        before.lcal[target_cam], rel=1e-9, abs=1e-9)


def test_robust_off_equals_plain(arm_tiny, rng):
    scene, traj, gt = arm_tiny
    params = _perturbed(gt.parameter_block(), rng)
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    plain = total_loss(graph, traj, params)
    off = total_loss(graph, traj, params, robust=RobustConfig(enabled=False))
    assert plain.total == off.total


def test_robust_on_caps_large_residuals(arm_tiny, rng):
    scene, traj, gt = arm_tiny
    params = _perturbed(gt.parameter_block(), rng, scale=0.3)
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    plain = total_loss(graph, traj, params)
    rob = total_loss(graph, traj, params,
                     robust=RobustConfig(enabled=True))
    assert rob.total < plain.total


def test_loss_at_ground_truth_is_tiny(arm_board):
    scene, traj, gt = arm_board
    params = gt.parameter_block()
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    report = total_loss(graph, traj, params)
    assert report.total <= 1e-9


def test_single_term_errors(arm_tiny):
    scene, traj, gt = arm_tiny
    params = gt.parameter_block()
    with pytest.raises(PoseIndexMismatch):
        loss_cross(params, (0, 1))
    solo = params.copy()
    with pytest.raises(ValueError):
        loss_cal(traj, params, camera_j=99)
    short = RobotTrajectory([RigidTransform.identity()])
    with pytest.raises(PoseIndexMismatch):
        LossContext(params, traj=short)


def test_insufficient_poses_for_cal():
    from rigcal.geometry import Intrinsics
    from rigcal.pointmap import Pointmap, ViewRecord
    k = Intrinsics(50.0, 50.0, 15.5, 11.5, 32, 24)
    params = ParameterBlock(
        view_ids=[0], view_cameras=[0], view_pose_indices=[0],
        poses=[RigidTransform.identity()], sigmas=np.ones(1),
        intrinsics=[k], lambdas=np.ones(1),
        extrinsics=[RigidTransform.identity()])
    traj = RobotTrajectory([RigidTransform.identity()])
    with pytest.raises(InsufficientPoses):
        loss_cal(traj, params, camera_j=0)


# -- gradients --------------------------------------------------------------

def _fd_check(ctx, params, rng, n_coords=40):
    report, grad = ctx.evaluate(params, with_grad=True)
    flat = grad.flat()
    h = 1e-6
    idx = rng.choice(len(flat), size=min(n_coords, len(flat)), replace=False)
    for i in idx:
        e = np.zeros(len(flat))
        e[i] = h
        plus, _ = ctx.evaluate(_apply_step(params, e))
        minus, _ = ctx.evaluate(_apply_step(params, -e))
        fd = (plus.total - minus.total) / (2 * h)
        tol = max(1e-8, 1e-4 * abs(fd))
        assert abs(flat[i] - fd) <= tol, (i, flat[i], fd)


def test_gradient_matches_finite_differences(arm_tiny, rng):
    scene, traj, gt = arm_tiny
    params = _perturbed(gt.parameter_block(), rng)
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    ctx = LossContext(params, graph=graph, traj=traj)
    _fd_check(ctx, params, rng)


def test_gradient_matches_finite_differences_multicam(mobile_tiny, rng):
    scene, traj, gt = mobile_tiny
    params = _perturbed(gt.parameter_block(), rng)
    graph = SceneGraph(list(scene.views), dict(scene.matches))
    ctx = LossContext(params, graph=graph, traj=traj)
    _fd_check(ctx, params, rng)
