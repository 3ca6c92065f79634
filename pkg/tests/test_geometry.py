"""Transform algebra, projection and tangent-map tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigcal.errors import (NearPiRotation, NonPositiveDepth,
                           NonPositiveScale)
from rigcal.geometry import (Intrinsics, RigidTransform, Rotation, Tangent6,
                             backproject, exp_map, log_map, pixel_ray,
                             project, rotation_angle, scaled_motion, skew)

K = Intrinsics(70.0, 70.0, 31.5, 23.5, 64, 48)


def _random_transform(seed, t_scale=1.0):
    return RigidTransform.random(np.random.default_rng(seed), t_scale)


# -- group axioms -----------------------------------------------------------

@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_associativity(seed):
    a = _random_transform(seed)
    b = _random_transform(seed + 1)
    c = _random_transform(seed + 2)
    lhs = ((a @ b) @ c).as_matrix()
    rhs = (a @ (b @ c)).as_matrix()
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_identity_and_inverse(seed):
    a = _random_transform(seed)
    eye = RigidTransform.identity()
    assert np.max(np.abs((a @ eye).as_matrix() - a.as_matrix())) <= 1e-9
    assert np.max(np.abs((eye @ a).as_matrix() - a.as_matrix())) <= 1e-9
    assert np.max(np.abs((a @ a.inverse()).as_matrix() - np.eye(4))) <= 1e-9
    assert np.max(np.abs((a.inverse() @ a).as_matrix() - np.eye(4))) <= 1e-9


def test_apply_matches_matrix_form(rng):
    a = RigidTransform.random(rng)
    pts = rng.normal(size=(17, 3))
    hom = np.concatenate([pts, np.ones((17, 1))], axis=1)
    expect = (a.as_matrix() @ hom.T).T[:, :3]
    assert np.allclose(a.apply(pts), expect, atol=1e-12)


# -- rotations --------------------------------------------------------------

def test_quaternion_sign_canonical():
    q = np.array([-0.5, 0.5, 0.5, 0.5])
    r = Rotation(q)
    assert r.quat[0] >= 0
    assert np.allclose(r.as_matrix(), Rotation(-q).as_matrix())


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_matrix_roundtrip(seed):
    r = Rotation.random(np.random.default_rng(seed))
    r2 = Rotation.from_matrix(r.as_matrix())
    assert np.max(np.abs(r.as_matrix() - r2.as_matrix())) <= 1e-12


def test_axis_angle_roundtrip(rng):
    for _ in range(50):
        w = rng.normal(size=3)
        w *= rng.uniform(0, 3.0) / max(np.linalg.norm(w), 1e-9)
        r = Rotation.from_axis_angle(w)
        assert np.allclose(r.axis_angle(), w, atol=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_rotation_angle_symmetry(seed):
    g = np.random.default_rng(seed)
    a, b = Rotation.random(g), Rotation.random(g)
    assert rotation_angle(a, b) == pytest.approx(rotation_angle(b, a),
                                                 abs=1e-12)


def test_skew_antisymmetric(rng):
    v = rng.normal(size=3)
    s = skew(v)
    assert np.allclose(s, -s.T)
    assert np.allclose(s @ v, 0.0)


# -- scaled motion ----------------------------------------------------------

@given(st.integers(0, 10_000),
       st.floats(0.1, 10.0), st.floats(0.1, 10.0))
@settings(max_examples=60, deadline=None)
def test_scaled_motion_composition(seed, la, lb):
    t = _random_transform(seed)
    lhs = scaled_motion(t, la * lb)
    rhs = scaled_motion(scaled_motion(t, la), lb)
    # two rounded multiplies vs one: equal to within a couple of ulps
    assert np.allclose(lhs.translation, rhs.translation, rtol=1e-15, atol=0)
    assert np.array_equal(lhs.rotation.quat, rhs.rotation.quat)


def test_scaled_motion_rejects_nonpositive():
    t = RigidTransform.identity()
    with pytest.raises(NonPositiveScale):
        scaled_motion(t, 0.0)
    with pytest.raises(NonPositiveScale):
        scaled_motion(t, -1.0)


# -- projection -------------------------------------------------------------

def test_project_backproject_roundtrip(rng):
    n = 10_000
    u = rng.uniform(0, K.width - 1, size=n)
    v = rng.uniform(0, K.height - 1, size=n)
    depth = rng.uniform(0.2, 8.0, size=n)
    pose = RigidTransform.random(rng)
    world = backproject(np.stack([u, v], axis=-1), depth, 1.0, K, pose)
    local = pose.inverse().apply(world)
    uv = project(local, K)
    err = np.max(np.abs(uv - np.stack([u, v], axis=-1)))
    assert err <= 1e-6


def test_project_rejects_nonpositive_depth():
    with pytest.raises(NonPositiveDepth):
        project(np.array([0.0, 0.0, -1.0]), K)
    with pytest.raises(NonPositiveDepth):
        project(np.array([0.0, 0.0, 0.0]), K)


def test_backproject_rejects_bad_scale():
    px = np.array([10.0, 10.0])
    with pytest.raises(NonPositiveDepth):
        backproject(px, -1.0, 1.0, K, RigidTransform.identity())
    with pytest.raises(NonPositiveScale):
        backproject(px, 1.0, 0.0, K, RigidTransform.identity())


def test_pixel_ray_unit_depth():
    r = pixel_ray(np.array([K.cx, K.cy]), K)
    assert np.allclose(r, [0.0, 0.0, 1.0])


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(-1.0, 70.0, 31.5, 23.5, 64, 48)
    with pytest.raises(ValueError):
        Intrinsics(70.0, 70.0, 100.0, 23.5, 64, 48)
    assert np.allclose(K.matrix()[0], [70.0, 0.0, 31.5])


# -- tangent maps -----------------------------------------------------------

@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_exp_log_roundtrip(seed):
    g = np.random.default_rng(seed)
    w = g.normal(size=3)
    w *= g.uniform(0, 2.9) / max(np.linalg.norm(w), 1e-9)
    xi = Tangent6(np.concatenate([w, g.normal(size=3)]))
    back = log_map(exp_map(xi))
    assert np.allclose(back.vec, xi.vec, atol=1e-9)


def test_log_map_near_pi_raises():
    r = Rotation.from_axis_angle(np.array([np.pi - 1e-9, 0.0, 0.0]))
    with pytest.raises(NearPiRotation):
        log_map(RigidTransform(r, np.zeros(3)))


def test_exp_map_small_angle():
    xi = Tangent6(np.array([1e-12, 0, 0, 0.5, -0.25, 1.0]))
    t = exp_map(xi)
    assert np.allclose(t.translation, [0.5, -0.25, 1.0], atol=1e-9)
    assert t.rotation.angle() <= 1e-9
