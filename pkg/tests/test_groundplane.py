"""RANSAC ground-plane fitting and height-recovery tests."""

import numpy as np
import pytest

from rigcal.errors import EmptyInput, InsufficientPoints, NoConsensus
from rigcal.geometry import RigidTransform, Rotation
from rigcal.groundplane import (PlaneModel, fit_plane, mean_camera_height,
                                recover_height)


def _plane_points(rng, normal, d, n=200, extent=3.0):
    normal = np.asarray(normal, float)
    normal = normal / np.linalg.norm(normal)
    # orthonormal basis of the plane
    helper = np.array([1.0, 0, 0])
    if abs(helper @ normal) > 0.9:
        helper = np.array([0, 1.0, 0])
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    ab = rng.uniform(-extent, extent, size=(n, 2))
    return d * normal + ab[:, :1] * e1 + ab[:, 1:] * e2


def test_fit_exact_plane(rng):
    pts = _plane_points(rng, [0.1, -0.2, 1.0], 0.7)
    model = fit_plane(pts, orient_toward=np.array([0.0, 0.0, 10.0]))
    assert np.max(model.distance(pts)) <= 1e-9
    assert model.height(np.array([0.0, 0.0, 10.0])) > 0


def test_fit_with_outliers(rng):
    good = _plane_points(rng, [0, 0, 1.0], 0.0, n=300)
    bad = rng.uniform(-3, 3, size=(60, 3)) + np.array([0, 0, 2.0])
    model = fit_plane(np.concatenate([good, bad]),
                      orient_toward=np.array([0.0, 0.0, 5.0]))
    assert np.max(model.distance(good)) <= 1e-6


def test_fit_plane_errors(rng):
    with pytest.raises(InsufficientPoints):
        fit_plane(np.zeros((2, 3)))
    scattered = rng.uniform(-5, 5, size=(200, 3))
    with pytest.raises(NoConsensus):
        fit_plane(scattered, threshold=0.01, min_inlier_frac=0.9)


def test_distances_preserved_under_rigid_motion(rng):
    pts = _plane_points(rng, [0.3, 0.1, 1.0], -0.4)
    extra = rng.normal(size=(50, 3))
    model = fit_plane(pts)
    g = RigidTransform(Rotation.random(rng), rng.normal(size=3))
    moved = fit_plane(g.apply(pts))
    d0 = model.distance(extra)
    d1 = moved.distance(g.apply(extra))
    assert np.max(np.abs(np.sort(d0) - np.sort(d1))) <= 1e-9


def test_height_sign_and_distance():
    model = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.0)
    assert model.height(np.array([1.0, 2.0, 0.5])) == pytest.approx(0.5)
    assert model.height(np.array([0.0, 0.0, -0.5])) == pytest.approx(-0.5)
    assert model.distance(np.array([[0.0, 0.0, -0.5]]))[0] == \
        pytest.approx(0.5)


def test_mean_height_ordering_invariant(rng):
    model = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.1)
    positions = [rng.normal(size=3) for _ in range(10)]
    a = mean_camera_height(model, positions)
    b = mean_camera_height(model, positions[::-1])
    assert a == pytest.approx(b, abs=1e-12)
    poses = [RigidTransform(Rotation.random(rng), p) for p in positions]
    assert recover_height(model, poses) == pytest.approx(a, abs=1e-12)


def test_mean_height_empty():
    model = PlaneModel(np.array([0.0, 0.0, 1.0]), 0.0)
    with pytest.raises(EmptyInput):
        mean_camera_height(model, [])
