"""Ground-plane fitting and height recovery.

Planar trajectories leave the camera mounting height unconstrained; it is
recovered afterwards from ground-labelled pointmap pixels: fit a plane by
RANSAC, then average the signed camera heights above it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, InsufficientPoints, NoConsensus
from .geometry import RigidTransform


@dataclass(frozen=True)
class PlaneModel:
    """Plane n . x = d with unit normal."""

    normal: np.ndarray
    d: float

    def distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.abs(pts @ self.normal - self.d)

    def height(self, point: np.ndarray) -> float:
        """Signed height of a point above the plane (along the normal)."""
        return float(np.asarray(point, dtype=float) @ self.normal - self.d)


def _fit_svd(points: np.ndarray) -> PlaneModel:
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid)
    n = vt[-1]
    return PlaneModel(n, float(n @ centroid))


def fit_plane(points: np.ndarray,
              iterations: int = 500,
              threshold: float = 0.01,
              seed: int = 0,
              orient_toward: Optional[np.ndarray] = None,
              min_inlier_frac: float = 0.0) -> PlaneModel:
    """RANSAC plane fit with a least-squares refit on the consensus set.

    ``orient_toward`` flips the normal so that point ends up on the
    positive side (e.g. the cameras, to make heights positive).
    ``min_inlier_frac`` rejects a consensus set smaller than that fraction
    of the input; used when fitting unlabelled clouds, where a small
    consensus likely found some other planar surface.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise InsufficientPoints(f"plane fit needs >= 3 points, got {len(pts)}")
    rng = np.random.default_rng(seed)
    best_count = 0
    best_inliers = None
    for _ in range(iterations):
        i, j, l = rng.choice(len(pts), 3, replace=False)
        n = np.cross(pts[j] - pts[i], pts[l] - pts[i])
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            continue
        n = n / norm
        dist = np.abs((pts - pts[i]) @ n)
        inliers = dist <= threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None or best_count < 3 \
            or best_count < min_inlier_frac * len(pts):
        raise NoConsensus("no plane consensus found")
    model = _fit_svd(pts[best_inliers])
    if orient_toward is not None and model.height(orient_toward) < 0:
        model = PlaneModel(-model.normal, -model.d)
    return model


def mean_camera_height(plane: PlaneModel,
                       camera_positions: Sequence[np.ndarray]) -> float:
    """Average signed height of camera centers above the ground plane."""
    if len(camera_positions) == 0:
        raise EmptyInput("no camera positions")
    return float(np.mean([plane.height(p) for p in camera_positions]))


def recover_height(plane: PlaneModel,
                   poses_metric: Sequence[RigidTransform]) -> float:
    return mean_camera_height(plane, [p.translation for p in poses_metric])
