"""Accuracy metrics and point-cloud export.

Calibration error is measured as the mean translation distance and mean
rotation angle between estimated and reference camera-to-robot transforms.
Scale accuracy uses checkerboard corners lifted to metric 3D: the mean and
spread of adjacent-corner distances against the known square size.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (CorruptBinary, EmptyCloud, EmptyInput, InvalidConfig,
                     LengthMismatch, MalformedLine, NoDetections)
from .geometry import Intrinsics, RigidTransform, pixel_ray
from .pointmap import ViewRecord, nearest_valid_depth


@dataclass(frozen=True)
class CheckerboardSpec:
    rows: int
    cols: int
    square_size: float

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise InvalidConfig("checkerboard needs at least 2x2 corners")
        if self.square_size <= 0:
            raise InvalidConfig("square size must be positive")

    @property
    def count(self) -> int:
        return self.rows * self.cols


def calib_errors(estimated: Sequence[RigidTransform],
                 reference: Sequence[RigidTransform]) -> Tuple[float, float]:
    """Mean translation error (m) and mean rotation angle error (rad)."""
    if len(estimated) == 0:
        raise EmptyInput("no transforms to compare")
    if len(estimated) != len(reference):
        raise LengthMismatch(
            f"{len(estimated)} estimates vs {len(reference)} references")
    et = 0.0
    eth = 0.0
    for x, g in zip(estimated, reference):
        et += float(np.linalg.norm(x.translation - g.translation))
        eth += x.rotation.inverse().compose(g.rotation).angle()
    n = len(estimated)
    return et / n, eth / n


def lift_corners(view: ViewRecord, sigma_metric: float,
                 k: Intrinsics, pose_metric: RigidTransform) -> np.ndarray:
    """Lift detected checkerboard corners to metric 3D world points.

    Depth comes from the nearest valid pointmap pixel; the ray uses the
    sub-pixel corner location, matching how matches are back-projected.
    """
    if view.corners is None or len(view.corners) == 0:
        raise NoDetections(f"view {view.view_id} has no corner detections")
    z = nearest_valid_depth(view, view.corners) * sigma_metric
    rays = pixel_ray(view.corners, k)
    return pose_metric.apply(rays * z[:, None])


def adjacent_distances(corners_3d: np.ndarray,
                       board: CheckerboardSpec) -> np.ndarray:
    """Distances between horizontally and vertically adjacent corners."""
    grid = np.asarray(corners_3d, dtype=float).reshape(
        board.rows, board.cols, 3)
    horiz = np.linalg.norm(grid[:, 1:] - grid[:, :-1], axis=-1).ravel()
    vert = np.linalg.norm(grid[1:, :] - grid[:-1, :], axis=-1).ravel()
    return np.concatenate([horiz, vert])


def scale_accuracy(corner_sets: Sequence[np.ndarray],
                   board: CheckerboardSpec) -> Tuple[float, float, float]:
    """Pooled (mean, std, percent error) of adjacent-corner distances.

    ``corner_sets`` holds per-view arrays of the board's corners in metric
    3D, row-major. Percent error compares the mean against the true square
    size.
    """
    if len(corner_sets) == 0:
        raise NoDetections("no corner sets")
    dists = np.concatenate(
        [adjacent_distances(c, board) for c in corner_sets])
    m_s = float(dists.mean())
    sigma_s = float(dists.std())
    delta_s = abs(m_s - board.square_size) / board.square_size * 100.0
    return m_s, sigma_s, delta_s


# --- point-cloud file format ------------------------------------------------

_CLOUD_MAGIC = "format rigcal-cloud 1"


def write_cloud(path, points: np.ndarray) -> None:
    """Text header, then raw little-endian float32 xyz triples."""
    pts = np.asarray(points, dtype="<f4")
    if pts.size == 0:
        raise EmptyCloud("refusing to write an empty cloud")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise LengthMismatch(f"expected (N, 3) points, got {pts.shape}")
    with open(path, "wb") as f:
        f.write(f"{_CLOUD_MAGIC}\npoints {len(pts)}\nDATA\n".encode())
        f.write(pts.tobytes(order="C"))


def read_cloud(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    marker = b"DATA\n"
    cut = blob.find(marker)
    if cut < 0:
        raise MalformedLine("cloud file missing DATA marker")
    header = blob[:cut].decode(errors="replace").splitlines()
    if not header or header[0] != _CLOUD_MAGIC:
        raise MalformedLine("not a cloud file")
    n = None
    for line in header[1:]:
        fields = line.split()
        if len(fields) == 2 and fields[0] == "points":
            n = int(fields[1])
    if n is None:
        raise MalformedLine("cloud header missing point count")
    body = blob[cut + len(marker):]
    if len(body) != n * 12:
        raise CorruptBinary(
            f"cloud payload is {len(body)} bytes, expected {n * 12}")
    return np.frombuffer(body, dtype="<f4").reshape(n, 3).astype(float)


def scene_cloud(views: Sequence[ViewRecord],
                sigmas_metric: Sequence[float],
                intrinsics: Sequence[Intrinsics],
                poses_metric: Sequence[RigidTransform],
                stride: int = 1) -> np.ndarray:
    """Fuse all valid pointmap pixels into one metric world cloud."""
    if len(views) != len(sigmas_metric) or len(views) != len(poses_metric):
        raise LengthMismatch("views, sigmas, and poses must align")
    chunks = []
    for view, s, k, pose in zip(views, sigmas_metric, intrinsics,
                                poses_metric):
        pm = view.pointmap
        valid = pm.valid
        pts = pm.points[valid][::stride] * float(s)
        if len(pts):
            chunks.append(pose.apply(pts))
    if not chunks:
        raise EmptyCloud("no valid pixels in any view")
    return np.concatenate(chunks)
