"""Dense pointmaps, pixel correspondences and the canonical/constrained
pointmap constructions.

Pixels with confidence 0 are "invalid": their stored point value is
unspecified and must never be read by a loss. Match coordinates are float
pixels; validity and depth lookups use the nearest integer pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyEstimates, InvalidMatchedPixel, NonPositiveScale
from .geometry import Intrinsics, RigidTransform, pixel_ray


@dataclass
class Pointmap:
    """H x W grid of view-local 3D points with per-pixel confidence."""

    points: np.ndarray      # (H, W, 3) meters, view-local frame
    confidence: np.ndarray  # (H, W) non-negative

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.points.shape[:2] != self.confidence.shape:
            raise ValueError("points/confidence grid shapes differ")
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ValueError("points must be (H, W, 3)")
        if np.any(self.confidence < 0):
            raise ValueError("confidence must be non-negative")
        if not np.any(self.confidence > 0):
            raise ValueError("pointmap has no valid pixel")

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return self.confidence > 0


@dataclass
class MatchSet:
    """Pixel correspondences for one ordered view pair (a, b), a < b."""

    edge: tuple
    pixels_a: np.ndarray  # (K, 2) float pixel coords in view a
    pixels_b: np.ndarray  # (K, 2)
    weights: np.ndarray   # (K,) q_p >= 0

    def __post_init__(self):
        self.pixels_a = np.asarray(self.pixels_a, dtype=np.float64).reshape(-1, 2)
        self.pixels_b = np.asarray(self.pixels_b, dtype=np.float64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (len(self.pixels_a) == len(self.pixels_b) == len(self.weights)):
            raise ValueError("match arrays must have equal length")
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("match weights must be finite and >= 0")

    def __len__(self):
        return len(self.weights)


@dataclass
class ViewRecord:
    """One captured view: (camera, robot-pose index) plus its canonical map."""

    view_id: int
    camera_id: int
    pose_index: int
    pointmap: Pointmap
    intrinsics_prior: Optional[Intrinsics] = None
    ground_mask: Optional[np.ndarray] = None   # (H, W) bool, floor pixels
    corners: Optional[np.ndarray] = None       # (rows*cols, 2) detected pixels


def canonical_pointmap(estimates: Sequence[Pointmap]) -> Pointmap:
    """Confidence-weighted per-pixel average of pointmap estimates.

    Output confidence is the per-pixel sum of input confidences; pixels with
    zero total confidence come out invalid.
    """
    if len(estimates) == 0:
        raise EmptyEstimates("need at least one pointmap estimate")
    shape = estimates[0].points.shape
    for e in estimates:
        if e.points.shape != shape:
            raise ValueError("estimate grids must share dimensions")
    csum = np.zeros(shape[:2])
    acc = np.zeros(shape)
    for e in estimates:
        acc += e.confidence[..., None] * e.points
        csum += e.confidence
    points = np.zeros(shape)
    valid = csum > 0
    points[valid] = acc[valid] / csum[valid][:, None]
    return Pointmap(points, csum)


def depth_of(view: ViewRecord) -> np.ndarray:
    """z-channel of the canonical pointmap; invalid pixels become NaN."""
    z = view.pointmap.points[..., 2].copy()
    z[~view.pointmap.valid] = np.nan
    return z


def constrained_pointmap(view: ViewRecord, sigma: float, k: Intrinsics,
                         pose: RigidTransform) -> Pointmap:
    """World-frame pointmap that exactly satisfies the pinhole model of k."""
    if not sigma > 0:
        raise NonPositiveScale(f"sigma must be positive, got {sigma}")
    h, w = view.pointmap.points.shape[:2]
    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    rays = pixel_ray(np.stack([uu, vv], axis=-1), k)
    z = view.pointmap.points[..., 2]
    p_cam = sigma * z[..., None] * rays
    points = p_cam @ pose.rotation.as_matrix().T + pose.translation
    points[~view.pointmap.valid] = 0.0
    return Pointmap(points, view.pointmap.confidence.copy())


def nearest_valid_depth(view: ViewRecord, pixels: np.ndarray) -> np.ndarray:
    """Depth at the nearest integer pixel of each float pixel coordinate.

    Raises InvalidMatchedPixel if any nearest pixel is out of bounds or has
    zero confidence.
    """
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    u = np.rint(px[:, 0]).astype(int)
    v = np.rint(px[:, 1]).astype(int)
    h, w = view.pointmap.confidence.shape
    if np.any((u < 0) | (u >= w) | (v < 0) | (v >= h)):
        raise InvalidMatchedPixel(
            f"match pixel outside image bounds of view {view.view_id}")
    conf = view.pointmap.confidence[v, u]
    if np.any(conf <= 0):
        raise InvalidMatchedPixel(
            f"match references an invalid pixel of view {view.view_id}")
    return view.pointmap.points[v, u, 2]


def local_points_at(view: ViewRecord, pixels: np.ndarray,
                    k: Intrinsics) -> np.ndarray:
    """View-local 3D points for float pixels: nearest-pixel depth on the
    exact pixel ray (sigma = 1)."""
    z = nearest_valid_depth(view, pixels)
    return z[:, None] * pixel_ray(np.asarray(pixels, dtype=float), k)
