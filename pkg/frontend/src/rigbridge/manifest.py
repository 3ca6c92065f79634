"""Capture manifest: which images belong to which camera and robot pose."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import InvalidManifest

_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass
class CaptureManifest:
    """Ordered image paths per camera plus the camera-to-pose mapping.

    ``pose_indices[cam][i]`` is the robot-pose index of ``images[cam][i]``.
    Every camera must cover the same set of pose indices, and every image
    must be a readable file.
    """

    images: Dict[int, List[str]]
    pose_indices: Dict[int, List[int]] = field(default_factory=dict)
    poses_path: Optional[str] = None

    def __post_init__(self):
        if not self.images:
            raise InvalidManifest("no cameras in manifest")
        if not self.pose_indices:
            self.pose_indices = {c: list(range(len(paths)))
                                 for c, paths in self.images.items()}
        coverage = None
        for cam, paths in self.images.items():
            idx = self.pose_indices.get(cam)
            if idx is None or len(idx) != len(paths):
                raise InvalidManifest(
                    f"camera {cam}: pose indices do not match image count")
            if len(set(idx)) != len(idx):
                raise InvalidManifest(
                    f"camera {cam}: duplicate pose indices")
            if coverage is None:
                coverage = set(idx)
            elif set(idx) != coverage:
                raise InvalidManifest(
                    "cameras cover different pose-index sets")
            for p in paths:
                if not os.path.isfile(p):
                    raise InvalidManifest(f"image not readable: {p}")
        if len(next(iter(self.images.values()))) < 2:
            raise InvalidManifest("need at least 2 images per camera")

    @property
    def n_views(self) -> int:
        return sum(len(p) for p in self.images.values())


def from_directories(dirs: List[str],
                     poses_path: Optional[str] = None) -> CaptureManifest:
    """One directory per camera; images sorted by filename, pose index by
    position in that order."""
    images = {}
    for cam, d in enumerate(dirs):
        if not os.path.isdir(d):
            raise InvalidManifest(f"not a directory: {d}")
        paths = sorted(
            os.path.join(d, f) for f in os.listdir(d)
            if os.path.splitext(f)[1].lower() in _IMAGE_EXTS)
        images[cam] = paths
    return CaptureManifest(images=images, poses_path=poses_path)
