"""Classical two-view reconstruction backend.

Stands in for a learned pointmap model: SIFT features, ratio-test
matching, essential-matrix geometry, and triangulation produce sparse
pointmaps (valid at feature pixels, zero confidence elsewhere), pixel
correspondences with per-match confidences, and a pair score.  Each
pair's reconstruction is normalized to unit median depth in the first
view; the calibration engine estimates per-view scales itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InferenceFailure, ModelLoadFailure

try:
    import cv2
except ImportError:          # pragma: no cover - environment-dependent
    cv2 = None

MIN_PAIR_MATCHES = 12


@dataclass
class PairResult:
    """Two-view reconstruction of one image pair (a, b)."""

    grid_a: np.ndarray      # (H, W, 4) view-a-local xyz + confidence
    grid_b: np.ndarray      # (H, W, 4)
    pixels_a: np.ndarray    # (K, 2)
    pixels_b: np.ndarray    # (K, 2)
    weights: np.ndarray     # (K,) match confidence in [0, 1]


class ClassicalBackend:
    """Feature-based two-view reconstruction ("model id" ``classical``)."""

    name = "classical"

    def __init__(self, n_features: int = 4000):
        if cv2 is None:
            raise ModelLoadFailure("OpenCV is not available")
        try:
            self._sift = cv2.SIFT_create(nfeatures=n_features)
            self._matcher = cv2.BFMatcher(cv2.NORM_L2)
        except Exception as exc:   # pragma: no cover - cv build-dependent
            raise ModelLoadFailure(f"could not build SIFT: {exc}") from exc

    def _features(self, img):
        kp, desc = self._sift.detectAndCompute(img, None)
        if desc is None or len(kp) < 8:
            raise InferenceFailure("too few features")
        return kp, desc

    def match_count(self, img_a, img_b) -> int:
        """Cheap co-visibility proxy: number of ratio-test matches."""
        try:
            ka, da = self._features(img_a)
            kb, db = self._features(img_b)
        except InferenceFailure:
            return 0
        return len(self._ratio_matches(da, db))

    def _ratio_matches(self, da, db, ratio: float = 0.8):
        out = []
        for m in self._matcher.knnMatch(da, db, k=2):
            if len(m) == 2 and m[0].distance < ratio * m[1].distance:
                conf = 1.0 - m[0].distance / max(m[1].distance, 1e-12)
                out.append((m[0].queryIdx, m[0].trainIdx, conf))
        return out

    def infer_pair(self, img_a, img_b, k_matrix: np.ndarray) -> PairResult:
        """Reconstruct one pair; raises InferenceFailure when degenerate."""
        ka, da = self._features(img_a)
        kb, db = self._features(img_b)
        raw = self._ratio_matches(da, db)
        if len(raw) < MIN_PAIR_MATCHES:
            raise InferenceFailure(f"only {len(raw)} tentative matches")
        pa = np.array([ka[i].pt for i, _, _ in raw], dtype=np.float64)
        pb = np.array([kb[j].pt for _, j, _ in raw], dtype=np.float64)
        conf = np.array([c for _, _, c in raw], dtype=np.float64)

        e_mat, inl = cv2.findEssentialMat(
            pa, pb, k_matrix, method=cv2.RANSAC, prob=0.999, threshold=1.0)
        if e_mat is None or inl is None:
            raise InferenceFailure("essential matrix estimation failed")
        inl = inl.ravel().astype(bool)
        if inl.sum() < MIN_PAIR_MATCHES:
            raise InferenceFailure(f"only {int(inl.sum())} inliers")
        pa, pb, conf = pa[inl], pb[inl], conf[inl]

        n_pose, rot, t, pose_inl = cv2.recoverPose(e_mat, pa, pb, k_matrix)
        if n_pose < MIN_PAIR_MATCHES:
            raise InferenceFailure("cheirality check rejected the pair")
        keep = pose_inl.ravel() > 0
        pa, pb, conf = pa[keep], pb[keep], conf[keep]

        # triangulate in view a's frame; camera b at [rot | t]
        proj_a = k_matrix @ np.hstack([np.eye(3), np.zeros((3, 1))])
        proj_b = k_matrix @ np.hstack([rot, t.reshape(3, 1)])
        hom = cv2.triangulatePoints(proj_a, proj_b, pa.T, pb.T)
        pts_a = (hom[:3] / hom[3]).T
        pts_b = pts_a @ rot.T + t.reshape(1, 3)
        pos = (pts_a[:, 2] > 1e-6) & (pts_b[:, 2] > 1e-6)
        if pos.sum() < MIN_PAIR_MATCHES:
            raise InferenceFailure("triangulation left too few points")
        pa, pb, conf = pa[pos], pb[pos], conf[pos]
        pts_a, pts_b = pts_a[pos], pts_b[pos]
        scale = np.median(pts_a[:, 2])
        pts_a, pts_b = pts_a / scale, pts_b / scale

        h, w = img_a.shape[:2]
        grid_a = _sparse_grid(h, w, pa, pts_a, conf)
        grid_b = _sparse_grid(h, w, pb, pts_b, conf)
        return PairResult(grid_a, grid_b, pa, pb, conf)


def _sparse_grid(h: int, w: int, pixels, points, conf) -> np.ndarray:
    grid = np.zeros((h, w, 4), dtype=np.float32)
    for (u, v), p, c in zip(pixels, points, conf):
        r, col = int(round(v)), int(round(u))
        if 0 <= r < h and 0 <= col < w and c > grid[r, col, 3]:
            grid[r, col, :3] = p
            grid[r, col, 3] = c
    return grid


def make_backend(model_id: str = "classical") -> ClassicalBackend:
    if model_id != "classical":
        raise ModelLoadFailure(f"unknown model id {model_id!r}")
    return ClassicalBackend()
