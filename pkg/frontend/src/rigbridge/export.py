"""Turn a capture manifest into a calibration archive."""

from __future__ import annotations

import shutil
import warnings
from typing import Dict, List, Optional, Tuple

import numpy as np

from .backend import ClassicalBackend, make_backend
from .errors import ExportFailure, InferenceFailure, InvalidManifest
from .manifest import CaptureManifest
from .writer import BridgeView, write_archive

try:
    import cv2
except ImportError:          # pragma: no cover
    cv2 = None

EXHAUSTIVE_LIMIT = 50


def _load_images(manifest: CaptureManifest):
    """Grayscale images keyed by view id; view ids are assigned in
    (camera, pose position) order, matching the robot pose indexing."""
    views = []   # (view_id, camera_id, pose_index, image)
    vid = 0
    for cam in sorted(manifest.images):
        for path, pidx in zip(manifest.images[cam],
                              manifest.pose_indices[cam]):
            img = cv2.imread(path, cv2.IMREAD_GRAYSCALE)
            if img is None:
                raise InvalidManifest(f"could not decode image: {path}")
            views.append((vid, cam, pidx, img))
            vid += 1
    return views


def _fuse_grids(grids: List[Tuple[float, np.ndarray]]) -> np.ndarray:
    """Merge a view's per-pair grids into one estimate.

    Pair reconstructions share the view's frame but have arbitrary
    scales; each extra grid is rescaled by the median depth ratio over
    pixels shared with the base before filling the base's holes
    (transferred points get half confidence)."""
    base = grids[0][1].copy()
    for _, g in grids[1:]:
        both = (base[..., 3] > 0) & (g[..., 3] > 0)
        if both.sum() < 5:
            continue
        ratio = float(np.median(base[both][:, 2] / g[both][:, 2]))
        fill = (base[..., 3] <= 0) & (g[..., 3] > 0)
        base[fill, :3] = g[fill, :3] * ratio
        base[fill, 3] = g[fill, 3] * 0.5
    return base


def _valid_at(grid: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    h, w = grid.shape[:2]
    u = np.rint(pixels[:, 0]).astype(int).clip(0, w - 1)
    v = np.rint(pixels[:, 1]).astype(int).clip(0, h - 1)
    return grid[v, u, 3] > 0


def _default_intrinsics(h: int, w: int, focal: Optional[float]):
    f = focal if focal else 1.2 * max(h, w)
    return float(f), float(f), (w - 1) / 2.0, (h - 1) / 2.0


def export(manifest: CaptureManifest, out_dir: str,
           model_id: str = "classical",
           focal: Optional[float] = None) -> Dict[str, int]:
    """Run pairwise reconstruction and write the archive to ``out_dir``.

    Returns a small summary dict (views, pairs tried/kept, matches).
    """
    backend = make_backend(model_id)
    views = _load_images(manifest)
    n = len(views)
    if n > EXHAUSTIVE_LIMIT:
        warnings.warn(f"{n} views: exhaustive pair scoring is quadratic; "
                      "consider splitting the capture")

    shapes = {img.shape for *_, img in views}
    if len(shapes) != 1:
        raise InvalidManifest(f"mixed image sizes: {sorted(shapes)}")
    h, w = next(iter(shapes))
    fx, fy, cx, cy = _default_intrinsics(h, w, focal)
    k_matrix = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])

    # exhaustive co-visibility scoring at desk scale
    counts = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            counts[i, j] = counts[j, i] = backend.match_count(
                views[i][3], views[j][3])
    scores = counts / max(counts.max(), 1.0)

    pair_results = {}
    tried = 0
    order = np.argsort(-counts[np.triu_indices(n, 1)])
    pairs = list(zip(*np.triu_indices(n, 1)))
    for idx in order:
        i, j = int(pairs[idx][0]), int(pairs[idx][1])
        if counts[i, j] <= 0:
            continue
        tried += 1
        try:
            pair_results[(i, j)] = backend.infer_pair(
                views[i][3], views[j][3], k_matrix)
        except InferenceFailure as exc:
            warnings.warn(f"pair ({i}, {j}) dropped: {exc}")
    if not pair_results:
        raise ExportFailure("no view pair could be reconstructed")

    # one pointmap estimate per view: its best-supported pair's grid,
    # densified with the other pairs' grids after per-view scale alignment
    per_view: Dict[int, List[Tuple[float, np.ndarray]]] = {}
    for (i, j), res in pair_results.items():
        support = float(res.weights.sum())
        per_view.setdefault(i, []).append((support, res.grid_a))
        per_view.setdefault(j, []).append((support, res.grid_b))
    missing = [v for v in range(n) if v not in per_view]
    if missing:
        raise ExportFailure(f"views {missing} appear in no usable pair")
    fused = {v: _fuse_grids(sorted(gs, key=lambda x: -x[0]))
             for v, gs in per_view.items()}

    # the engine requires every match pixel to be valid in its view's map
    match_blocks = {}
    for (i, j), res in pair_results.items():
        keep = (_valid_at(fused[i], res.pixels_a)
                & _valid_at(fused[j], res.pixels_b))
        if keep.sum() == 0:
            continue
        match_blocks[(i, j)] = np.hstack(
            [res.pixels_a[keep], res.pixels_b[keep],
             res.weights[keep][:, None]])
    if not match_blocks:
        raise ExportFailure("no matches survive pointmap validation")

    bridge_views = []
    for vid, cam, pidx, img in views:
        bridge_views.append(BridgeView(
            view_id=vid, camera_id=cam, pose_index=pidx,
            width=w, height=h, fx=fx, fy=fy, cx=cx, cy=cy,
            estimates=[fused[vid]]))
    write_archive(out_dir, bridge_views, match_blocks, scores)

    if manifest.poses_path:
        shutil.copyfile(manifest.poses_path,
                        f"{out_dir}/trajectory.txt")
    return {"views": n, "pairs_tried": tried,
            "pairs_kept": len(pair_results),
            "matches": int(sum(len(r.weights)
                               for r in pair_results.values()))}
