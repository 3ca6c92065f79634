"""Standalone writer for the calibration archive format.

This mirrors the archive format specification of the calibration engine
(``format rigcal-archive 1``) without importing it: a ``manifest.txt``
index plus raw little-endian float32 binaries, one file per channel.

Layout (all binaries row-major, C-contiguous):

- ``view_<id>_est<k>.f32`` — H x W x 4 float32: view-local x, y, z and
  confidence.
- ``view_<id>_mask.u8`` — H x W uint8 0/1 ground mask (optional).
- ``view_<id>_corners.f32`` — K x 2 float32 pixel coordinates (optional).
- ``matches_<a>_<b>.f32`` — K x 5 float32: pixel in view a (2), pixel in
  view b (2), confidence weight.
- ``scores.f32`` — n x n float32 symmetric co-visibility matrix in
  [0, 1], n = number of views.

Manifest lines: magic, optional ``board <rows> <cols> <square>``, one
``view <id> <cam> <pose> <w> <h> <fx> <fy> <cx> <cy> <n_est> <channels>``
per view (channels ``-`` or a comma list of ``mask`` / ``corners:<k>``),
``matches <a> <b> <k>`` per pair, and ``scores <n>``. Floats use Python
``repr`` so writing is deterministic and parsing is lossless.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

_MAGIC = "format rigcal-archive 1"


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class BridgeView:
    """One exported view: identity, intrinsics prior, and channel data."""

    view_id: int
    camera_id: int
    pose_index: int
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    estimates: List[np.ndarray] = field(default_factory=list)  # (H, W, 4)
    mask: Optional[np.ndarray] = None                          # (H, W)
    corners: Optional[np.ndarray] = None                       # (K, 2)


def write_archive(directory,
                  views: List[BridgeView],
                  matches: Dict[Tuple[int, int], np.ndarray],
                  scores: Optional[np.ndarray] = None,
                  board: Optional[Tuple[int, int, float]] = None) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = [_MAGIC]
    if board is not None:
        rows, cols, square = board
        lines.append(f"board {rows} {cols} {_fmt(square)}")
    for v in views:
        channels = []
        if v.mask is not None:
            channels.append("mask")
        if v.corners is not None:
            channels.append(f"corners:{len(v.corners)}")
        lines.append(
            f"view {v.view_id} {v.camera_id} {v.pose_index} "
            f"{v.width} {v.height} {_fmt(v.fx)} {_fmt(v.fy)} "
            f"{_fmt(v.cx)} {_fmt(v.cy)} {len(v.estimates)} "
            f"{','.join(channels) if channels else '-'}")
        for e, grid in enumerate(v.estimates):
            grid = np.asarray(grid)
            if grid.shape != (v.height, v.width, 4):
                raise ValueError(
                    f"view {v.view_id} estimate {e}: grid shape "
                    f"{grid.shape} != ({v.height}, {v.width}, 4)")
            with open(os.path.join(
                    directory, f"view_{v.view_id}_est{e}.f32"), "wb") as f:
                f.write(grid.astype("<f4").tobytes(order="C"))
        if v.mask is not None:
            with open(os.path.join(
                    directory, f"view_{v.view_id}_mask.u8"), "wb") as f:
                f.write(np.asarray(v.mask).astype(np.uint8)
                        .tobytes(order="C"))
        if v.corners is not None:
            with open(os.path.join(
                    directory, f"view_{v.view_id}_corners.f32"),
                    "wb") as f:
                f.write(np.asarray(v.corners).astype("<f4")
                        .tobytes(order="C"))
    for (a, b) in sorted(matches):
        block = np.asarray(matches[(a, b)])
        if block.ndim != 2 or block.shape[1] != 5:
            raise ValueError(f"matches {a} {b}: block must be (K, 5)")
        lines.append(f"matches {a} {b} {len(block)}")
        with open(os.path.join(directory, f"matches_{a}_{b}.f32"),
                  "wb") as f:
            f.write(block.astype("<f4").tobytes(order="C"))
    if scores is not None:
        scores = np.asarray(scores, dtype=float)
        n = len(views)
        if scores.shape != (n, n):
            raise ValueError(f"scores must be {n}x{n}")
        if np.max(np.abs(scores - scores.T)) > 1e-12:
            raise ValueError("scores must be symmetric")
        if scores.min() < 0 or scores.max() > 1:
            raise ValueError("scores must lie in [0, 1]")
        lines.append(f"scores {n}")
        with open(os.path.join(directory, "scores.f32"), "wb") as f:
            f.write(scores.astype("<f4").tobytes(order="C"))
    with open(os.path.join(directory, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
