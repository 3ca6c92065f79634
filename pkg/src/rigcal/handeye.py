"""Closed-form AX = XB solvers (Kronecker/SVD rotation, linear-LS
translation, optional metric-scale extension)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import DegenerateMotion, ZeroCameraTranslation
from .geometry import RigidTransform, Rotation

_AXIS_SPAN_TOL = 1e-3
_MIN_ANGLE = 1e-8


@dataclass
class MotionPairSet:
    """Paired relative motions (A_i robot, B_i camera)."""

    pairs: List[Tuple[RigidTransform, RigidTransform]]

    def __len__(self):
        return len(self.pairs)


def rotation_axes(pairs: MotionPairSet) -> np.ndarray:
    """Unit rotation axes of the A motions with non-negligible angle."""
    axes = []
    for a, _ in pairs.pairs:
        aa = a.rotation.axis_angle()
        theta = np.linalg.norm(aa)
        if theta > _MIN_ANGLE:
            axes.append(aa / theta)
    return np.array(axes).reshape(-1, 3)


def _check_axis_span(pairs: MotionPairSet):
    axes = rotation_axes(pairs)
    if len(axes) == 0:
        raise DegenerateMotion("no rotational motion in pair set")
    # need two axes separated by more than the span tolerance (sign-agnostic)
    for i in range(len(axes)):
        for j in range(i + 1, len(axes)):
            c = min(1.0, abs(float(axes[i] @ axes[j])))
            if np.arccos(c) > _AXIS_SPAN_TOL:
                return
    raise DegenerateMotion("rotation axes span fewer than two directions")


def unobservable_axis(pairs_or_rotations) -> Tuple[float, np.ndarray]:
    """Smallest singular value and direction of the stacked (R_A - I).

    A singular value near zero means the translation component of X along
    the returned axis is unconstrained by AX = XB.
    """
    if isinstance(pairs_or_rotations, MotionPairSet):
        rots = [a.rotation.as_matrix() for a, _ in pairs_or_rotations.pairs]
    else:
        rots = [r.as_matrix() if isinstance(r, Rotation) else np.asarray(r)
                for r in pairs_or_rotations]
    stacked = np.concatenate([r - np.eye(3) for r in rots], axis=0)
    _, svals, vt = np.linalg.svd(stacked)
    return float(svals[-1]), vt[-1]


def _solve_rotation(pairs: MotionPairSet) -> Rotation:
    if len(pairs) < 2:
        raise DegenerateMotion("need at least two motion pairs")
    _check_axis_span(pairs)
    blocks = []
    for a, b in pairs.pairs:
        ra = a.rotation.as_matrix()
        rb = b.rotation.as_matrix()
        # row-major vec: vec(Ra X) = (Ra kron I) x, vec(X Rb) = (I kron Rb^T) x
        blocks.append(np.kron(ra, np.eye(3)) - np.kron(np.eye(3), rb.T))
    m = np.concatenate(blocks, axis=0)
    _, _, vt = np.linalg.svd(m)
    rx = vt[-1].reshape(3, 3)
    # the null vector's sign is arbitrary; a rotation has positive determinant
    if np.linalg.det(rx) < 0:
        rx = -rx
    # nearest rotation: SVD projection with det sign fix
    u, _, vt2 = np.linalg.svd(rx)
    d = np.sign(np.linalg.det(u @ vt2))
    return Rotation.from_matrix(u @ np.diag([1.0, 1.0, d]) @ vt2)


def solve_rotation_translation(pairs: MotionPairSet) -> RigidTransform:
    """Closed-form X for AX = XB on metrically consistent motion pairs."""
    rot = _solve_rotation(pairs)
    rx = rot.as_matrix()
    rows, rhs = [], []
    for a, b in pairs.pairs:
        rows.append(a.rotation.as_matrix() - np.eye(3))
        rhs.append(rx @ b.translation - a.translation)
    t, *_ = np.linalg.lstsq(np.concatenate(rows), np.concatenate(rhs),
                            rcond=None)
    return RigidTransform(rot, t)


def solve_with_scale(pairs: MotionPairSet) -> Tuple[RigidTransform, float]:
    """Closed-form (X, lambda) where camera translations need metric scaling."""
    rot = _solve_rotation(pairs)
    rx = rot.as_matrix()
    if max(np.linalg.norm(b.translation) for _, b in pairs.pairs) <= 1e-6:
        raise ZeroCameraTranslation("camera motions carry no translation")
    rows, rhs = [], []
    for a, b in pairs.pairs:
        block = np.zeros((3, 4))
        block[:, :3] = a.rotation.as_matrix() - np.eye(3)
        block[:, 3] = -(rx @ b.translation)
        rows.append(block)
        rhs.append(-a.translation)
    sol, *_ = np.linalg.lstsq(np.concatenate(rows), np.concatenate(rhs),
                              rcond=None)
    lam = float(sol[3])
    t = sol[:3]
    if lam < 0:
        # a mirrored reconstruction scale; normalize the sign
        lam = -lam
    if lam <= 0:
        raise ZeroCameraTranslation("scale factor unobservable")
    return RigidTransform(rot, t), lam


def conjugation_residual(x: RigidTransform, pairs: MotionPairSet,
                         lam: float = 1.0) -> float:
    """max_i || A_i - X B_i(lam) X^{-1} ||_F over the pair set."""
    worst = 0.0
    for a, b in pairs.pairs:
        b_scaled = RigidTransform(b.rotation, lam * b.translation)
        diff = a.as_matrix() - (x @ b_scaled @ x.inverse()).as_matrix()
        worst = max(worst, float(np.linalg.norm(diff)))
    return worst
