"""Rigid-body transforms, pinhole projection and tangent-space maps.

Rotations are stored as unit quaternions (w, x, y, z) and renormalized on
construction. Transforms map points from their local frame into the parent
frame: p_parent = R @ p_local + t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NearPiRotation, NonPositiveDepth, NonPositiveScale

_EPS_DEPTH = 1e-9


def _quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    # fix the double-cover sign for reproducibility
    if q[0] < 0.0:
        q = -q
    return q


def _quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _matrix_to_quat(m):
    # Shepperd's method: pick the largest pivot for stability.
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return _quat_normalize(q)


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Rotation:
    """3D rotation stored as a unit quaternion (w, x, y, z)."""

    quat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "quat", _quat_normalize(self.quat))

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_matrix(m) -> "Rotation":
        r = Rotation(_matrix_to_quat(m))
        # keep the caller's exact entries when the matrix is orthonormal to
        # machine precision, so serialize -> parse round-trips bit-exactly
        m = np.array(m, dtype=float)
        if np.max(np.abs(m.T @ m - np.eye(3))) <= 1e-12:
            object.__setattr__(r, "_exact_matrix", m)
        return r

    @staticmethod
    def from_axis_angle(axis_angle) -> "Rotation":
        w = np.asarray(axis_angle, dtype=float)
        theta = np.linalg.norm(w)
        if theta < 1e-12:
            half = 0.5 * w
            return Rotation(np.concatenate(([1.0], half)))
        axis = w / theta
        return Rotation(np.concatenate(
            ([np.cos(theta / 2)], np.sin(theta / 2) * axis)))

    @staticmethod
    def random(rng: np.random.Generator) -> "Rotation":
        return Rotation(rng.normal(size=4))

    def as_matrix(self) -> np.ndarray:
        cached = getattr(self, "_exact_matrix", None)
        if cached is not None:
            return cached.copy()
        return _quat_to_matrix(self.quat)

    def compose(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.quat
        w2, x2, y2, z2 = other.quat
        return Rotation(np.array([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]))

    def inverse(self) -> "Rotation":
        w, x, y, z = self.quat
        return Rotation(np.array([w, -x, -y, -z]))

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.as_matrix().T

    def angle(self) -> float:
        # rotation angle in [0, pi]
        w = min(1.0, abs(self.quat[0]))
        return 2.0 * np.arccos(w)

    def axis_angle(self) -> np.ndarray:
        w = self.quat[0]
        v = self.quat[1:]
        s = np.linalg.norm(v)
        if s < 1e-12:
            return 2.0 * v
        theta = 2.0 * np.arctan2(s, w)
        return theta * v / s


def rotation_angle(r1: Rotation, r2: Rotation) -> float:
    """Geodesic angle between two rotations, angle(r1^T r2) in [0, pi]."""
    return r1.inverse().compose(r2).angle()


@dataclass(frozen=True)
class RigidTransform:
    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(Rotation.identity(), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return RigidTransform(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    @staticmethod
    def random(rng: np.random.Generator, t_scale: float = 1.0) -> "RigidTransform":
        return RigidTransform(Rotation.random(rng),
                              rng.normal(scale=t_scale, size=3))

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Result applies `other` first, then `self`."""
        return RigidTransform(
            self.rotation.compose(other.rotation),
            self.rotation.apply(other.translation) + self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rinv = self.rotation.inverse()
        return RigidTransform(rinv, -rinv.apply(self.translation))

    def apply(self, points):
        return self.rotation.apply(points) + self.translation


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def scaled_motion(t: RigidTransform, lam: float) -> RigidTransform:
    """Same rotation, translation multiplied by `lam` (must be > 0)."""
    if not lam > 0:
        raise NonPositiveScale(f"scale must be positive, got {lam}")
    return RigidTransform(t.rotation, lam * t.translation)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx],
                         [0, self.fy, self.cy],
                         [0, 0, 1.0]])


def project(point, k: Intrinsics):
    """Pinhole projection of camera-frame points, (..., 3) -> (..., 2)."""
    p = np.asarray(point, dtype=float)
    z = p[..., 2]
    if np.any(z <= _EPS_DEPTH):
        raise NonPositiveDepth("point behind camera")
    return np.stack([k.fx * p[..., 0] / z + k.cx,
                     k.fy * p[..., 1] / z + k.cy], axis=-1)


def pixel_ray(pixel, k: Intrinsics):
    """Unit-depth ray direction(s) through pixel(s), (..., 2) -> (..., 3)."""
    uv = np.asarray(pixel, dtype=float)
    return np.stack([(uv[..., 0] - k.cx) / k.fx,
                     (uv[..., 1] - k.cy) / k.fy,
                     np.ones_like(uv[..., 0])], axis=-1)


def backproject(pixel, depth, sigma, k: Intrinsics, pose: RigidTransform):
    """World-frame point(s) for pixel(s) at the given depth and scale."""
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise NonPositiveDepth("depth must be positive")
    if not sigma > 0:
        raise NonPositiveScale(f"sigma must be positive, got {sigma}")
    p_cam = sigma * depth[..., None] * pixel_ray(pixel, k)
    return pose.apply(p_cam)


@dataclass(frozen=True)
class Tangent6:
    """se(3) tangent vector: (omega[3] axis-angle rad, v[3] meters)."""

    vec: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        object.__setattr__(self, "vec",
                           np.asarray(self.vec, dtype=float).reshape(6))

    @property
    def omega(self):
        return self.vec[:3]

    @property
    def v(self):
        return self.vec[3:]


def _so3_left_jacobian(omega):
    theta = np.linalg.norm(omega)
    w = skew(omega)
    if theta < 1e-8:
        return np.eye(3) + 0.5 * w + w @ w / 6.0
    a = (1 - np.cos(theta)) / theta ** 2
    b = (theta - np.sin(theta)) / theta ** 3
    return np.eye(3) + a * w + b * (w @ w)


def exp_map(x: Tangent6) -> RigidTransform:
    omega = x.omega
    rot = Rotation.from_axis_angle(omega)
    t = _so3_left_jacobian(omega) @ x.v
    return RigidTransform(rot, t)


def log_map(t: RigidTransform) -> Tangent6:
    angle = t.rotation.angle()
    if angle >= np.pi - 1e-6:
        raise NearPiRotation(f"rotation angle {angle} too close to pi")
    omega = t.rotation.axis_angle()
    v = np.linalg.solve(_so3_left_jacobian(omega), t.translation)
    return Tangent6(np.concatenate([omega, v]))
