"""Toy capture: a piecewise-planar textured scene rendered exactly via
homographies, with camera poses tied to a known robot trajectory."""

import os

import cv2
import numpy as np
import pytest

W, H = 320, 240
FOCAL = 300.0
CX, CY = (W - 1) / 2.0, (H - 1) / 2.0
K = np.array([[FOCAL, 0, CX], [0, FOCAL, CY], [0, 0, 1.0]])


def _rot(axis, angle):
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k_hat = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    return np.eye(3) + np.sin(angle) * k_hat + \
        (1 - np.cos(angle)) * (k_hat @ k_hat)


def robot_trajectory(n=5):
    """First pose identity, varied rotation axes and translations."""
    poses = [(np.eye(3), np.zeros(3))]
    axes = [(0.3, 1, 0.1), (1, 0.2, 0.3), (0.2, 0.4, 1), (1, -0.6, 0.4)]
    for i in range(1, n):
        r = _rot(axes[(i - 1) % len(axes)], 0.12 * i - 0.03)
        t = np.array([0.08 * i - 0.1, 0.05 * ((-1) ** i), 0.04 * i])
        poses.append((r, t))
    return poses


# camera mount (camera-to-robot): slight tilt, small offset
X_ROT = _rot((0.2, 1, 0.1), 0.1)
X_T = np.array([0.05, -0.03, 0.08])


def _texture(rng, size):
    tex = rng.integers(0, 255, size=(size, size)).astype(np.uint8)
    tex = cv2.GaussianBlur(tex, (0, 0), 1.2)
    return cv2.normalize(tex, None, 0, 255, cv2.NORM_MINMAX)


def _plane_homography(rot_wc, t_wc, z, span, tex_size):
    """Texture (u,v) -> image pixel for the plane z=const.

    Texture coords map linearly onto world x, y in [-span, span].
    """
    s = 2.0 * span / tex_size
    # world point of texel (u, v): (u*s - span, v*s - span, z)
    basis = np.array([[s, 0, -span], [0, s, -span], [0, 0, z]])
    cam = rot_wc @ basis
    cam[:, 2] += t_wc
    return K @ cam


def render_view(rot_cw, t_cw, far_tex, near_tex):
    """Far plane z=2.4 spanning the scene, near patch z=1.5 in front."""
    rot_wc = rot_cw.T
    t_wc = -rot_wc @ t_cw
    img = cv2.warpPerspective(
        far_tex, _plane_homography(rot_wc, t_wc, 2.4, 1.9, far_tex.shape[0]),
        (W, H), flags=cv2.INTER_LINEAR)
    near = cv2.warpPerspective(
        near_tex, _plane_homography(rot_wc, t_wc, 1.5, 0.55,
                                    near_tex.shape[0]),
        (W, H), flags=cv2.INTER_LINEAR)
    cover = cv2.warpPerspective(
        np.full(near_tex.shape, 255, np.uint8),
        _plane_homography(rot_wc, t_wc, 1.5, 0.55, near_tex.shape[0]),
        (W, H), flags=cv2.INTER_NEAREST)
    img[cover > 128] = near[cover > 128]
    return img


@pytest.fixture(scope="session")
def toy_capture(tmp_path_factory):
    """5-image single-camera capture + matching robot trajectory file."""
    root = tmp_path_factory.mktemp("toy")
    img_dir = root / "cam0"
    os.makedirs(img_dir)
    rng = np.random.default_rng(3)
    far_tex = _texture(rng, 1024)
    near_tex = _texture(rng, 512)
    poses = robot_trajectory(5)
    for i, (r, t) in enumerate(poses):
        rot_cw = r @ X_ROT
        t_cw = r @ X_T + t
        img = render_view(rot_cw, t_cw, far_tex, near_tex)
        cv2.imwrite(str(img_dir / f"img_{i:03d}.png"), img)
    traj_path = root / "trajectory.txt"
    lines = ["format rigcal-trajectory 1"]
    for i, (r, t) in enumerate(poses):
        m = np.hstack([r, t[:, None]])
        lines.append(" ".join([str(i)] + [repr(float(x))
                                          for x in m.ravel()]))
    traj_path.write_text("\n".join(lines) + "\n")
    return {"images": str(img_dir), "trajectory": str(traj_path),
            "root": root}
