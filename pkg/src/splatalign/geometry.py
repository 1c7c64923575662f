"""Similarity transforms, pinhole cameras, and rotation distances.

Conventions used everywhere in this package:

- A ``Sim3Transform`` acts on points as ``p' = exp(log_scale) * R @ p + translation``,
  i.e. the stored translation is the post-scale offset.
- Tangent vectors are ordered ``(rho, omega, log_scale)``. The rigid block follows
  the SE(3) exponential map; the scale factor is applied outside the rigid part,
  so ``exp((rho, 0, lam))`` maps the origin to ``exp(lam) * rho``.
- Cameras store world-to-camera rigid poses: ``x_cam = R @ x_world + t``, with the
  camera looking down +z (COLMAP convention). Pixel coordinates place (0, 0) at the
  center of the top-left pixel.

All values are immutable after construction and every operation is a pure
function, so they can be shared freely between workers.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import RotationNearPi
from .validation import as_float_array, check_rotation

# Near plane keeping low floaters out of frame; distances in scene units.
DEFAULT_NEAR_PLANE = 0.7

# Below this angle the trigonometric exp/log coefficients switch to Taylor series.
_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector (hat operator)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(omega) -> np.ndarray:
    """Axis-angle vector to rotation matrix (exponential map on SO(3))."""
    omega = np.asarray(omega, dtype=float).reshape(3)
    theta2 = float(omega @ omega)
    W = skew(omega)
    if theta2 < _SMALL_ANGLE**2:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to axis-angle vector; rejects rotations near 180 degrees."""
    tr = float(np.trace(R))
    if tr <= -1.0 + 1e-7:
        raise RotationNearPi(f"rotation angle too close to pi (trace = {tr:.9f})")
    cos_theta = min(1.0, max(-1.0, 0.5 * (tr - 1.0)))
    theta = math.acos(cos_theta)
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < _SMALL_ANGLE:
        return v * (1.0 + theta * theta / 6.0)
    return v * (theta / math.sin(theta))


def _se3_v(omega: np.ndarray) -> np.ndarray:
    """Left Jacobian V of the SE(3) exponential: t = V @ rho."""
    theta2 = float(omega @ omega)
    W = skew(omega)
    if theta2 < _SMALL_ANGLE**2:
        b = 0.5 - theta2 / 24.0
        c = 1.0 / 6.0 - theta2 / 120.0
    else:
        theta = math.sqrt(theta2)
        b = (1.0 - math.cos(theta)) / theta2
        c = (theta - math.sin(theta)) / (theta2 * theta)
    return np.eye(3) + b * W + c * (W @ W)


def _se3_v_inv(omega: np.ndarray) -> np.ndarray:
    theta2 = float(omega @ omega)
    W = skew(omega)
    if theta2 < _SMALL_ANGLE**2:
        coef = 1.0 / 12.0 + theta2 / 720.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
        coef = (1.0 - a / (2.0 * b)) / theta2
    return np.eye(3) - 0.5 * W + coef * (W @ W)


@dataclasses.dataclass(frozen=True)
class Tangent7:
    """Tangent coordinates of a similarity transform.

    ``rho`` is the translational block (scene units), ``omega`` the rotational
    block (radians, axis-angle), ``log_scale`` the scale block. ``log_sim3``
    always returns ``||omega|| < pi``.
    """

    rho: np.ndarray
    omega: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        rho = as_float_array(self.rho, (3,), "rho")
        omega = as_float_array(self.omega, (3,), "omega")
        rho.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "log_scale", float(self.log_scale))

    @staticmethod
    def zero() -> "Tangent7":
        return Tangent7(np.zeros(3), np.zeros(3), 0.0)

    @staticmethod
    def from_vector(v) -> "Tangent7":
        v = as_float_array(v, (7,), "tangent vector")
        return Tangent7(v[:3], v[3:6], float(v[6]))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rho, self.omega, [self.log_scale]])

    def __neg__(self) -> "Tangent7":
        return Tangent7(-self.rho, -self.omega, -self.log_scale)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_vector()))


@dataclasses.dataclass(frozen=True)
class Sim3Transform:
    """Global similarity transform: ``p' = exp(log_scale) * rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        R = as_float_array(self.rotation, (3, 3), "rotation")
        t = as_float_array(self.translation, (3,), "translation")
        check_rotation(R, "Sim3Transform.rotation", tol=1e-8)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "log_scale", float(self.log_scale))

    @staticmethod
    def identity() -> "Sim3Transform":
        return Sim3Transform(np.eye(3), np.zeros(3), 0.0)

    @property
    def scale(self) -> float:
        return math.exp(self.log_scale)

    def apply(self, points) -> np.ndarray:
        """Map one point (3,) or a stack of points (..., 3)."""
        p = np.asarray(points, dtype=float)
        return self.scale * (p @ self.rotation.T) + self.translation

    def inverse(self) -> "Sim3Transform":
        inv_scale = math.exp(-self.log_scale)
        return Sim3Transform(
            self.rotation.T,
            -inv_scale * (self.rotation.T @ self.translation),
            -self.log_scale,
        )

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form (scale folded into the linear block)."""
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m


def exp_sim3(xi: Tangent7) -> Sim3Transform:
    """Exponential map: rigid SE(3) block first, then the scale factor outside.

    ``exp(0)`` is the identity. The stored translation absorbs the scale so the
    action stays ``p' = s * (R @ p + V @ rho)``.
    """
    R = rodrigues(xi.omega)
    t_rigid = _se3_v(xi.omega) @ xi.rho
    s = math.exp(xi.log_scale)
    return Sim3Transform(R, s * t_rigid, xi.log_scale)


def log_sim3(transform: Sim3Transform) -> Tangent7:
    """Inverse of :func:`exp_sim3`; raises RotationNearPi near the 180 degree cut."""
    omega = so3_log(transform.rotation)
    u = transform.translation * math.exp(-transform.log_scale)
    rho = _se3_v_inv(omega) @ u
    return Tangent7(rho, omega, transform.log_scale)


def compose(a: Sim3Transform, b: Sim3Transform) -> Sim3Transform:
    """Transform applying ``b`` first, then ``a``; scales multiply."""
    return Sim3Transform(
        a.rotation @ b.rotation,
        a.scale * (a.rotation @ b.translation) + a.translation,
        a.log_scale + b.log_scale,
    )


@dataclasses.dataclass(frozen=True)
class Camera:
    """Pinhole camera with a world-to-camera rigid pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray
    near_plane: float = DEFAULT_NEAR_PLANE

    def __post_init__(self):
        R = as_float_array(self.rotation, (3, 3), "camera rotation")
        t = as_float_array(self.translation, (3,), "camera translation")
        check_rotation(R, "Camera.rotation", tol=1e-8)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.near_plane <= 0:
            raise ValueError(f"near_plane must be positive, got {self.near_plane}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


def project_point(cam: Camera, points) -> np.ndarray:
    """Pinhole projection of world points to pixel coordinates (..., 2).

    The caller is responsible for points being in front of the camera.
    """
    p = np.asarray(points, dtype=float)
    x = p @ cam.rotation.T + cam.translation
    z = x[..., 2]
    u = cam.fx * x[..., 0] / z + cam.cx
    v = cam.fy * x[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def transform_camera(transform: Sim3Transform, cam: Camera) -> Camera:
    """Camera that views ``transform``-mapped points the way ``cam`` views the originals.

    Satisfies ``project(cam', T(p)) == project(cam, p)``; the new center is
    ``T(C)`` and viewing directions rotate with T. Intrinsics and the near
    plane are unchanged (scale does not touch pixels).
    """
    R_new = cam.rotation @ transform.rotation.T
    t_new = transform.scale * cam.translation - R_new @ transform.translation
    return Camera(
        fx=cam.fx,
        fy=cam.fy,
        cx=cam.cx,
        cy=cam.cy,
        width=cam.width,
        height=cam.height,
        rotation=R_new,
        translation=t_new,
        near_plane=cam.near_plane,
    )


def geodesic_angle_deg(rot_a: np.ndarray, rot_b: np.ndarray) -> float:
    """Geodesic distance between two rotations, in degrees in [0, 180]."""
    c = 0.5 * (float(np.trace(rot_a.T @ rot_b)) - 1.0)
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


# Quaternion and Euler helpers (quaternions appear only in scene files).


def quat_to_rotmat(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to rotation matrix. Normalizes its input."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * w * z, 2 * x * z + 2 * w * y],
            [2 * x * y + 2 * w * z, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * w * x],
            [2 * x * z - 2 * w * y, 2 * y * z + 2 * w * x, 1 - 2 * x * x - 2 * y * y],
        ]
    )


def rotmat_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 0.5 / math.sqrt(tr + 1.0)
        q = np.array([0.25 / s, (R[2, 1] - R[1, 2]) * s, (R[0, 2] - R[2, 0]) * s, (R[1, 0] - R[0, 1]) * s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def euler_xyz_to_rotmat(ax: float, ay: float, az: float) -> np.ndarray:
    """R = Rz(az) @ Ry(ay) @ Rx(ax), angles in radians."""
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=float)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=float)
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=float)
    return rz @ ry @ rx


def rotmat_to_euler_xyz(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_xyz_to_rotmat`; valid away from ay = +-90 degrees."""
    ay = math.asin(min(1.0, max(-1.0, -R[2, 0])))
    ax = math.atan2(R[2, 1], R[2, 2])
    az = math.atan2(R[1, 0], R[0, 0])
    return ax, ay, az


def look_at_camera(
    center,
    target,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
    up=(0.0, 0.0, 1.0),
    near_plane: float = DEFAULT_NEAR_PLANE,
) -> Camera:
    """Camera at ``center`` looking toward ``target`` (+z forward, COLMAP convention)."""
    center = np.asarray(center, dtype=float)
    forward = np.asarray(target, dtype=float) - center
    fn = np.linalg.norm(forward)
    if fn < 1e-12:
        raise ValueError("camera center and target coincide")
    z = forward / fn
    up = np.asarray(up, dtype=float)
    x = np.cross(up, z)
    xn = np.linalg.norm(x)
    if xn < 1e-9:
        # Looking straight along the up axis; pick an arbitrary horizontal right.
        x = np.cross(np.array([0.0, 1.0, 0.0]), z)
        xn = np.linalg.norm(x)
    x = x / xn
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=0)
    return Camera(
        fx=fx,
        fy=fy,
        cx=cx,
        cy=cy,
        width=width,
        height=height,
        rotation=R,
        translation=-R @ center,
        near_plane=near_plane,
    )
