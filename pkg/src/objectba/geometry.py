"""Rigid transforms, the pinhole camera, and projection derivatives.

Conventions:
  - Camera frame: x right, y down, z along the optical axis.
  - Global frame: x forward, y left, z up; yaw is rotation about global z.
  - Pixel coordinates are continuous with no half-pixel offset.
  - Pose increments for optimization are a left-multiplied axis-angle
    rotation update and an additive translation update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDepth

DEPTH_EPS = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def rotation_from_axis_angle(rvec) -> np.ndarray:
    """Rodrigues' formula; returns a 3x3 rotation matrix."""
    rvec = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-12:
        # First-order expansion keeps the constructor smooth near zero.
        return np.eye(3) + skew(rvec)
    axis = rvec / theta
    k = skew(axis)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rotation_about_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; maps points p -> R @ p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float)
        )
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, rvec, translation) -> "RigidTransform":
        return cls(rotation_from_axis_angle(rvec), np.asarray(translation, float))

    @classmethod
    def from_yaw(cls, yaw: float, translation) -> "RigidTransform":
        """Yaw-only rotation about the z axis."""
        return cls(rotation_about_z(yaw), np.asarray(translation, float))

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, float) + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def yaw(self) -> float:
        """Yaw angle about z, valid for z-rotation (gravity-aligned) poses."""
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    def retract(self, delta: np.ndarray) -> "RigidTransform":
        """Apply a 6-vector increment [dt(3), dtheta(3)].

        Translation is additive; rotation is left-multiplied:
        R <- exp([dtheta]x) @ R.
        """
        delta = np.asarray(delta, float)
        return RigidTransform(
            rotation_from_axis_angle(delta[3:6]) @ self.rotation,
            self.translation + delta[0:3],
        )

    def retract_yaw(self, delta: np.ndarray) -> "RigidTransform":
        """Apply a 4-vector increment [dt(3), dyaw].

        The yaw increment rotates about the body z axis (right-multiplied),
        which is the object's up axis for gravity-aligned objects.
        """
        delta = np.asarray(delta, float)
        return RigidTransform(
            self.rotation @ rotation_about_z(float(delta[3])),
            self.translation + delta[0:3],
        )


@dataclass(frozen=True)
class CameraFrame:
    """Per-timestamp intrinsics and camera-from-global extrinsic."""

    timestamp_index: int
    intrinsics: CameraIntrinsics
    extrinsic: RigidTransform

    def __post_init__(self):
        if self.timestamp_index < 0:
            raise ValueError("timestamp_index must be >= 0")


@dataclass(frozen=True)
class Point2:
    u: float
    v: float

    def array(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def project(pose: RigidTransform, point, k: CameraIntrinsics):
    """Pinhole projection of a point through a rigid pose.

    Returns ((u, v), depth). Raises NonPositiveDepth for points behind
    or on the camera plane.
    """
    p = point.array() if isinstance(point, Point3) else np.asarray(point, float)
    pc = pose.apply(p)
    z = pc[2]
    if z <= DEPTH_EPS:
        raise NonPositiveDepth(f"depth {z} <= {DEPTH_EPS}")
    u = k.fx * pc[0] / z + k.cx
    v = k.fy * pc[1] / z + k.cy
    return Point2(float(u), float(v)), float(z)


def inverse_project(
    pose: RigidTransform, pixel, k: CameraIntrinsics, depth: float
) -> Point3:
    """Lift a pixel at a known depth back through the pose's inverse.

    The result lives in the reference frame of the pose's inverse (the
    object or global frame), so project(pose, result, k) round-trips.
    """
    if depth <= 0:
        raise NonPositiveDepth(f"depth {depth} <= 0")
    px = pixel.array() if isinstance(pixel, Point2) else np.asarray(pixel, float)
    pc = np.array(
        [(px[0] - k.cx) * depth / k.fx, (px[1] - k.cy) * depth / k.fy, depth]
    )
    p = pose.inverse().apply(pc)
    return Point3(float(p[0]), float(p[1]), float(p[2]))


def projection_jacobian(
    pose: RigidTransform, point, k: CameraIntrinsics
) -> np.ndarray:
    """2x9 Jacobian of the projected pixel: [2x6 pose | 2x3 point].

    Pose columns follow the retract() parameterization: translation first,
    then left-multiplied axis-angle rotation. Point columns are w.r.t. the
    point coordinates in the pose's source frame.
    """
    p = point.array() if isinstance(point, Point3) else np.asarray(point, float)
    pc = pose.apply(p)
    z = pc[2]
    if z <= DEPTH_EPS:
        raise NonPositiveDepth(f"depth {z} <= {DEPTH_EPS}")
    # d(u,v)/d(camera point)
    duv_dpc = np.array(
        [
            [k.fx / z, 0.0, -k.fx * pc[0] / (z * z)],
            [0.0, k.fy / z, -k.fy * pc[1] / (z * z)],
        ]
    )
    # Camera point pc(delta) = exp([dtheta]x) @ (R p) + t + dt.
    dpc_dt = np.eye(3)
    dpc_dtheta = -skew(pose.rotation @ p)
    dpc_dp = pose.rotation
    jac = np.empty((2, 9))
    jac[:, 0:3] = duv_dpc @ dpc_dt
    jac[:, 3:6] = duv_dpc @ dpc_dtheta
    jac[:, 6:9] = duv_dpc @ dpc_dp
    return jac


def projection_jacobian_yaw(
    pose: RigidTransform, point, k: CameraIntrinsics
) -> np.ndarray:
    """2x7 Jacobian for the yaw-only (4-DoF) pose mode: [2x4 pose | 2x3 point].

    Pose columns follow retract_yaw(): translation then body-z yaw.
    """
    p = point.array() if isinstance(point, Point3) else np.asarray(point, float)
    pc = pose.apply(p)
    z = pc[2]
    if z <= DEPTH_EPS:
        raise NonPositiveDepth(f"depth {z} <= {DEPTH_EPS}")
    duv_dpc = np.array(
        [
            [k.fx / z, 0.0, -k.fx * pc[0] / (z * z)],
            [0.0, k.fy / z, -k.fy * pc[1] / (z * z)],
        ]
    )
    dpc_dyaw = pose.rotation @ np.array([-p[1], p[0], 0.0])
    jac = np.empty((2, 7))
    jac[:, 0:3] = duv_dpc
    jac[:, 3] = duv_dpc @ dpc_dyaw
    jac[:, 4:7] = duv_dpc @ pose.rotation
    return jac


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = (a + np.pi) % (2.0 * np.pi) - np.pi
    if a == -np.pi:
        a = np.pi
    return float(a)
