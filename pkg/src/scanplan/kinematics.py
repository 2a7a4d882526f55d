"""Frame chain for a body-mounted rotating range sensor.

World <- body <- motor base <- motor <- sensor.  The motor stage adds a
time-varying rotation about the motor-base z axis; everything else is a
constant extrinsic or the vehicle pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

_ROTATION_TOL = 1e-9


def wrap_angle(theta):
    """Wrap angles into [0, 2*pi)."""
    return np.mod(theta, TWO_PI)


def rot_z(theta):
    """Rotation matrix about the z axis."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(mat, tol=_ROTATION_TOL):
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (3, 3):
        return False
    if not np.allclose(mat.T @ mat, np.eye(3), atol=tol):
        return False
    return abs(np.linalg.det(mat) - 1.0) <= tol


def _check_rotation(mat, name):
    if not is_rotation(mat):
        raise ValueError(f"{name} is not a proper rotation matrix")
    return np.asarray(mat, dtype=float)


@dataclass
class SensorPoseChain:
    """Pose chain parameters for mapping sensor-frame points to the world.

    Attributes:
        r_body_world / rot_body_world: vehicle pose in the world frame.
        rot_mount_body / r_mount_body: constant motor-base extrinsic.
        rot_sensor_motor / r_sensor_motor: constant sensor extrinsic.
        theta: motor angle (rad), stored wrapped to [0, 2*pi).
    """

    rot_body_world: np.ndarray = field(default_factory=lambda: np.eye(3))
    r_body_world: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot_mount_body: np.ndarray = field(default_factory=lambda: np.eye(3))
    r_mount_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot_sensor_motor: np.ndarray = field(default_factory=lambda: np.eye(3))
    r_sensor_motor: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta: float = 0.0

    def __post_init__(self):
        self.rot_body_world = _check_rotation(self.rot_body_world, "rot_body_world")
        self.rot_mount_body = _check_rotation(self.rot_mount_body, "rot_mount_body")
        self.rot_sensor_motor = _check_rotation(
            self.rot_sensor_motor, "rot_sensor_motor"
        )
        self.r_body_world = np.asarray(self.r_body_world, dtype=float).reshape(3)
        self.r_mount_body = np.asarray(self.r_mount_body, dtype=float).reshape(3)
        self.r_sensor_motor = np.asarray(self.r_sensor_motor, dtype=float).reshape(3)
        self.theta = float(wrap_angle(self.theta))


def compose_sensor_pose(chain: SensorPoseChain, p_sensor):
    """Map sensor-frame points through the full chain into the world frame.

    Accepts a single (3,) point or an (N, 3) batch.
    """
    p = np.asarray(p_sensor, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    p_motor = p @ chain.rot_sensor_motor.T + chain.r_sensor_motor
    p_mount = p_motor @ rot_z(chain.theta).T
    p_body = p_mount @ chain.rot_mount_body.T + chain.r_mount_body
    p_world = p_body @ chain.rot_body_world.T + chain.r_body_world
    return p_world[0] if single else p_world


def sensor_origin_world(chain: SensorPoseChain):
    """World position of the sensor frame origin."""
    return compose_sensor_pose(chain, np.zeros(3))


def scan_direction(rot_body_world, rot_mount_body, theta):
    """Principal scanning direction in the world frame.

    The motor angle points the sensor along (cos theta, sin theta, 0) in the
    motor-base frame; body and mount rotations carry it to the world.
    """
    d = np.array([np.cos(theta), np.sin(theta), 0.0])
    return np.asarray(rot_body_world) @ (np.asarray(rot_mount_body) @ d)
