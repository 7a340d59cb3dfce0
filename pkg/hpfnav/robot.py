"""
Separable robot models.

Every model is a cascade of an actuation stage (controls -> local velocity
lambda = (v, omega)) and a transformation stage (local -> global pose rate).
Kinematic differential drive (DDR) and front-wheel-steered (FSR) robots, plus
the second-order DDR driven by wheel torques.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import SteeringOutOfRange

# Below this tangential speed the FSR steering angle saturates instead of
# following the atan branch.
V_DEAD = 1e-6

Pose = Tuple[float, float, float]
LocalVelocity = Tuple[float, float]


class ModelKind(str, Enum):
    DDR_KINEMATIC = "ddr_kinematic"
    FSR_KINEMATIC = "fsr_kinematic"
    DDR_DYNAMIC = "ddr_dynamic"

    @property
    def is_dynamic(self) -> bool:
        return self is ModelKind.DDR_DYNAMIC


@dataclass(frozen=True)
class RobotParams:
    r: float = 1.0
    W: float = 1.0
    L: float = 1.0
    M: float = 1.0
    I: float = 1.0
    phi_max: float = 1.4

    def __post_init__(self):
        for name in ("r", "W", "L", "M", "I"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"robot parameter {name} must be positive, got {value}")
        if not (0.0 < self.phi_max < math.pi / 2):
            raise ValueError(f"phi_max must lie in (0, pi/2), got {self.phi_max}")

    def with_errors(self, model_error: Optional[Dict[str, float]]) -> "RobotParams":
        """Parameter set seen by the controller when it works from a wrong model."""
        if not model_error:
            return self
        return replace(self, **model_error)


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    omega: float = 0.0

    @property
    def pose(self) -> Pose:
        return (self.x, self.y, self.theta)

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in (self.x, self.y, self.theta, self.v, self.omega))


@dataclass(frozen=True)
class DdrKinematic:
    omega_r: float
    omega_l: float

    def channels(self) -> Tuple[float, float]:
        return (self.omega_r, self.omega_l)


@dataclass(frozen=True)
class FsrKinematic:
    omega_h: float
    phi: float

    def channels(self) -> Tuple[float, float]:
        return (self.omega_h, self.phi)


@dataclass(frozen=True)
class DdrDynamic:
    torque_r: float
    torque_l: float

    def channels(self) -> Tuple[float, float]:
        return (self.torque_r, self.torque_l)


ControlVector = Union[DdrKinematic, FsrKinematic, DdrDynamic]


def with_channels(u: ControlVector, channels: Tuple[float, float]) -> ControlVector:
    """Same control variant carrying new channel values."""
    return type(u)(*channels)


def transform(theta: float, v: float, omega: float) -> Pose:
    """Transformation stage F(P): local velocity to pose rate."""
    return (v * math.cos(theta), v * math.sin(theta), omega)


def lateral_slip(theta: float, pose_rate: Pose) -> float:
    """ydot*cos(theta) - xdot*sin(theta); zero for every admissible motion."""
    return pose_rate[1] * math.cos(theta) - pose_rate[0] * math.sin(theta)


def ddr_local_velocity(u: DdrKinematic, p: RobotParams) -> LocalVelocity:
    v = p.r * (u.omega_r + u.omega_l) / 2.0
    omega = p.r * (u.omega_r - u.omega_l) / p.W
    return (v, omega)


def ddr_forward_kinematic(s: RobotState, u: DdrKinematic, p: RobotParams) -> Pose:
    v, omega = ddr_local_velocity(u, p)
    return transform(s.theta, v, omega)


def ddr_actuation_inverse(lam: LocalVelocity, p: RobotParams) -> DdrKinematic:
    v, omega = lam
    return DdrKinematic(
        omega_r=v / p.r + p.W * omega / (2.0 * p.r),
        omega_l=v / p.r - p.W * omega / (2.0 * p.r),
    )


def ddr_actuation_matrix(p: RobotParams) -> np.ndarray:
    """Q for the DDR: lambda = Q @ (omega_R, omega_L)."""
    return np.array([
        [p.r / 2.0, p.r / 2.0],
        [p.r / p.W, -p.r / p.W],
    ])


def fsr_local_velocity(u: FsrKinematic, p: RobotParams) -> LocalVelocity:
    if abs(u.phi) > p.phi_max:
        raise SteeringOutOfRange(f"steering angle {u.phi:.4f} exceeds phi_max {p.phi_max:.4f}")
    v = p.r * u.omega_h
    omega = p.r * u.omega_h * math.tan(u.phi) / p.L
    return (v, omega)


def fsr_forward_kinematic(s: RobotState, u: FsrKinematic, p: RobotParams) -> Pose:
    v, omega = fsr_local_velocity(u, p)
    return transform(s.theta, v, omega)


def fsr_actuation_inverse(lam: LocalVelocity, p: RobotParams) -> FsrKinematic:
    v, omega = lam
    omega_h = v / p.r
    if abs(v) < V_DEAD:
        if omega == 0.0:
            return FsrKinematic(omega_h=omega_h, phi=0.0)
        return FsrKinematic(omega_h=omega_h, phi=math.copysign(p.phi_max, omega))
    # atan(omega*L/v) rather than atan2: a backing robot must steer the other way
    phi = math.atan(omega * p.L / v)
    phi = max(-p.phi_max, min(p.phi_max, phi))
    return FsrKinematic(omega_h=omega_h, phi=phi)


def fsr_actuation_jacobian(u: FsrKinematic, p: RobotParams) -> np.ndarray:
    """Linearization of the FSR actuation stage around the operating point u."""
    sec2 = 1.0 / math.cos(u.phi) ** 2
    return np.array([
        [p.r, 0.0],
        [p.r * math.tan(u.phi) / p.L, p.r * u.omega_h * sec2 / p.L],
    ])


def ddr_local_acceleration(u: DdrDynamic, p: RobotParams) -> LocalVelocity:
    v_dot = (u.torque_r + u.torque_l) / (p.M * p.r)
    omega_dot = p.W * (u.torque_r - u.torque_l) / (2.0 * p.I * p.r)
    return (v_dot, omega_dot)


def ddr_forward_dynamic(s: RobotState, u: DdrDynamic, p: RobotParams) -> Tuple[Pose, LocalVelocity]:
    """Pose rate from the current lambda plus the local acceleration produced by the torques."""
    return transform(s.theta, s.v, s.omega), ddr_local_acceleration(u, p)


def ddr_dynamic_inverse(accel: LocalVelocity, p: RobotParams) -> DdrDynamic:
    """Torques producing the local acceleration (a, alpha)."""
    a, alpha = accel
    common = p.M * p.r * a
    differential = 2.0 * p.I * p.r * alpha / p.W
    return DdrDynamic(torque_r=(common + differential) / 2.0, torque_l=(common - differential) / 2.0)


def wheel_speeds(s: RobotState, p: RobotParams) -> Tuple[float, float]:
    u = ddr_actuation_inverse((s.v, s.omega), p)
    return u.channels()


def pseudo_inverse(A: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a finite real matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return np.linalg.pinv(A)


def actuation_inverse_general(lam, A: np.ndarray) -> np.ndarray:
    """Least-squares / minimum-norm control U = A+ lambda."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return pseudo_inverse(A) @ lam
