"""
Synchronizing control: align the robot's local velocity with the guidance field.

Kinematic robots receive the synchronizing signal S as a local velocity
command through the inverse actuation stage. The dynamic DDR receives
S - S_d (synchronizing force minus local damping) as a local acceleration
command realized by wheel torques.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

from .errors import ZeroGuidance
from .robot import (ControlVector, DdrDynamic, ModelKind, RobotParams, RobotState,
                    ddr_actuation_inverse, ddr_dynamic_inverse, fsr_actuation_inverse)
from .utils import wrap_angle

ZERO_GUIDANCE = 1e-15

Vector = Tuple[float, float]


class DampingMode(str, Enum):
    OMNI = "omni"
    SELECTIVE = "selective"


class ControlLaw(str, Enum):
    SYNCHRONIZING = "synchronizing"
    # kinematic synchronizing signal fed to the dynamic robot as a force, undamped
    KINEMATIC = "kinematic"


@dataclass(frozen=True)
class GainSet:
    K1: float = 1.0
    K2: float = 4.0
    KD1: float = 2.0
    KD2: float = 2.0
    law: ControlLaw = ControlLaw.SYNCHRONIZING

    def __post_init__(self):
        if not (self.K1 > 0 and self.K2 > 0):
            raise ValueError("K1 and K2 must be positive")
        if self.KD1 < 0 or self.KD2 < 0:
            raise ValueError("KD1 and KD2 must be non-negative")


@dataclass(frozen=True)
class SyncSignal:
    s1: float
    s2: float

    def __sub__(self, other: "SyncSignal") -> "SyncSignal":
        return SyncSignal(self.s1 - other.s1, self.s2 - other.s2)


ZERO_SIGNAL = SyncSignal(0.0, 0.0)


def damping_condition(g: GainSet) -> bool:
    """Damping gains that make the dynamic closed loop's Lyapunov derivative non-positive."""
    return g.KD1 > g.K1 > 0 and g.KD2 > 0


def heading_error(guidance: Vector, theta: float) -> float:
    if math.hypot(guidance[0], guidance[1]) < ZERO_GUIDANCE:
        raise ZeroGuidance("guidance vector vanishes")
    return wrap_angle(math.atan2(guidance[1], guidance[0]) - theta)


def sync_kinematic(guidance: Vector, theta: float, g: GainSet) -> SyncSignal:
    dtheta = heading_error(guidance, theta)
    magnitude = math.hypot(guidance[0], guidance[1])
    return SyncSignal(g.K1 * magnitude * math.cos(dtheta), g.K2 * dtheta)


def control_kinematic(sig: SyncSignal, kind: ModelKind, p: RobotParams) -> ControlVector:
    if kind is ModelKind.DDR_KINEMATIC:
        return ddr_actuation_inverse((sig.s1, sig.s2), p)
    if kind is ModelKind.FSR_KINEMATIC:
        return fsr_actuation_inverse((sig.s1, sig.s2), p)
    raise ValueError(f"{kind.value} is not a kinematic model")


def sync_dynamic(guidance: Vector, v: float, theta: float, g: GainSet) -> SyncSignal:
    dtheta = heading_error(guidance, theta)
    magnitude = math.hypot(guidance[0], guidance[1])
    return SyncSignal(g.K1 * (magnitude - v) * math.cos(dtheta), g.K2 * dtheta)


def damping_force(guidance: Vector, state: RobotState, g: GainSet, mode: DampingMode) -> SyncSignal:
    eta1, eta2 = 1.0, 1.0
    if mode is DampingMode.SELECTIVE:
        try:
            eta1 = 1.0 - math.cos(heading_error(guidance, state.theta))
        except ZeroGuidance:
            eta1 = 1.0
    return SyncSignal(g.KD1 * eta1 * state.v, g.KD2 * eta2 * state.omega)


def control_dynamic(sync: SyncSignal, damp: SyncSignal, p: RobotParams) -> DdrDynamic:
    net = sync - damp
    return ddr_dynamic_inverse((net.s1, net.s2), p)


class Controller:
    """Closed-loop control law for one robot, built from the controller-side model."""

    def __init__(self, kind: ModelKind, params: RobotParams, gains: GainSet,
                 damping: DampingMode = DampingMode.SELECTIVE):
        self.kind = kind
        self.params = params
        self.gains = gains
        self.damping = damping
        if kind.is_dynamic and gains.law is ControlLaw.SYNCHRONIZING and not damping_condition(gains):
            logging.warning(
                f"Gains K1={gains.K1}, KD1={gains.KD1}, KD2={gains.KD2} violate KD1 > K1, KD2 > 0; "
                f"closed-loop stability is not guaranteed"
            )

    def compute(self, guidance: Vector, state: RobotState) -> Tuple[SyncSignal, ControlVector]:
        if not self.kind.is_dynamic:
            try:
                sig = sync_kinematic(guidance, state.theta, self.gains)
            except ZeroGuidance:
                sig = ZERO_SIGNAL
            return sig, control_kinematic(sig, self.kind, self.params)

        if self.gains.law is ControlLaw.KINEMATIC:
            try:
                sig = sync_kinematic(guidance, state.theta, self.gains)
            except ZeroGuidance:
                sig = ZERO_SIGNAL
            return sig, control_dynamic(sig, ZERO_SIGNAL, self.params)

        try:
            sig = sync_dynamic(guidance, state.v, state.theta, self.gains)
        except ZeroGuidance:
            sig = ZERO_SIGNAL
        damp = damping_force(guidance, state, self.gains, self.damping)
        return sig, control_dynamic(sig, damp, self.params)
