import math

import numpy as np
import pytest

from hpfnav.errors import SteeringOutOfRange
from hpfnav.robot import (V_DEAD, DdrDynamic, DdrKinematic, FsrKinematic, RobotParams, RobotState,
                          actuation_inverse_general, ddr_actuation_inverse, ddr_actuation_matrix,
                          ddr_dynamic_inverse, ddr_forward_dynamic, ddr_forward_kinematic, ddr_local_velocity,
                          fsr_actuation_inverse, fsr_actuation_jacobian, fsr_forward_kinematic,
                          fsr_local_velocity, lateral_slip, pseudo_inverse)

UNIT = RobotParams()


def test_ddr_forward_examples():
    s = RobotState(0.0, 0.0, 0.0)
    assert ddr_forward_kinematic(s, DdrKinematic(1.0, 1.0), UNIT) == pytest.approx((1.0, 0.0, 0.0))
    assert ddr_forward_kinematic(s, DdrKinematic(1.0, -1.0), UNIT) == pytest.approx((0.0, 0.0, 2.0))


def test_ddr_inverse_examples():
    assert ddr_actuation_inverse((1.0, 0.0), UNIT).channels() == pytest.approx((1.0, 1.0))
    assert ddr_actuation_inverse((0.0, 2.0), UNIT).channels() == pytest.approx((1.0, -1.0))


def test_ddr_inverse_identity_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = RobotParams(r=rng.uniform(0.1, 2.0), W=rng.uniform(0.1, 2.0))
        lam = tuple(rng.uniform(-5.0, 5.0, size=2))
        back = ddr_local_velocity(ddr_actuation_inverse(lam, p), p)
        assert back == pytest.approx(lam, abs=1e-12)


def test_fsr_forward_examples():
    s = RobotState(0.0, 0.0, 0.3)
    rate = fsr_forward_kinematic(s, FsrKinematic(1.0, 0.0), UNIT)
    assert rate[2] == 0.0
    assert fsr_local_velocity(FsrKinematic(1.0, math.pi / 4), UNIT) == pytest.approx((1.0, 1.0))
    at_clamp = fsr_local_velocity(FsrKinematic(1.0, UNIT.phi_max), UNIT)
    assert at_clamp[1] == pytest.approx(math.tan(UNIT.phi_max))
    with pytest.raises(SteeringOutOfRange):
        fsr_local_velocity(FsrKinematic(1.0, 1.5), UNIT)


def test_fsr_inverse_examples():
    assert fsr_actuation_inverse((1.0, 0.0), UNIT).channels() == pytest.approx((1.0, 0.0))
    assert fsr_actuation_inverse((1.0, 1.0), UNIT).phi == pytest.approx(math.pi / 4)
    # backing up while turning left steers the wheel right
    assert fsr_actuation_inverse((-1.0, 1.0), UNIT).phi == pytest.approx(-math.pi / 4)
    # steep turn clamps at phi_max
    assert fsr_actuation_inverse((0.01, 5.0), UNIT).phi == UNIT.phi_max


def test_fsr_dead_zone():
    u = fsr_actuation_inverse((0.0, 0.5), UNIT)
    assert u.phi == UNIT.phi_max
    assert u.omega_h == 0.0
    assert fsr_actuation_inverse((0.0, -0.5), UNIT).phi == -UNIT.phi_max
    assert fsr_actuation_inverse((V_DEAD / 2, 0.0), UNIT).phi == 0.0


def test_fsr_inverse_identity_outside_dead_zone():
    rng = np.random.default_rng(1)
    p = RobotParams(r=0.7, L=1.3)
    for _ in range(1000):
        v = rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 3.0)
        # keep the commanded turn inside the steering range
        omega = v * math.tan(rng.uniform(-1.3, 1.3)) / p.L
        back = fsr_local_velocity(fsr_actuation_inverse((v, omega), p), p)
        assert back == pytest.approx((v, omega), abs=1e-12, rel=1e-12)


def test_no_lateral_slip():
    rng = np.random.default_rng(2)
    for _ in range(200):
        theta = rng.uniform(-math.pi, math.pi)
        s = RobotState(0.0, 0.0, theta, v=rng.uniform(-1, 1), omega=rng.uniform(-1, 1))
        rates = [
            ddr_forward_kinematic(s, DdrKinematic(*rng.uniform(-2, 2, size=2)), UNIT),
            fsr_forward_kinematic(s, FsrKinematic(rng.uniform(-2, 2), rng.uniform(-1.3, 1.3)), UNIT),
            ddr_forward_dynamic(s, DdrDynamic(*rng.uniform(-2, 2, size=2)), UNIT)[0],
        ]
        for rate in rates:
            assert abs(lateral_slip(theta, rate)) < 1e-14


def test_dynamic_examples():
    s = RobotState(0.0, 0.0, 0.0, v=0.5, omega=0.0)
    p = RobotParams(M=2.0, I=3.0, r=0.5, W=1.5)
    rate, (v_dot, omega_dot) = ddr_forward_dynamic(s, DdrDynamic(1.0, 1.0), p)
    assert rate == pytest.approx((0.5, 0.0, 0.0))
    assert omega_dot == 0.0
    assert v_dot == pytest.approx(2.0 / (p.M * p.r))
    _, (v_dot, omega_dot) = ddr_forward_dynamic(s, DdrDynamic(1.0, -1.0), p)
    assert v_dot == 0.0
    assert omega_dot == pytest.approx(p.W / (p.I * p.r))


def test_dynamic_inverse_round_trip():
    p = RobotParams(M=2.0, I=0.5, r=0.3, W=0.8)
    s = RobotState(0.0, 0.0, 0.0)
    u = ddr_dynamic_inverse((1.25, -0.75), p)
    assert ddr_forward_dynamic(s, u, p)[1] == pytest.approx((1.25, -0.75), abs=1e-12)


def test_pseudo_inverse_examples():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(pseudo_inverse(A), np.linalg.inv(A), atol=1e-9)
    assert np.allclose(pseudo_inverse(np.array([[1.0, 0.0]])), [[1.0], [0.0]])


def test_pseudo_inverse_projector_eigenvalues():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        m, n = rng.integers(1, 6, size=2)
        A = rng.normal(size=(m, n))
        if rng.random() < 0.3 and min(m, n) > 1:
            A[:, -1] = 0.0  # rank deficient
        P = pseudo_inverse(A)
        assert np.allclose(A @ P @ A, A, atol=1e-9)
        assert np.allclose(P @ A @ P, P, atol=1e-9)
        for B in (A @ P, P @ A):
            assert np.allclose(B, B.T, atol=1e-9)
            eig = np.linalg.eigvalsh((B + B.T) / 2.0)
            assert np.all((np.abs(eig) < 1e-9) | (np.abs(eig - 1.0) < 1e-9))


def test_general_inverse():
    p = RobotParams(r=0.4, W=1.2)
    lam = (0.8, -0.3)
    U = actuation_inverse_general(lam, ddr_actuation_matrix(p))
    assert U == pytest.approx(ddr_actuation_inverse(lam, p).channels(), abs=1e-9)
    # under-actuated: one actuator driving v only
    assert actuation_inverse_general((2.0, 5.0), np.array([[1.0], [0.0]])) == pytest.approx([2.0])
    # redundant: three actuators reproduce any lambda exactly
    A = np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 2.0]])
    U = actuation_inverse_general((0.3, -1.1), A)
    assert np.linalg.norm(A @ U - np.array([0.3, -1.1])) < 1e-9


def test_fsr_jacobian_matches_finite_difference():
    p = RobotParams(r=0.9, L=1.1)
    u = FsrKinematic(0.7, 0.4)
    J = fsr_actuation_jacobian(u, p)
    h = 1e-7
    for k, du in enumerate([(h, 0.0), (0.0, h)]):
        plus = fsr_local_velocity(FsrKinematic(u.omega_h + du[0], u.phi + du[1]), p)
        minus = fsr_local_velocity(FsrKinematic(u.omega_h - du[0], u.phi - du[1]), p)
        column = [(a - b) / (2 * h) for a, b in zip(plus, minus)]
        assert column == pytest.approx(J[:, k].tolist(), rel=1e-6)


def test_params_with_errors():
    true = RobotParams()
    seen = true.with_errors({"L": 0.5, "r": 1.5})
    assert (seen.L, seen.r, seen.W) == (0.5, 1.5, 1.0)
    assert true.with_errors(None) is true
    with pytest.raises(ValueError):
        RobotParams(r=0.0)
    with pytest.raises(ValueError):
        RobotParams(phi_max=1.6)
