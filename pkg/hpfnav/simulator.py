"""
Closed-loop simulation: field -> controller -> disturbance -> robot.

Control is computed once per step and held across the integrator's
sub-stages. Runs never raise on collision or numerical blowup; both end the
run and are reported in the metrics.
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .controller import Controller, GainSet, heading_error
from .env import Point, clearance_at, clearance_map, is_admissible
from .errors import (HpfNavError, LeftAdmissibleSpace, MissingReferenceMax, NumericalBlowup,
                     StalledPath, ZeroGuidance)
from .robot import (ControlVector, FsrKinematic, ModelKind, RobotParams, RobotState,
                    ddr_local_acceleration, ddr_local_velocity, fsr_local_velocity, wheel_speeds,
                    with_channels)
from .solver import GuidanceField

if TYPE_CHECKING:
    from .scenario import Scenario

MASK64 = 0xFFFFFFFFFFFFFFFF
BLOWUP = 1e9
ZERO_GUIDANCE = 1e-15
LYAPUNOV_TOL = 1e-6

COLUMNS = ("t", "x", "y", "theta", "v", "omega", "u1", "u2", "u1_applied", "u2_applied",
           "grad_mag", "dtheta", "delta", "lyapunov")


class Integrator(str, Enum):
    EULER = "euler"
    RK4 = "rk4"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_max: float = 60.0
    integrator: Integrator = Integrator.RK4
    seed: int = 0
    pos_tol: float = 0.05
    stop_on_converge: bool = True
    vel_tol: float = 0.05
    align_tol: float = 0.2
    track_tol: float = 0.1
    settle_window: float = 2.0
    record_every: int = 1
    divergence_tol: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_max < self.dt:
            raise ValueError("t_max must be at least dt")
        if not self.pos_tol > 0:
            raise ValueError("pos_tol must be positive")
        if not (0 <= self.seed <= MASK64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if not self.divergence_tol > 0:
            raise ValueError("divergence_tol must be positive")


@dataclass(frozen=True)
class Disturbance:
    noise_amplitude: float = 0.0
    saturation_limit: Optional[float] = None
    saturation_fraction: Optional[float] = None

    def __post_init__(self):
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be non-negative")
        if self.saturation_limit is not None and self.saturation_fraction is not None:
            raise ValueError("set at most one of saturation_limit and saturation_fraction")
        if self.saturation_limit is not None and self.saturation_limit < 0:
            raise ValueError("saturation_limit must be non-negative")
        if self.saturation_fraction is not None and not (0.0 < self.saturation_fraction <= 1.0):
            raise ValueError("saturation_fraction must lie in (0, 1]")

    @property
    def is_identity(self) -> bool:
        return self.noise_amplitude == 0 and self.saturation_limit is None and self.saturation_fraction is None


@dataclass
class Trajectory:
    columns: Dict[str, np.ndarray]
    events: List[str] = dataclass_field(default_factory=list)
    reference: Optional["ReferencePath"] = None

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def __len__(self) -> int:
        return len(self.columns["t"])

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack((self.columns["x"], self.columns["y"]))


@dataclass
class Metrics:
    converged: bool
    convergence_time: Optional[float]
    max_deviation: float
    final_pose: Tuple[float, float, float]
    lyapunov_monotone: bool
    lyapunov_max_jump: float
    min_clearance: float
    diverged: bool
    collided: bool = False
    termination: str = "t_max"
    final_heading_error: Optional[float] = None
    alignment_error: Optional[float] = None
    path_length: float = 0.0
    c_m_path: float = 0.0
    c_m_global: float = 0.0
    deviation_bound: float = 0.0
    energy_residual: Optional[float] = None
    energy_rise: float = 0.0
    guidance_turning: float = 0.0

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["final_pose"] = list(self.final_pose)
        return out


# --- random numbers ---------------------------------------------------------

def splitmix64(state: int) -> Tuple[int, int]:
    """One splitmix64 draw: (64-bit output, next state)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    z = z ^ (z >> 31)
    return z, state


def rng_next(state: int) -> Tuple[float, int]:
    """Uniform value in [0, 1) from the top 53 bits of a splitmix64 draw."""
    z, state = splitmix64(state)
    return (z >> 11) * (2.0 ** -53), state


# --- disturbance ------------------------------------------------------------

def apply_disturbance(u: ControlVector, d: Disturbance, rng_state: int,
                      reference_max: Optional[Sequence[float]] = None) -> Tuple[ControlVector, int]:
    """Per-channel uniform noise in [-a, a], then the active saturation clamp."""
    if d.saturation_fraction is not None and reference_max is None:
        raise MissingReferenceMax("fractional saturation needs the maximum of an undisturbed run")
    channels = list(u.channels())
    if d.noise_amplitude > 0:
        for k in range(len(channels)):
            value, rng_state = rng_next(rng_state)
            channels[k] += d.noise_amplitude * (2.0 * value - 1.0)
    if d.saturation_limit is not None:
        limits = [d.saturation_limit] * len(channels)
    elif d.saturation_fraction is not None:
        limits = [d.saturation_fraction * m for m in reference_max]
    else:
        limits = None
    if limits is not None:
        channels = [max(-lim, min(lim, c)) for c, lim in zip(channels, limits)]
    return with_channels(u, tuple(channels)), rng_state


# --- integration ------------------------------------------------------------

def _integrate(f: Callable[[Tuple[float, ...]], Tuple[float, ...]], y: Tuple[float, ...], dt: float,
               integrator: Integrator) -> Tuple[float, ...]:
    k1 = f(y)
    if integrator is Integrator.EULER:
        return tuple(a + dt * b for a, b in zip(y, k1))
    k2 = f(tuple(a + 0.5 * dt * b for a, b in zip(y, k1)))
    k3 = f(tuple(a + 0.5 * dt * b for a, b in zip(y, k2)))
    k4 = f(tuple(a + dt * b for a, b in zip(y, k3)))
    return tuple(a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def _target_reached(field: GuidanceField, p: Point, tol: float) -> bool:
    target = field.target
    return target is not None and math.hypot(p[0] - target[0], p[1] - target[1]) < tol


@dataclass
class ReferencePath:
    points: np.ndarray
    times: np.ndarray
    c_m: float
    turning: float = 0.0

    @property
    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(self.points, axis=0).T)))


def reference_path(field: GuidanceField, start: Point, cfg: SimConfig) -> ReferencePath:
    """Integrates the gradient system Xdot = -grad V from start.

    Besides the points, records the largest guidance magnitude met and the total
    rotation of the guidance direction along the way.
    """
    ws = field.workspace
    p = (float(start[0]), float(start[1]))
    points = [p]
    times = [0.0]
    g = field.gradient_at(p)
    c_m = math.hypot(*g)
    psi = math.atan2(g[1], g[0])
    turning = 0.0
    steps = int(round(cfg.t_max / cfg.dt))

    def flow(y):
        return field.gradient_at(y)

    for n in range(1, steps + 1):
        if _target_reached(field, p, cfg.pos_tol):
            break
        if math.hypot(*g) < ZERO_GUIDANCE:
            raise StalledPath(f"guidance vanishes at ({p[0]:.4g}, {p[1]:.4g}) away from the target")
        try:
            nxt = _integrate(flow, p, cfg.dt, cfg.integrator)
        except HpfNavError:
            # a sub-stage left the free space; fall back to a single Euler step
            nxt = _integrate(flow, p, cfg.dt, Integrator.EULER)
        if not is_admissible(ws, nxt):
            logging.warning(f"Reference path left the free space at t={n * cfg.dt:.3f}s; truncated")
            break
        p = nxt
        g = field.gradient_at(p)
        c_m = max(c_m, math.hypot(*g))
        if math.hypot(*g) >= ZERO_GUIDANCE:
            nxt_psi = math.atan2(g[1], g[0])
            turning += abs(math.remainder(nxt_psi - psi, math.tau))
            psi = nxt_psi
        points.append(p)
        times.append(n * cfg.dt)
    return ReferencePath(np.array(points), np.array(times), c_m, turning)


# --- closed loop ------------------------------------------------------------

@dataclass(frozen=True)
class StepOutcome:
    state: RobotState
    rng_state: int
    guidance: Point
    control: ControlVector
    applied: ControlVector


def _plant_rates(kind: ModelKind, u: ControlVector, p: RobotParams):
    if kind is ModelKind.DDR_KINEMATIC:
        return ddr_local_velocity(u, p)
    if kind is ModelKind.FSR_KINEMATIC:
        return fsr_local_velocity(u, p)
    return ddr_local_acceleration(u, p)


def step(state: RobotState, field: GuidanceField, controller: Controller, kind: ModelKind,
         plant: RobotParams, d: Disturbance, dt: float, integrator: Integrator = Integrator.RK4,
         rng_state: int = 0, reference_max: Optional[Sequence[float]] = None) -> StepOutcome:
    """Advances the closed loop by dt under a zero-order hold on the control."""
    guidance = field.gradient_at(state.position)
    _, u = controller.compute(guidance, state)
    applied, rng_state = apply_disturbance(u, d, rng_state, reference_max)
    if isinstance(applied, FsrKinematic) and abs(applied.phi) > plant.phi_max:
        applied = FsrKinematic(applied.omega_h, math.copysign(plant.phi_max, applied.phi))

    if kind.is_dynamic:
        v_dot, omega_dot = _plant_rates(kind, applied, plant)

        def f(y):
            return (y[3] * math.cos(y[2]), y[3] * math.sin(y[2]), y[4], v_dot, omega_dot)

        y = _integrate(f, (state.x, state.y, state.theta, state.v, state.omega), dt, integrator)
        new_state = RobotState(*y)
    else:
        v, omega = _plant_rates(kind, applied, plant)

        def f(y):
            return (v * math.cos(y[2]), v * math.sin(y[2]), omega)

        y = _integrate(f, state.pose, dt, integrator)
        new_state = RobotState(y[0], y[1], y[2], v, omega)

    if not new_state.is_finite() or any(abs(c) > BLOWUP for c in
                                        (new_state.x, new_state.y, new_state.v, new_state.omega)):
        raise NumericalBlowup(f"state magnitude exceeded {BLOWUP:g}")
    if not is_admissible(field.workspace, new_state.position):
        raise LeftAdmissibleSpace(f"robot entered an obstacle at ({new_state.x:.4f}, {new_state.y:.4f})")
    return StepOutcome(new_state, rng_state, guidance, u, applied)


def deviation_trace(positions: np.ndarray, ref: np.ndarray) -> Tuple[np.ndarray, float]:
    """Signed cross-track distance to the nearest reference segment (positive on the left).

    The last segment is extended past its end, so running along the reference
    beyond where it stops does not count as deviation.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    if len(ref) == 1:
        delta = np.hypot(*(positions - ref[0]).T)
        return delta, float(np.max(np.abs(delta))) if len(delta) else 0.0
    keep = np.concatenate(([True], np.any(np.diff(ref, axis=0) != 0, axis=1)))
    ref = ref[keep]
    if len(ref) == 1:
        return deviation_trace(positions, ref)
    seg_a = ref[:-1]
    seg_d = np.diff(ref, axis=0)
    seg_len2 = np.sum(seg_d ** 2, axis=1)
    _, nearest = cKDTree(ref).query(positions)
    last = len(seg_a) - 1
    best_dist = np.full(len(positions), np.inf)
    delta = np.zeros(len(positions))
    for shift in (-2, -1, 0, 1):
        seg = np.clip(nearest + shift, 0, last)
        w = positions - seg_a[seg]
        hi = np.where(seg == last, np.inf, 1.0)
        t = np.clip(np.sum(w * seg_d[seg], axis=1) / seg_len2[seg], 0.0, hi)
        closest = seg_a[seg] + t[:, None] * seg_d[seg]
        dist = np.hypot(*(positions - closest).T)
        cross = seg_d[seg, 0] * w[:, 1] - seg_d[seg, 1] * w[:, 0]
        signed = np.where(cross >= 0, dist, -dist)
        better = dist < best_dist
        best_dist = np.where(better, dist, best_dist)
        delta = np.where(better, signed, delta)
    return delta, float(np.max(np.abs(delta))) if len(delta) else 0.0


def _guidance_or_zero(field: GuidanceField, p: Point) -> Point:
    try:
        return field.gradient_at(p)
    except HpfNavError:
        return (0.0, 0.0)


def _heading_error_or_zero(g: Point, theta: float) -> float:
    try:
        return heading_error(g, theta)
    except ZeroGuidance:
        return 0.0


def _dtheta(field: GuidanceField, p: Point, theta: float) -> Tuple[float, Point]:
    g = _guidance_or_zero(field, p)
    return _heading_error_or_zero(g, theta), g


def lyapunov_trace(traj: Trajectory, field: GuidanceField, kind: ModelKind, params: RobotParams,
                   gains: GainSet) -> np.ndarray:
    """Lyapunov candidate along a sampled trajectory.

    Kinematic models use V + dtheta^2/2; dynamic ones use
    K1*M*V + K2*I*dtheta^2/2 + I*omega^2/2 + M*v^2/2. The first sample is the
    candidate itself. Each later sample adds the change over one step with the
    guidance held at its value at the start of the step: the potential change is
    the trapezoidal work of the guidance along the step and the heading term is
    measured against the held guidance direction.
    """
    xs, ys, thetas = traj["x"], traj["y"], traj["theta"]
    vs, omegas = traj["v"], traj["omega"]
    n = len(xs)
    out = np.empty(n)
    if n == 0:
        return out
    if kind.is_dynamic:
        k_value, k_heading = gains.K1 * params.M, gains.K2 * params.I
    else:
        k_value, k_heading = 1.0, 1.0

    def kinetic(k):
        if not kind.is_dynamic:
            return 0.0
        return 0.5 * params.I * omegas[k] ** 2 + 0.5 * params.M * vs[k] ** 2

    p = (float(xs[0]), float(ys[0]))
    g = _guidance_or_zero(field, p)
    dtheta = _heading_error_or_zero(g, float(thetas[0]))
    out[0] = k_value * field.value_at(p) + 0.5 * k_heading * dtheta ** 2 + kinetic(0)
    for k in range(1, n):
        q = (float(xs[k]), float(ys[k]))
        g_next = _guidance_or_zero(field, q)
        work = -0.5 * ((g[0] + g_next[0]) * (q[0] - p[0]) + (g[1] + g_next[1]) * (q[1] - p[1]))
        before = _heading_error_or_zero(g, float(thetas[k - 1]))
        after = _heading_error_or_zero(g, float(thetas[k]))
        out[k] = (out[k - 1] + k_value * work + 0.5 * k_heading * (after ** 2 - before ** 2)
                  + kinetic(k) - kinetic(k - 1))
        p, g = q, g_next
    return out


def fit_heading_decay(traj: Trajectory, t_end: Optional[float] = None) -> Tuple[float, float]:
    """Least-squares slope of ln|dtheta(t)| and the fit's r^2."""
    t = traj["t"]
    mag = np.abs(traj["dtheta"])
    keep = mag > 1e-9
    if t_end is not None:
        keep &= t <= t_end
    if np.count_nonzero(keep) < 3:
        raise ValueError("not enough non-zero heading-error samples to fit")
    t, logs = t[keep], np.log(mag[keep])
    slope, intercept = np.polyfit(t, logs, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def count_sign_changes(delta: np.ndarray, threshold: float = 1e-3) -> int:
    signs = np.sign(delta[np.abs(delta) > threshold])
    if len(signs) < 2:
        return 0
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def energy_balance(traj: Trajectory, params: RobotParams) -> float:
    """|actuator work - kinetic energy change| for consecutive zero-order-held torque samples."""
    t, v, omega = traj["t"], traj["v"], traj["omega"]
    tr, tl = traj["u1_applied"], traj["u2_applied"]
    work = 0.0
    for k in range(len(t) - 1):
        wr0, wl0 = wheel_speeds(RobotState(0.0, 0.0, 0.0, v[k], omega[k]), params)
        wr1, wl1 = wheel_speeds(RobotState(0.0, 0.0, 0.0, v[k + 1], omega[k + 1]), params)
        dt = t[k + 1] - t[k]
        work += 0.5 * dt * (tr[k] * (wr0 + wr1) + tl[k] * (wl0 + wl1))

    def kinetic(k):
        return 0.5 * params.M * v[k] ** 2 + 0.5 * params.I * omega[k] ** 2

    return abs(work - (kinetic(len(t) - 1) - kinetic(0)))


def _controller_for(sc: "Scenario") -> Controller:
    return Controller(sc.robot.kind, sc.robot.controller_params, sc.gains, sc.damping_mode)


def reference_max(sc: "Scenario", field: GuidanceField) -> Tuple[float, float]:
    """Per-channel max |u| of the same scenario without disturbance."""
    clean = replace(sc, disturbance=Disturbance())
    traj, _ = run(clean, field)
    # the last row holds the control of the final state, which is never applied
    stepped = slice(None, -1) if len(traj) > 1 else slice(None)
    return (float(np.max(np.abs(traj["u1"][stepped]))), float(np.max(np.abs(traj["u2"][stepped]))))


def _tracking_convergence(traj: Trajectory, cfg: SimConfig) -> Optional[float]:
    """Start of the final interval where |delta| < track_tol and |dtheta| < align_tol, if it covers the settle window."""
    t = traj["t"]
    ok = (np.abs(traj["delta"]) < cfg.track_tol) & (np.abs(traj["dtheta"]) < cfg.align_tol)
    if len(ok) == 0 or not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    first = 0 if len(bad) == 0 else bad[-1] + 1
    if t[-1] - t[first] < cfg.settle_window:
        return None
    return float(t[first])


def run(sc: "Scenario", field: GuidanceField, ref_max: Optional[Sequence[float]] = None
        ) -> Tuple[Trajectory, Metrics]:
    cfg = sc.sim
    kind = sc.robot.kind
    plant = sc.robot.params
    controller = _controller_for(sc)
    ws = field.workspace
    d = sc.disturbance
    if d.saturation_fraction is not None and ref_max is None:
        ref_max = reference_max(sc, field)
        logging.info(f"Reference control maxima for fractional saturation: {ref_max}")

    start = sc.initial_state
    try:
        ref = reference_path(field, start.position, cfg)
    except StalledPath as e:
        logging.warning(f"Reference path stalled: {e}")
        ref = ReferencePath(np.array([start.position]), np.array([0.0]), 0.0)

    state = start
    rng_state = cfg.seed
    rows: List[Tuple[float, ...]] = []
    events: List[str] = []
    termination = "t_max"
    converged = False
    convergence_time = None
    steps = int(round(cfg.t_max / cfg.dt))
    tracking = field.target is None

    def record(t, s, guidance, u, applied):
        c, ca = u.channels(), applied.channels()
        rows.append((t, s.x, s.y, s.theta, s.v, s.omega, c[0], c[1], ca[0], ca[1], math.hypot(*guidance)))

    def target_converged(s: RobotState) -> bool:
        if not _target_reached(field, s.position, cfg.pos_tol):
            return False
        return not kind.is_dynamic or abs(s.v) < cfg.vel_tol

    n = 0
    while True:
        t = n * cfg.dt
        if not tracking and target_converged(state):
            if not converged:
                converged, convergence_time = True, t
            if cfg.stop_on_converge:
                termination = "converged"
                break
        elif not tracking:
            converged, convergence_time = False, None
        if n >= steps:
            break
        try:
            outcome = step(state, field, controller, kind, plant, d, cfg.dt, cfg.integrator,
                           rng_state, ref_max)
        except LeftAdmissibleSpace as e:
            termination = "collision"
            events.append(f"collision at t={t + cfg.dt:.6g}: {e}")
            logging.warning(str(e))
            break
        except NumericalBlowup as e:
            termination = "blowup"
            events.append(f"blowup at t={t + cfg.dt:.6g}: {e}")
            logging.warning(str(e))
            break
        if n % cfg.record_every == 0:
            record(t, state, outcome.guidance, outcome.control, outcome.applied)
        state, rng_state = outcome.state, outcome.rng_state
        n += 1
    if not converged and termination == "t_max" and not tracking and target_converged(state):
        converged, convergence_time = True, n * cfg.dt

    # final sample: the state the run ended in, with the control it would receive
    try:
        g = field.gradient_at(state.position)
        _, u_final = controller.compute(g, state)
        record(n * cfg.dt, state, g, u_final, u_final)
    except HpfNavError:
        pass

    data = np.array(rows, dtype=float).reshape(-1, 11)
    columns = {name: data[:, k] for k, name in enumerate(COLUMNS[:11])}
    columns["dtheta"] = np.array([_dtheta(field, (x, y), th)[0]
                                  for x, y, th in zip(columns["x"], columns["y"], columns["theta"])])
    traj = Trajectory(columns, events, ref)
    delta, delta_max = deviation_trace(traj.positions, ref.points)
    columns["delta"] = delta
    columns["lyapunov"] = lyapunov_trace(traj, field, kind, plant, sc.gains)
    traj.columns = {name: columns[name] for name in COLUMNS}

    if tracking:
        convergence_time = _tracking_convergence(traj, cfg)
        converged = convergence_time is not None and termination == "t_max"

    jumps = np.diff(traj["lyapunov"])
    max_jump = float(np.max(jumps)) if len(jumps) else 0.0
    lyapunov = traj["lyapunov"]
    energy_rise = float(np.max(lyapunov) - lyapunov[0]) if len(lyapunov) else 0.0
    # a run that stops short of the target is only divergent if the candidate grew
    diverged = termination == "blowup" or (not converged and energy_rise > cfg.divergence_tol)
    clearance = clearance_map(ws)
    min_clearance = min(clearance_at(ws, clearance, (x, y)) for x, y in traj.positions)

    alignment = None
    if converged:
        after = traj["t"] >= convergence_time
        vx = traj["v"] * np.cos(traj["theta"])
        vy = traj["v"] * np.sin(traj["theta"])
        gx, gy = [], []
        for x, y in traj.positions[after]:
            gv = _dtheta(field, (x, y), 0.0)[1]
            gx.append(gv[0])
            gy.append(gv[1])
        alignment = float(np.max(np.hypot(vx[after] - np.array(gx), vy[after] - np.array(gy))))

    energy = None
    if kind.is_dynamic and cfg.record_every == 1 and len(traj) > 1:
        energy = energy_balance(traj, plant)

    dtheta0 = abs(float(traj["dtheta"][0])) if len(traj) else 0.0
    metrics = Metrics(
        converged=converged,
        convergence_time=convergence_time,
        max_deviation=delta_max,
        final_pose=state.pose,
        lyapunov_monotone=max_jump < LYAPUNOV_TOL,
        lyapunov_max_jump=max_jump,
        min_clearance=float(min_clearance),
        diverged=diverged,
        collided=termination == "collision",
        termination="converged" if converged and termination == "t_max" and not tracking else termination,
        final_heading_error=float(traj["dtheta"][-1]) if len(traj) else None,
        alignment_error=alignment,
        path_length=ref.length,
        c_m_path=ref.c_m,
        c_m_global=field.max_gradient_magnitude,
        deviation_bound=sc.gains.K1 / sc.gains.K2 * ref.c_m * (dtheta0 + ref.turning),
        energy_residual=energy,
        energy_rise=energy_rise,
        guidance_turning=ref.turning,
    )
    logging.info(
        f"Run finished ({metrics.termination}): converged={metrics.converged}, diverged={metrics.diverged}, "
        f"T={metrics.convergence_time}, max deviation {metrics.max_deviation:.4g} m"
    )
    return traj, metrics
