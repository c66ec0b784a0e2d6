"""Vertical-flight forward simulator.

State is ``(h, v)``: altitude above the pad and vertical velocity.  The rocket
is driven by a trapezoidal thrust curve scaled by a correction factor, loses
propellant mass in proportion to delivered nominal impulse, and experiences
quadratic drag in an exponential atmosphere.  Integration uses an embedded
Dormand-Prince 5(4) pair with the apogee located by bisection on the sign of
the velocity inside the step that brackets it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STANDARD_GRAVITY = 9.80665
SEA_LEVEL_DENSITY = 1.225
SCALE_HEIGHT = 8500.0
# 66 mm airframe
DEFAULT_REFERENCE_AREA = math.pi * (0.066 / 2.0) ** 2


class SimulationError(RuntimeError):
    """Base class for forward-simulation failures."""


class NoLiftoffError(SimulationError):
    """Thrust never overcame weight.  ``result`` carries the zero-apogee outcome."""

    def __init__(self, message: str, result: "SimResult"):
        super().__init__(message)
        self.result = result


class NonFiniteStateError(SimulationError):
    """The integrated state became NaN or infinite."""


@dataclass(frozen=True)
class MotorSpec:
    name: str
    total_impulse: float
    burn_time: float
    propellant_mass: float
    ramp_fraction: float = 0.1
    decay_fraction: float = 0.3
    motor_index: int = 0

    def __post_init__(self):
        if not self.total_impulse > 0:
            raise ValueError(f"{self.name}: total_impulse must be > 0")
        if not self.burn_time > 0:
            raise ValueError(f"{self.name}: burn_time must be > 0")
        if not self.propellant_mass >= 0:
            raise ValueError(f"{self.name}: propellant_mass must be >= 0")
        if not 0 < self.ramp_fraction < 1:
            raise ValueError(f"{self.name}: ramp_fraction must lie in (0, 1)")
        if not 0 < self.decay_fraction < 1:
            raise ValueError(f"{self.name}: decay_fraction must lie in (0, 1)")
        if not self.ramp_fraction + self.decay_fraction < 1:
            raise ValueError(f"{self.name}: ramp_fraction + decay_fraction must be < 1")
        if self.motor_index < 0:
            raise ValueError(f"{self.name}: motor_index must be >= 0")

    @property
    def peak_thrust(self) -> float:
        shape = 1.0 - 0.5 * (self.ramp_fraction + self.decay_fraction)
        return self.total_impulse / (self.burn_time * shape)

    @property
    def breakpoints(self) -> tuple[float, float, float]:
        """End of ramp, start of decay, burnout."""
        tb = self.burn_time
        return (self.ramp_fraction * tb, (1.0 - self.decay_fraction) * tb, tb)


@dataclass(frozen=True)
class FlightParams:
    cd: float
    alpha: float

    def __post_init__(self):
        if not self.cd >= 0:
            raise ValueError("cd must be >= 0")
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")


@dataclass(frozen=True)
class RocketConfig:
    dry_mass: float
    motor: MotorSpec
    reference_area: float = DEFAULT_REFERENCE_AREA

    def __post_init__(self):
        if not self.dry_mass > 0:
            raise ValueError("dry_mass must be > 0")
        if not self.reference_area > 0:
            raise ValueError("reference_area must be > 0")


@dataclass(frozen=True)
class SimOptions:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    max_time: float = 60.0
    gravity: float = STANDARD_GRAVITY
    sea_level_density: float = SEA_LEVEL_DENSITY
    scale_height: float = SCALE_HEIGHT
    initial_step: float = 1e-3
    max_step: float = 0.1
    safety: float = 0.9
    event_time_tol: float = 1e-6

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")


@dataclass(frozen=True)
class SimResult:
    apogee: float
    time_to_apogee: float
    # columns: t, h, v, m
    trajectory: np.ndarray = field(repr=False)

    @property
    def lifted_off(self) -> bool:
        return self.apogee > 0.0


def air_density(h: float, opts: SimOptions) -> float:
    h = max(h, 0.0)
    return opts.sea_level_density * math.exp(-h / opts.scale_height)


def nominal_thrust(t: float, motor: MotorSpec) -> float:
    t_ramp, t_decay, t_burn = motor.breakpoints
    if t <= 0.0 or t >= t_burn:
        return 0.0
    peak = motor.peak_thrust
    if t < t_ramp:
        return peak * t / t_ramp
    if t <= t_decay:
        return peak
    return peak * (t_burn - t) / (t_burn - t_decay)


def thrust(t: float, motor: MotorSpec, alpha: float) -> float:
    return alpha * nominal_thrust(t, motor)


def delivered_impulse(t: float, motor: MotorSpec) -> float:
    """Closed-form integral of the nominal thrust from 0 to ``t``."""
    t_ramp, t_decay, t_burn = motor.breakpoints
    if t <= 0.0:
        return 0.0
    if t >= t_burn:
        return motor.total_impulse
    peak = motor.peak_thrust
    if t < t_ramp:
        return 0.5 * peak * t * t / t_ramp
    if t <= t_decay:
        return peak * (0.5 * t_ramp + (t - t_ramp))
    remaining = t_burn - t
    return motor.total_impulse - 0.5 * peak * remaining * remaining / (t_burn - t_decay)


def mass_at(t: float, config: RocketConfig) -> float:
    motor = config.motor
    if t >= motor.burn_time:
        return config.dry_mass
    burned = delivered_impulse(t, motor) / motor.total_impulse
    return config.dry_mass + motor.propellant_mass * (1.0 - burned)


def drag_force(v: float, h: float, cd: float, area: float, opts: SimOptions) -> float:
    """Signed drag magnitude ``0.5 rho v|v| Cd A``; positive when moving up."""
    return 0.5 * air_density(h, opts) * v * abs(v) * cd * area


def derivatives(t: float, state, params: FlightParams, config: RocketConfig,
                opts: SimOptions) -> tuple[float, float]:
    h, v = state
    m = mass_at(t, config)
    force = (thrust(t, config.motor, params.alpha)
             - drag_force(v, h, params.cd, config.reference_area, opts)
             - m * opts.gravity)
    accel = force / m
    if h <= 0.0 and accel < 0.0:
        # resting on the pad
        return 0.0, 0.0
    return v, accel


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                22 / 525, -1 / 40)


class _System:
    __slots__ = ("cd_area", "alpha", "dry", "prop", "impulse", "peak", "t_ramp",
                 "t_decay", "t_burn", "g", "rho0", "inv_H")

    def __init__(self, params: FlightParams, config: RocketConfig, opts: SimOptions):
        motor = config.motor
        self.cd_area = 0.5 * params.cd * config.reference_area
        self.alpha = params.alpha
        self.dry = config.dry_mass
        self.prop = motor.propellant_mass
        self.impulse = motor.total_impulse
        self.peak = motor.peak_thrust
        self.t_ramp, self.t_decay, self.t_burn = motor.breakpoints
        self.g = opts.gravity
        self.rho0 = opts.sea_level_density
        self.inv_H = 1.0 / opts.scale_height

    def mass(self, t):
        if t >= self.t_burn:
            return self.dry
        if t <= 0.0:
            return self.dry + self.prop
        if t < self.t_ramp:
            j = 0.5 * self.peak * t * t / self.t_ramp
        elif t <= self.t_decay:
            j = self.peak * (0.5 * self.t_ramp + t - self.t_ramp)
        else:
            r = self.t_burn - t
            j = self.impulse - 0.5 * self.peak * r * r / (self.t_burn - self.t_decay)
        return self.dry + self.prop * (1.0 - j / self.impulse)

    def accel(self, t, h, v):
        # inlined version of derivatives(); kept bit-compatible with it
        m = self.mass(t)
        if t <= 0.0 or t >= self.t_burn:
            T = 0.0
        elif t < self.t_ramp:
            T = self.peak * t / self.t_ramp
        elif t <= self.t_decay:
            T = self.peak
        else:
            T = self.peak * (self.t_burn - t) / (self.t_burn - self.t_decay)
        rho = self.rho0 * math.exp(-(h if h > 0.0 else 0.0) * self.inv_H)
        a = (self.alpha * T - rho * v * abs(v) * self.cd_area - m * self.g) / m
        if h <= 0.0 and a < 0.0:
            return 0.0, 0.0
        return v, a

    def step(self, t, h, v, k1h, k1v, dt):
        """One Dormand-Prince step.  Returns (h5, v5, k7h, k7v, err_h, err_v)."""
        f = self.accel
        k2h, k2v = f(t + _C2 * dt, h + dt * _A21 * k1h, v + dt * _A21 * k1v)
        k3h, k3v = f(t + _C3 * dt, h + dt * (_A31 * k1h + _A32 * k2h),
                     v + dt * (_A31 * k1v + _A32 * k2v))
        k4h, k4v = f(t + _C4 * dt, h + dt * (_A41 * k1h + _A42 * k2h + _A43 * k3h),
                     v + dt * (_A41 * k1v + _A42 * k2v + _A43 * k3v))
        k5h, k5v = f(t + _C5 * dt,
                     h + dt * (_A51 * k1h + _A52 * k2h + _A53 * k3h + _A54 * k4h),
                     v + dt * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v))
        k6h, k6v = f(t + dt,
                     h + dt * (_A61 * k1h + _A62 * k2h + _A63 * k3h + _A64 * k4h + _A65 * k5h),
                     v + dt * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v))
        h5 = h + dt * (_B1 * k1h + _B3 * k3h + _B4 * k4h + _B5 * k5h + _B6 * k6h)
        v5 = v + dt * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
        k7h, k7v = f(t + dt, h5, v5)
        eh = dt * (_E1 * k1h + _E3 * k3h + _E4 * k4h + _E5 * k5h + _E6 * k6h + _E7 * k7h)
        ev = dt * (_E1 * k1v + _E3 * k3v + _E4 * k4v + _E5 * k5v + _E6 * k6v + _E7 * k7v)
        return h5, v5, k7h, k7v, eh, ev


def simulate_flight(params: FlightParams, config: RocketConfig,
                    opts: SimOptions | None = None) -> SimResult:
    """Integrate from rest on the pad to apogee and return the flight summary.

    Raises NoLiftoffError if the velocity never turns positive by one second
    after burnout, and NonFiniteStateError if the state blows up.
    """
    opts = opts or SimOptions()
    if opts.max_time <= config.motor.burn_time:
        raise ValueError("max_time must exceed the motor burn time")
    sys = _System(params, config, opts)
    breakpoints = [b for b in config.motor.breakpoints if b > 0.0]
    liftoff_deadline = config.motor.burn_time + 1.0
    rtol, atol = opts.rel_tol, opts.abs_tol

    t, h, v = 0.0, 0.0, 0.0
    k1h, k1v = sys.accel(t, h, v)
    traj = [(t, h, v, sys.mass(t))]
    dt = opts.initial_step
    lifted = False

    while True:
        if t >= opts.max_time:
            raise SimulationError(f"no apogee before max_time={opts.max_time} s")
        if not lifted and t >= liftoff_deadline:
            result = SimResult(0.0, 0.0, np.array(traj))
            raise NoLiftoffError(
                f"no liftoff: thrust never exceeded weight (alpha={params.alpha})", result)

        step = min(dt, opts.max_step, opts.max_time - t)
        # land exactly on thrust-curve kinks
        for b in breakpoints:
            if t < b < t + step:
                step = b - t
                break

        h5, v5, k7h, k7v, eh, ev = sys.step(t, h, v, k1h, k1v, step)
        if not (math.isfinite(h5) and math.isfinite(v5)):
            raise NonFiniteStateError(f"non-finite state at t={t:.6g} s")
        sh = atol + rtol * max(abs(h), abs(h5))
        sv = atol + rtol * max(abs(v), abs(v5))
        err = math.sqrt(0.5 * ((eh / sh) ** 2 + (ev / sv) ** 2))

        if err > 1.0:
            dt = step * max(0.2, opts.safety * err ** -0.2)
            continue

        if lifted and v5 <= 0.0:
            t_evt, h_evt, v_evt = _locate_apogee(sys, t, h, v, k1h, k1v, step,
                                                 opts.event_time_tol)
            traj.append((t_evt, h_evt, v_evt, sys.mass(t_evt)))
            return SimResult(max(h_evt, 0.0), t_evt, np.array(traj))

        t += step
        h, v, k1h, k1v = h5, v5, k7h, k7v
        if v > 0.0:
            lifted = True
        traj.append((t, h, v, sys.mass(t)))
        growth = 5.0 if err == 0.0 else min(5.0, max(0.2, opts.safety * err ** -0.2))
        dt = step * growth


def _locate_apogee(sys: _System, t, h, v, k1h, k1v, step, tol):
    lo, hi = 0.0, step
    h_best, v_best = h, v
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        hm, vm = sys.step(t, h, v, k1h, k1v, mid)[:2]
        if vm > 0.0:
            lo, h_best, v_best = mid, hm, vm
        else:
            hi = mid
    return t + lo, h_best, v_best
