"""Lumped electro-mechanical model of a single F-HASEL actuator.

Displacement ``q`` is the contraction of the actuator (0 = relaxed, ``q_max`` =
full stroke). The HV electrodes pull with a force quadratic in the driving
voltage, a linear spring/damper and the external tensile load pull back, and
the capacitance of the LV sensing electrodes follows the displacement through
a first-order lag (fluid redistribution), which is what produces the
rate-dependent hysteresis seen by the sensing circuit.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np
from numba import njit
from scipy.optimize import brentq

G = 9.81  # m/s^2


class ModelError(ValueError):
    """Raised for inputs outside the physical domain of a model."""


@dataclass(frozen=True)
class ActuatorParams:
    c_full: float = 200e-12
    c_empty: float = 50e-12
    q_max: float = 6e-3
    r_e: float = 100e3
    mass: float = 0.0478
    stiffness: float = 400.0
    damping: float = 6.0
    k_f: float = 0.119307
    tau_c: float = 1.2e-3
    c_couple: float = 4.47e-12

    def __post_init__(self):
        vals = asdict(self)
        if not all(math.isfinite(v) for v in vals.values()):
            raise ModelError(f"non-finite actuator parameter in {vals}")
        if not self.c_full > self.c_empty > 0:
            raise ModelError("need c_full > c_empty > 0")
        if self.q_max <= 0:
            raise ModelError("q_max must be positive")
        if self.r_e <= 0:
            raise ModelError("r_e must be positive")
        for name in ("mass", "stiffness", "damping", "k_f", "tau_c", "c_couple"):
            if vals[name] < 0:
                raise ModelError(f"{name} must be >= 0")
        if self.mass == 0 and self.damping == 0 and self.stiffness == 0:
            raise ModelError("massless actuator needs damping or stiffness")

    def with_(self, **changes) -> "ActuatorParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ActuatorState:
    q: float = 0.0
    q_dot: float = 0.0
    c_e: float | None = None
    t: float = 0.0


@dataclass(frozen=True)
class ActuatorTrajectory:
    """Sampled actuator response, one entry per simulation step."""

    t: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray
    c_e: np.ndarray

    @property
    def final_state(self) -> ActuatorState:
        return ActuatorState(float(self.q[-1]), float(self.q_dot[-1]), float(self.c_e[-1]), float(self.t[-1]))


def capacitance_of_displacement(q, params: ActuatorParams):
    """Sensing-electrode capacitance, affine and decreasing in displacement."""
    qa = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(qa)) or np.any(qa < 0) or np.any(qa > params.q_max):
        raise ModelError(f"displacement outside [0, {params.q_max}] m")
    c = params.c_full - (params.c_full - params.c_empty) * (qa / params.q_max)
    return float(c) if np.ndim(q) == 0 else c


def displacement_of_capacitance(c, params: ActuatorParams):
    """Inverse of :func:`capacitance_of_displacement`."""
    ca = np.asarray(c, dtype=float)
    q = (params.c_full - ca) / (params.c_full - params.c_empty) * params.q_max
    return float(q) if np.ndim(c) == 0 else q


def electrostatic_force(v_d, params: ActuatorParams):
    """Zipping force in N for a driving voltage in kV; even in the voltage."""
    v = np.asarray(v_d, dtype=float)
    f = params.k_f * (v * v)
    return float(f) if np.ndim(v_d) == 0 else f


def static_equilibrium(v_d: float, f_ext: float, params: ActuatorParams) -> float:
    """Displacement at rest for constant drive and load, clamped to the stroke."""
    net = electrostatic_force(v_d, params) - f_ext
    if params.stiffness == 0:
        return params.q_max if net > 0 else 0.0
    return min(max(net / params.stiffness, 0.0), params.q_max)


def calibrate_force_coefficient(
    params: ActuatorParams,
    v_d: float = 4.0,
    load_mass: float = 0.0478,
    fraction: float = 0.6,
) -> float:
    """Find k_f such that the static balance at ``v_d`` lands at ``fraction`` of the stroke.

    Solves ``k_f * v_d**2 = stiffness * q + load_mass * g`` by bracketing on k_f.
    """
    if not 0 < fraction < 1:
        raise ModelError("fraction must be in (0, 1)")
    if v_d == 0:
        raise ModelError("cannot calibrate the force coefficient at zero drive")
    q_target = fraction * params.q_max
    f_load = load_mass * G

    def residual(kf):
        return kf * v_d * v_d - params.stiffness * q_target - f_load

    hi = 1.0
    while residual(hi) <= 0:
        hi *= 10.0
    return brentq(residual, 0.0, hi, xtol=1e-15, rtol=1e-14)


@njit(cache=True)
def _integrate(q0, qd0, ce0, v, f, dt, mass, k, b, kf, q_max, c_full, c_empty, tau):
    n = v.shape[0]
    q_out = np.empty(n)
    qd_out = np.empty(n)
    ce_out = np.empty(n)
    q = q0
    qd = qd0
    ce = ce0
    alpha = 1.0 - math.exp(-dt / tau) if tau > 0.0 else 1.0
    span = c_full - c_empty
    hb = 0.5 * dt * b / mass if mass > 0.0 else 0.0
    for i in range(n):
        drive = kf * (v[i] * v[i]) - f[i]
        if mass > 0.0:
            # damping averaged over the step keeps the discrete energy
            # 0.5*m*v_n**2 + 0.5*k*q_n*q_(n-1) non-increasing when unforced
            qd = (qd * (1.0 - hb) + dt * (drive - k * q) / mass) / (1.0 + hb)
            q = q + dt * qd
        elif b > 0.0:
            q_new = (q + dt * drive / b) / (1.0 + dt * k / b)
            qd = (q_new - q) / dt
            q = q_new
        else:
            q_new = drive / k
            qd = (q_new - q) / dt
            q = q_new
        if q < 0.0:
            q = 0.0
            qd = 0.0
        elif q > q_max:
            q = q_max
            qd = 0.0
        target = c_full - span * (q / q_max)
        ce = ce + (target - ce) * alpha
        q_out[i] = q
        qd_out[i] = qd
        ce_out[i] = ce
    return q_out, qd_out, ce_out


def _check_step(dt: float, params: ActuatorParams):
    if not (math.isfinite(dt) and dt > 0):
        raise ModelError("dt must be positive and finite")
    if params.tau_c > 0 and dt > params.tau_c / 10 * (1 + 1e-12):
        raise ModelError(f"dt={dt} exceeds tau_c/10={params.tau_c / 10}")


def _run(state: ActuatorState, v: np.ndarray, f: np.ndarray, dt: float, params: ActuatorParams):
    c0 = state.c_e
    if c0 is None:
        c0 = capacitance_of_displacement(state.q, params)
    p = params
    return _integrate(
        float(state.q), float(state.q_dot), float(c0), v, f, dt,
        p.mass, p.stiffness, p.damping, p.k_f, p.q_max, p.c_full, p.c_empty, p.tau_c,
    )


def step_dynamics(state: ActuatorState, v_d: float, f_ext: float, dt: float, params: ActuatorParams) -> ActuatorState:
    """Advance one semi-implicit Euler step (damping averaged over the step) under drive ``v_d`` (kV) and tensile load ``f_ext`` (N)."""
    for name, val in (("q", state.q), ("q_dot", state.q_dot), ("v_d", v_d), ("f_ext", f_ext)):
        if not math.isfinite(val):
            raise ModelError(f"non-finite {name}")
    _check_step(dt, params)
    q, qd, ce = _run(state, np.array([float(v_d)]), np.array([float(f_ext)]), dt, params)
    return ActuatorState(float(q[0]), float(qd[0]), float(ce[0]), state.t + dt)


def simulate_actuator(
    v_d,
    f_ext,
    fs: float,
    params: ActuatorParams,
    state0: ActuatorState | None = None,
    c_drift: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ActuatorTrajectory:
    """Run the actuator over a sampled drive waveform.

    ``f_ext`` may be a scalar or an array matching ``v_d``. ``c_drift`` is an
    optional hook returning an additive capacitance offset per sample (for
    charge-retention experiments); it is off by default.
    """
    v = np.ascontiguousarray(v_d, dtype=float)
    f = np.broadcast_to(np.asarray(f_ext, dtype=float), v.shape).astype(float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(f))):
        raise ModelError("non-finite drive or load")
    dt = 1.0 / fs
    _check_step(dt, params)
    state0 = state0 or ActuatorState()
    q, qd, ce = _run(state0, v, f, dt, params)
    t = state0.t + dt * np.arange(1, v.size + 1)
    if c_drift is not None:
        ce = np.clip(ce + np.asarray(c_drift(t), dtype=float), params.c_empty, params.c_full)
    return ActuatorTrajectory(t, q, qd, ce)
