"""Nonlinear pitch dynamics about the rolling contact with a first-order current driver."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .actuation import DomainError, tau_fe

THETA_MIN = 0.0
THETA_MAX = np.pi / 2
MAX_DT = 5e-3


class IntegrationError(FloatingPointError):
    """The integrator produced a non-finite state."""


@dataclass(frozen=True)
class PlantState:
    theta: float
    omega: float = 0.0
    current: float = 0.0
    gyro_bias: float = 0.0
    time: float = 0.0


def gravity_torque(params, theta):
    """Gravity moment about the contact [N m], ``-m g L cos(theta)``."""
    return -params.gravity_moment * np.cos(theta)


def _accel(theta, omega, current, params, table):
    tau = current * tau_fe(table, min(max(theta, THETA_MIN), THETA_MAX), params)
    return (tau + gravity_torque(params, theta) - params.viscous_damping * omega) / params.inertia_contact


def dynamics_rhs(state, u_cmd, params, table):
    """Time derivatives ``(dtheta, domega, di)`` of the continuous plant state."""
    if not THETA_MIN - 1e-12 <= state.theta <= THETA_MAX + 1e-12:
        raise DomainError(f"theta={state.theta!r} outside [0, pi/2]")
    domega = _accel(state.theta, state.omega, state.current, params, table)
    di = (u_cmd - state.current) / params.driver_time_constant
    return state.omega, domega, di


def apply_contact_limits(state):
    """Inelastic stops at lying flat (0) and upright (pi/2)."""
    if state.theta < THETA_MIN:
        return replace(state, theta=THETA_MIN, omega=max(state.omega, 0.0))
    if state.theta > THETA_MAX:
        return replace(state, theta=THETA_MAX, omega=min(state.omega, 0.0))
    return state


def step(state, u_cmd, dt, params, table):
    """Advance one fixed step with classical RK4, then project onto the contact limits.

    Torque-map lookups inside the Runge-Kutta stages clamp ``theta`` to the
    table range; the stage states themselves are left untouched.
    """
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt={dt!r} outside (0, {MAX_DT}]")
    tc = params.driver_time_constant
    x = np.array([state.theta, state.omega, state.current])

    def f(s):
        return np.array([s[1], _accel(s[0], s[1], s[2], params, table), (u_cmd - s[2]) / tc])

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    for name, value in zip(("theta", "omega", "current"), x):
        if not np.isfinite(value):
            raise IntegrationError(f"non-finite {name} at t={state.time + dt:.6f} s")
    new = replace(state, theta=float(x[0]), omega=float(x[1]), current=float(x[2]), time=state.time + dt)
    return apply_contact_limits(new)


def mechanical_energy(params, state):
    """Kinetic plus gravitational energy about the contact."""
    return 0.5 * params.inertia_contact * state.omega**2 + params.gravity_moment * np.sin(state.theta)


def equilibrium_current(params, table, theta):
    """Current balancing gravity at ``theta``, ``m g L cos(theta) / tau_FE(theta)``."""
    tau = tau_fe(table, theta, params)
    if tau == 0.0:
        raise ZeroDivisionError(f"torque map vanishes at theta={theta!r}")
    return params.gravity_moment * np.cos(theta) / tau


def equilibrium_current_bisect(params, table, theta, bracket=(-5.0, 5.0)):
    """Equilibrium current from root-finding on the net static torque.

    Independent of the closed form in :func:`equilibrium_current`; used where
    the torque balance should be solved rather than rearranged.
    """

    def net(i):
        return i * tau_fe(table, theta, params) + gravity_torque(params, theta)

    return brentq(net, *bracket, xtol=1e-14, rtol=1e-14)
