"""Successive-linearization MPC, the on-off baseline and coil current allocation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .actuation import ActuationMode, tau_fe
from .plant import THETA_MAX, THETA_MIN, equilibrium_current_bisect
from .qp import make_qp, solve_qp

DERIVATIVE_STEP = np.deg2rad(0.5)


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 12
    sample_time: float = 0.125
    q_theta: float = 100.0
    q_omega: float = 1.0
    r: float = 0.1
    s: float = 20.0
    u_max: float = 1.0
    du_max: float = 0.3
    qp_tolerance: float = 1e-9
    qp_max_iters: int = 200

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not (self.sample_time > 0 and self.u_max > 0 and self.du_max > 0):
            raise ValueError("sample_time, u_max and du_max must be positive")
        if min(self.q_omega, self.r, self.s) < 0 or not self.q_theta > 0:
            raise ValueError("weights must be non-negative with q_theta > 0")


@dataclass(frozen=True)
class LinearModel:
    """Discrete affine model ``x+ = A x + B u + d`` valid near ``valid_at_theta``."""

    A: np.ndarray
    B: np.ndarray
    d: np.ndarray
    valid_at_theta: float

    def predict(self, x, u):
        return self.A @ x + self.B * u + self.d


def tau_fe_slope(table, theta, params, step=DERIVATIVE_STEP):
    """Central difference of the interpolated torque map, one-sided at the grid ends."""
    lo = max(theta - step, THETA_MIN)
    hi = min(theta + step, THETA_MAX)
    return (tau_fe(table, hi, params) - tau_fe(table, lo, params)) / (hi - lo)


def continuous_jacobians(theta_op, i_op, table, params, omega_op=0.0):
    """``(A_c, B_c, c_c)`` with ``f(x, u) = A_c x + B_c u + c_c`` exact at the operating point."""
    inertia = params.inertia_contact
    tau = tau_fe(table, theta_op, params)
    mgl = params.gravity_moment
    inv_tc = 1.0 / params.driver_time_constant
    A = np.array(
        [
            [0.0, 1.0, 0.0],
            [(i_op * tau_fe_slope(table, theta_op, params) + mgl * np.sin(theta_op)) / inertia,
             -params.viscous_damping / inertia, tau / inertia],
            [0.0, 0.0, -inv_tc],
        ]
    )
    B = np.array([0.0, 0.0, inv_tc])
    x_op = np.array([theta_op, omega_op, i_op])
    f_op = np.array(
        [
            omega_op,
            (i_op * tau - mgl * np.cos(theta_op) - params.viscous_damping * omega_op) / inertia,
            -inv_tc * i_op,
        ]
    )
    return A, B, f_op - A @ x_op


def linearize(theta_op, i_op, table, params, sample_time, omega_op=0.0):
    """Zero-order-hold discretization of the pitch model about ``(theta_op, omega_op, i_op)``."""
    A_c, B_c, c_c = continuous_jacobians(theta_op, i_op, table, params, omega_op)
    aug = np.zeros((5, 5))
    aug[:3, :3] = A_c
    aug[:3, 3] = B_c
    aug[:3, 4] = c_c
    phi = expm(aug * sample_time)
    return LinearModel(phi[:3, :3], phi[:3, 3], phi[:3, 4], float(theta_op))


def prediction_matrices(model, x0, horizon):
    """Stacked ``x_1..x_N = Phi_free + Gamma U`` for the affine model."""
    n = 3
    free = np.empty((horizon, n))
    gamma = np.zeros((horizon, n, horizon))
    x = np.asarray(x0, dtype=float)
    Apow_B = [model.B]
    for j in range(horizon):
        x = model.A @ x + model.d
        free[j] = x
        if j:
            Apow_B.append(model.A @ Apow_B[-1])
    for j in range(horizon):
        for l in range(j + 1):
            gamma[j, :, l] = Apow_B[j - l]
    return free, gamma


def condense(model, x0, theta_ref, cfg, u_prev):
    """Eliminate predicted states; returns a :class:`QpProblem` in the input sequence.

    Cost: sum over predicted steps 1..N of ``q_theta (theta - ref)^2 + q_omega omega^2``,
    plus ``r u_j^2`` over the N inputs and ``s (u_{j+1} - u_j)^2`` over the
    N-1 in-horizon input changes.
    """
    N = cfg.horizon
    free, gamma = prediction_matrices(model, x0, N)
    g_theta = gamma[:, 0, :]
    g_omega = gamma[:, 1, :]
    e_theta = free[:, 0] - theta_ref
    e_omega = free[:, 1]
    D = np.diff(np.eye(N), axis=0)  # (N-1, N)

    H = 2 * (cfg.q_theta * g_theta.T @ g_theta + cfg.q_omega * g_omega.T @ g_omega
             + cfg.r * np.eye(N) + cfg.s * D.T @ D)
    f = 2 * (cfg.q_theta * g_theta.T @ e_theta + cfg.q_omega * g_omega.T @ e_omega)
    constant = cfg.q_theta * e_theta @ e_theta + cfg.q_omega * e_omega @ e_omega
    return make_qp(H, f, u_prev, cfg.u_max, cfg.du_max, constant)


def rollout_cost(model, x0, theta_ref, cfg, U):
    """MPC cost of ``U`` evaluated by simulating the affine model step by step."""
    x = np.asarray(x0, dtype=float)
    cost = 0.0
    for j, u in enumerate(U):
        x = model.predict(x, u)
        cost += cfg.q_theta * (x[0] - theta_ref) ** 2 + cfg.q_omega * x[1] ** 2 + cfg.r * u**2
        if j + 1 < len(U):
            cost += cfg.s * (U[j + 1] - u) ** 2
    return cost


@dataclass(frozen=True)
class MpcOutput:
    u_cmd: float
    plan: np.ndarray
    status: str
    iterations: int

    def shifted_plan(self):
        """Warm start for the next call: drop the applied input, repeat the last."""
        return np.append(self.plan[1:], self.plan[-1])


def mpc_step(theta_hat, omega_hat, i_hat, theta_ref, u_prev, table, params, cfg, warm_start=None):
    """One receding-horizon update; returns the first input of the optimal plan.

    ``warm_start`` may be the previous :class:`MpcOutput` (its plan is shifted)
    or an explicit input sequence.
    """
    if isinstance(warm_start, MpcOutput):
        warm_start = warm_start.shifted_plan()
    theta_lin = min(max(theta_hat, THETA_MIN), THETA_MAX)
    model = linearize(theta_lin, i_hat, table, params, cfg.sample_time, omega_hat)
    qp = condense(model, np.array([theta_hat, omega_hat, i_hat]), theta_ref, cfg, u_prev)
    U, info = solve_qp(qp, tol=cfg.qp_tolerance, max_iter=cfg.qp_max_iters, warm_start=warm_start)
    u = float(np.clip(U[0], -cfg.u_max, cfg.u_max))
    u = float(np.clip(u, u_prev - cfg.du_max, u_prev + cfg.du_max))
    return MpcOutput(u, U, info.status, info.iterations)


@dataclass(frozen=True)
class OnOffConfig:
    current: float


def onoff_config(table, params, theta_ref):
    """Fixed on-off current: the static equilibrium current at the target angle."""
    return OnOffConfig(equilibrium_current_bisect(params, table, theta_ref))


def onoff_step(elapsed, cfg, u_prev=None, du_max=None):
    """Open-loop step to the fixed current.

    With ``u_prev`` and ``du_max`` given the step is taken as a ramp limited to
    ``du_max`` per control tick, so the baseline obeys the same slew bound as
    the MPC.
    """
    if elapsed < 0:
        return 0.0 if u_prev is None else u_prev
    if u_prev is None or du_max is None:
        return cfg.current
    return float(np.clip(cfg.current, u_prev - du_max, u_prev + du_max))


def allocate_coils(mode, u_cmd, u_max=1.0):
    """Per-coil currents for a scalar command under the given actuation pattern."""
    if abs(u_cmd) > u_max + 1e-12:
        raise ValueError(f"|u_cmd|={abs(u_cmd):g} A exceeds u_max={u_max:g} A")
    return ActuationMode.parse(mode).scales * u_cmd
