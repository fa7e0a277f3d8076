"""Two-state EKF (pitch, gyro bias) fusing gyro, accelerometer and camera data."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import chi2

from .params import GRAVITY

GATE_CONFIDENCE = 0.997


@dataclass(frozen=True)
class EkfNoiseConfig:
    process_theta_std: float = 1e-3
    process_bias_std: float = 3e-4
    accel_meas_std: float = 0.3
    camera_meas_std: float = np.deg2rad(0.5)
    initial_theta_std: float = np.deg2rad(10.0)
    initial_bias_std: float = 0.05

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class EkfEstimate:
    theta_hat: float
    bias_hat: float
    covariance: np.ndarray
    last_update_time: float = 0.0
    status: str = "init"


def initial_estimate(theta0, cfg, time=0.0, bias0=0.0):
    P = np.diag([cfg.initial_theta_std**2, cfg.initial_bias_std**2])
    return EkfEstimate(float(theta0), float(bias0), P, time)


def predict(est, y_g, dt, cfg, time=None):
    """Propagate with the bias-corrected gyro rate over ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = np.array([[1.0, -dt], [0.0, 1.0]])
    Q = np.diag([cfg.process_theta_std**2, cfg.process_bias_std**2])
    P = F @ est.covariance @ F.T + Q
    theta = est.theta_hat + (y_g - est.bias_hat) * dt
    t = est.last_update_time + dt if time is None else time
    return EkfEstimate(theta, est.bias_hat, 0.5 * (P + P.T), t, "predicted")


def _joseph_update(est, innovation, H, R, time):
    P = est.covariance
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    x = np.array([est.theta_hat, est.bias_hat]) + K @ innovation
    I_KH = np.eye(2) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    t = est.last_update_time if time is None else time
    return float(x[0]), float(x[1]), 0.5 * (P + P.T), t


def accel_model(theta, gravity=GRAVITY):
    """Expected accelerometer reading for a static capsule at ``theta``."""
    return np.array([gravity * np.sin(theta), gravity * np.cos(theta)])


def accel_jacobian(theta, gravity=GRAVITY):
    return np.array([[gravity * np.cos(theta), 0.0], [-gravity * np.sin(theta), 0.0]])


def update_accel(est, a_x, a_z, cfg, gravity=GRAVITY, time=None, gate=GATE_CONFIDENCE):
    """Gravity-referenced correction; readings failing the chi-square gate are ignored.

    A rejected reading returns the estimate unchanged apart from
    ``status == "gated"``.
    """
    H = accel_jacobian(est.theta_hat, gravity)
    R = np.eye(2) * cfg.accel_meas_std**2
    innovation = np.array([a_x, a_z]) - accel_model(est.theta_hat, gravity)
    S = H @ est.covariance @ H.T + R
    if gate is not None:
        d2 = innovation @ np.linalg.solve(S, innovation)
        if d2 > chi2.ppf(gate, df=2):
            return replace(est, status="gated")
    theta, bias, P, t = _joseph_update(est, innovation, H, R, time)
    return EkfEstimate(theta, bias, P, t, "accel")


def update_camera(est, y_cam, cfg, time=None):
    """Absolute pitch correction from a fresh camera sample."""
    H = np.array([[1.0, 0.0]])
    R = np.array([[cfg.camera_meas_std**2]])
    innovation = np.array([y_cam - est.theta_hat])
    theta, bias, P, t = _joseph_update(est, innovation, H, R, time)
    return EkfEstimate(theta, bias, P, t, "camera")


def estimate(est):
    """``(theta_hat, bias_hat)`` of the current estimate."""
    return est.theta_hat, est.bias_hat
