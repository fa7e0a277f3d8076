"""Multi-rate sensor models: 50 Hz gyro/accelerometer and a sample-and-hold camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRIORITY = {"camera": 0, "imu": 1, "control": 2}


@dataclass(frozen=True)
class SensorConfig:
    imu_rate: float = 50.0
    camera_rate: float = 30.0
    gyro_noise_std: float = 0.02
    gyro_bias_walk_std: float = 0.002
    accel_noise_std: float = 0.1
    camera_noise_std: float = np.deg2rad(0.5)
    initial_gyro_bias: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.imu_rate > 0 and self.camera_rate > 0):
            raise ValueError("sensor rates must be positive")
        for name in ("gyro_noise_std", "gyro_bias_walk_std", "accel_noise_std", "camera_noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class Gyro:
    y_g: float
    timestamp: float


@dataclass(frozen=True)
class Accel:
    a_x: float
    a_z: float
    timestamp: float


@dataclass(frozen=True)
class Camera:
    y_cam: float
    timestamp: float


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    index: int


def sensor_rngs(seed):
    """Independent generators for gyro, accelerometer and camera noise."""
    children = np.random.SeedSequence(seed).spawn(3)
    return {name: np.random.default_rng(s) for name, s in zip(("gyro", "accel", "camera"), children)}


def sample_gyro(state, cfg, rng, dt=None):
    """Gyro reading ``omega + b_g + n_g`` and the bias after one random-walk increment.

    Returns ``(Gyro, new_bias)``; ``dt`` defaults to one IMU period.
    """
    dt = 1.0 / cfg.imu_rate if dt is None else dt
    y = state.omega + state.gyro_bias + rng.normal(0.0, cfg.gyro_noise_std)
    bias = state.gyro_bias + rng.normal(0.0, cfg.gyro_bias_walk_std * np.sqrt(dt))
    return Gyro(float(y), state.time), float(bias)


def linear_specific_force(params, omega, theta_ddot):
    """Body-frame ``(a_x, a_z)`` of the centre of mass rotating about the contact."""
    L = params.lever_arm
    return -L * omega**2, L * theta_ddot


def sample_accel(state, theta_ddot, params, cfg, rng):
    """Accelerometer ``g (sin, cos) + a_lin + n_a`` in the capsule body frame."""
    lin_x, lin_z = linear_specific_force(params, state.omega, theta_ddot)
    g = params.gravity
    noise = rng.normal(0.0, cfg.accel_noise_std, size=2)
    ax = g * np.sin(state.theta) + lin_x + noise[0]
    az = g * np.cos(state.theta) + lin_z + noise[1]
    return Accel(float(ax), float(az), state.time)


def sample_camera(state, cfg, rng):
    """Camera pitch reading ``theta + v_cam``."""
    return Camera(float(state.theta + rng.normal(0.0, cfg.camera_noise_std)), state.time)


class CameraHold:
    """Sample-and-hold of camera readings; ``fresh`` marks a new sample since the last read."""

    def __init__(self):
        self.value = None
        self.timestamp = None
        self.history = []
        self.fresh = False

    def push(self, sample):
        self.value = sample.y_cam
        self.timestamp = sample.timestamp
        self.history.append((sample.timestamp, sample.y_cam))
        del self.history[:-3]
        self.fresh = True

    def take(self):
        fresh, self.fresh = self.fresh, False
        return self.value, fresh

    def rate_estimate(self):
        """First differences of the last three samples, averaged (0 until three exist)."""
        if len(self.history) < 3:
            return 0.0
        (t0, y0), _, (t2, y2) = self.history
        return (y2 - y0) / (t2 - t0)


def _ticks(rate, duration, kind):
    n = int(np.ceil(duration * rate - 1e-9))
    return [Event(k / rate, kind, k) for k in range(n)]


def schedule(cfg, duration, control_rate=None, control_start=0.0):
    """Time-ordered IMU, camera and (optionally) control ticks in ``[0, duration)``.

    Simultaneous ticks are ordered camera, IMU, control. Control ticks fall at
    ``control_start + k / control_rate``.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    events = _ticks(cfg.camera_rate, duration, "camera") + _ticks(cfg.imu_rate, duration, "imu")
    if control_rate is not None:
        span = duration - control_start
        if span > 0:
            events += [
                Event(control_start + e.time, "control", e.index)
                for e in _ticks(control_rate, span, "control")
            ]
    events.sort(key=lambda e: (e.time, PRIORITY[e.kind]))
    return events
