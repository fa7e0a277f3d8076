"""Magnetic capsule pitch control: actuation maps, plant, sensors, EKF, MPC and harness."""

__version__ = "0.1.0"
