"""Capsule rigid-body parameters and geometry constants shared across modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81
MU0 = 4e-7 * np.pi

# capsule shell
CAPSULE_LENGTH = 26e-3
CAPSULE_RADIUS = 6e-3
CAPSULE_MASS = 7.42e-3

# N52 cylinder, 3/8" diameter x 3/16" long, 0.5 mm clearance from each end
MAGNET_DIAMETER = 0.375 * 25.4e-3
MAGNET_LENGTH = 0.1875 * 25.4e-3
MAGNET_END_CLEARANCE = 0.5e-3
N52_REMANENCE = 1.45


def magnet_dipole_moment(remanence=N52_REMANENCE, diameter=MAGNET_DIAMETER, length=MAGNET_LENGTH):
    """Dipole moment [A m^2] of a uniformly magnetized cylinder, ``Br V / mu0``."""
    volume = np.pi * (diameter / 2) ** 2 * length
    return remanence * volume / MU0


def default_magnet_offsets():
    """Body-frame magnet centres relative to the end-face contact point."""
    near = MAGNET_END_CLEARANCE + MAGNET_LENGTH / 2
    far = CAPSULE_LENGTH - near
    return (np.array([near, 0.0, 0.0]), np.array([far, 0.0, 0.0]))


def cylinder_inertia_about_contact(mass, radius, length, lever_arm):
    """Transverse inertia of a solid cylinder shifted to the contact point."""
    return mass * (3 * radius**2 + length**2) / 12 + mass * lever_arm**2


@dataclass(frozen=True)
class CapsuleParams:
    """Lumped pitch-plane parameters of the capsule.

    ``inertia_contact`` defaults to the solid-cylinder value about the contact
    point when left as ``None``.
    """

    mass: float = CAPSULE_MASS
    lever_arm: float = CAPSULE_LENGTH / 2
    inertia_contact: float | None = None
    magnet_offsets: tuple = field(default_factory=default_magnet_offsets)
    driver_time_constant: float = 0.02
    viscous_damping: float = 1e-6
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.inertia_contact is None:
            inertia = cylinder_inertia_about_contact(
                self.mass, CAPSULE_RADIUS, CAPSULE_LENGTH, self.lever_arm
            )
            object.__setattr__(self, "inertia_contact", inertia)
        offsets = tuple(np.asarray(r, dtype=float).reshape(3) for r in self.magnet_offsets)
        object.__setattr__(self, "magnet_offsets", offsets)
        for name in ("mass", "lever_arm", "driver_time_constant", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.viscous_damping < 0:
            raise ValueError("viscous_damping must be non-negative")
        if self.inertia_contact < self.mass * self.lever_arm**2 * (1 - 1e-12):
            raise ValueError("inertia_contact is below the parallel-axis bound m*L^2")

    @property
    def gravity_moment(self):
        """``m g L``, the peak gravity torque about the contact."""
        return self.mass * self.gravity * self.lever_arm
