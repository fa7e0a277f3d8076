"""Angle-dependent per-ampere force/torque maps for the capsule magnets.

The field of each coil is evaluated with a filament model (Biot-Savart over a
stack of circular loops) scaled by ``core_gain`` to stand in for the iron core.
Magnet wrenches follow from the point-dipole model: torque ``m x B`` and force
``grad(m . B)``.

Frame conventions: world ``x`` is tangential to the surface, ``z`` is the
surface normal, and the pitch plane is ``y = 0``. A pitch angle ``theta``
rotates body ``x`` toward world ``z``. Planar moments are reported positive in
the direction of increasing ``theta``, i.e. ``r_x F_z - r_z F_x``.
"""

from __future__ import annotations

import enum
import weakref
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import MU0, CapsuleParams, default_magnet_offsets, magnet_dipole_moment

N_QUAD = 64
N_RADIAL = 4
N_AXIAL = 10
FD_STEP = 1e-4
PLANAR_TOL = 1e-3
SINGULAR_DISTANCE = 1e-6

# coil tips on the corners of a 75.2 mm square, axes along its diagonals
COIL_TIP_SPACING = 75.2e-3
CONE_HEIGHT = 57e-3


class SingularFieldError(ValueError):
    """Evaluation point lies on (or too close to) a current filament."""


class PlanarityError(AssertionError):
    """Out-of-plane force is not negligible; the scene is not mirror symmetric."""


class TableFormatError(ValueError):
    """Malformed actuation table file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """Pitch angle outside the tabulated range."""


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class CoilGeometry:
    center_position: np.ndarray
    axis_direction: np.ndarray
    turns: int = 1500
    bobbin_inner_radius: float = 0.010
    bobbin_outer_radius: float = 0.019
    axial_length: float = 0.100
    core_gain: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "center_position", np.asarray(self.center_position, dtype=float))
        axis = np.asarray(self.axis_direction, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("axis_direction must have unit norm")
        object.__setattr__(self, "axis_direction", axis)
        if not self.bobbin_inner_radius < self.bobbin_outer_radius:
            raise ValueError("bobbin_inner_radius must be smaller than bobbin_outer_radius")
        if self.turns <= 0 or self.core_gain <= 0 or self.axial_length <= 0:
            raise ValueError("turns, core_gain and axial_length must be positive")


@dataclass(frozen=True)
class MagnetSpec:
    body_frame_offset: np.ndarray
    dipole_moment_magnitude: float
    moment_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        offset = np.asarray(self.body_frame_offset, dtype=float)
        if offset[1] != 0.0:
            raise ValueError("magnet offset must lie in the pitch plane (y = 0)")
        if not self.dipole_moment_magnitude > 0:
            raise ValueError("dipole_moment_magnitude must be positive")
        axis = np.asarray(self.moment_axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("moment_axis must have unit norm")
        object.__setattr__(self, "body_frame_offset", offset)
        object.__setattr__(self, "moment_axis", axis)

    @property
    def body_moment(self):
        return self.dipole_moment_magnitude * self.moment_axis


class ActuationMode(enum.Enum):
    DIAGONAL = "diagonal"
    VERTICAL = "vertical"

    @property
    def scales(self):
        """Per-coil drive pattern, coils ordered (upper-right, upper-left, lower-right, lower-left)."""
        if self is ActuationMode.DIAGONAL:
            return np.array([1.0, 0.0, 0.0, 1.0])
        return np.array([1.0, 1.0, 1.0, 1.0])

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown actuation mode {value!r}; expected one of: {options}") from None


@dataclass(frozen=True)
class Scene:
    """Coils, magnets and the world position of the rolling contact."""

    coils: tuple
    magnets: tuple
    contact_point: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "coils", tuple(self.coils))
        object.__setattr__(self, "magnets", tuple(self.magnets))
        object.__setattr__(self, "contact_point", np.asarray(self.contact_point, dtype=float))
        if len(self.coils) != 4:
            raise ValueError("the actuator has exactly four coils")


@dataclass(frozen=True, eq=False)
class ActuationTable:
    """Per-ampere wrench samples on a pitch grid.

    ``rows`` has shape ``(n_angles, n_magnets, 3)`` holding ``(F_x, F_z, tau)``
    per magnet.
    """

    mode: ActuationMode
    angles: np.ndarray
    rows: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        rows = np.asarray(self.rows, dtype=float)
        if angles.ndim != 1 or angles.size < 2:
            raise ValueError("angle grid needs at least two samples")
        if np.any(np.diff(angles) <= 0):
            raise ValueError("angle grid must be strictly increasing")
        if abs(angles[0]) > 1e-12 or abs(angles[-1] - np.pi / 2) > 1e-12:
            raise ValueError("angle grid must span [0, pi/2]")
        if rows.ndim != 3 or rows.shape[0] != angles.size or rows.shape[2] != 3:
            raise ValueError("rows must have shape (n_angles, n_magnets, 3)")
        if not np.all(np.isfinite(rows)):
            raise ValueError("table rows must be finite")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        angles.setflags(write=False)
        rows.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "mode", ActuationMode.parse(self.mode))

    def with_alpha(self, alpha):
        return ActuationTable(self.mode, self.angles, self.rows, alpha)


# ---------------------------------------------------------------------------
# field evaluation
# ---------------------------------------------------------------------------


def _loop_basis(axis):
    """Orthonormal (u, v) spanning the loop plane with u x v = axis.

    ``u`` is chosen in the pitch plane whenever possible so that quadrature
    nodes are mirror symmetric about ``y = 0``.
    """
    axis = _unit(axis)
    ref = np.array([0.0, 1.0, 0.0])
    if abs(axis @ ref) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    v = ref - (ref @ axis) * axis
    v /= np.linalg.norm(v)
    u = np.cross(v, axis)
    return u, v


def _loops_field(points, centers, axis, radii, weights, n_quad=N_QUAD):
    """Field of many coaxial loops sharing ``axis``; ``weights`` are mu0*I/(4 pi) per loop."""
    points = np.asarray(points, dtype=float)
    u, v = _loop_basis(axis)
    phi = 2 * np.pi * np.arange(n_quad) / n_quad
    dphi = 2 * np.pi / n_quad
    ring = np.outer(np.cos(phi), u) + np.outer(np.sin(phi), v)  # (q, 3)
    tangent = np.outer(-np.sin(phi), u) + np.outer(np.cos(phi), v)

    # distance to each filament, checked before quadrature
    rel = points[..., None, :] - centers  # (..., loops, 3)
    z = rel @ axis
    rho = np.linalg.norm(rel - z[..., None] * axis, axis=-1)
    if np.any(np.hypot(rho - radii, z) < SINGULAR_DISTANCE):
        raise SingularFieldError("evaluation point lies on a current filament")

    src = centers[:, None, :] + radii[:, None, None] * ring  # (loops, q, 3)
    dl = (radii * dphi)[:, None, None] * tangent  # (loops, q, 3)
    r = points[..., None, None, :] - src  # (..., loops, q, 3)
    inv_r3 = np.sum(r * r, axis=-1) ** -1.5
    integrand = np.cross(dl, r) * inv_r3[..., None]
    return np.einsum("l,...lqk->...k", weights, integrand)


def loop_field(eval_point, loop_center, loop_axis, loop_radius, current, n_quad=N_QUAD):
    """Biot-Savart field [T] of a single circular filament.

    Uses the periodic trapezoidal rule with ``n_quad`` nodes around the loop.
    ``eval_point`` may be a single point or an array of shape ``(..., 3)``.
    Raises ``SingularFieldError`` within 1e-6 m of the wire.
    """
    centers = np.asarray(loop_center, dtype=float).reshape(1, 3)
    radii = np.array([float(loop_radius)])
    weights = np.array([MU0 * current / (4 * np.pi)])
    return _loops_field(eval_point, centers, _unit(loop_axis), radii, weights, n_quad)


def coil_filaments(coil, n_radial=N_RADIAL, n_axial=N_AXIAL):
    """Centres, radii and turn counts of the filament stack representing a winding."""
    dr = (coil.bobbin_outer_radius - coil.bobbin_inner_radius) / n_radial
    dz = coil.axial_length / n_axial
    radii = coil.bobbin_inner_radius + dr * (np.arange(n_radial) + 0.5)
    offsets = -coil.axial_length / 2 + dz * (np.arange(n_axial) + 0.5)
    rr, zz = np.meshgrid(radii, offsets, indexing="ij")
    centers = coil.center_position + zz.reshape(-1, 1) * coil.axis_direction
    turns = np.full(rr.size, coil.turns / rr.size)
    return centers, rr.ravel(), turns


def coil_field(eval_point, coil, current, n_radial=N_RADIAL, n_axial=N_AXIAL, n_quad=N_QUAD):
    """Field [T] of one coil carrying ``current`` amperes, including ``core_gain``."""
    centers, radii, turns = coil_filaments(coil, n_radial, n_axial)
    weights = coil.core_gain * MU0 * current * turns / (4 * np.pi)
    return _loops_field(eval_point, centers, coil.axis_direction, radii, weights, n_quad)


def scene_field(eval_point, coils, coil_currents, **kwargs):
    """Superposed field of all coils for the given per-coil currents."""
    total = 0.0
    for coil, current in zip(coils, coil_currents):
        if current != 0.0:
            total = total + coil_field(eval_point, coil, current, **kwargs)
    if np.isscalar(total):
        return np.zeros(np.shape(eval_point))
    return total


# ---------------------------------------------------------------------------
# wrench maps
# ---------------------------------------------------------------------------


def pitch_rotation(theta):
    """Rotation taking body coordinates to world coordinates at pitch ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def planar_moment(r, f):
    """Pitch-axis component of ``r x f``, positive toward increasing pitch."""
    return r[..., 0] * f[..., 2] - r[..., 2] * f[..., 0]


def magnet_wrench(theta, mode, scene, fd_step=FD_STEP, planar_tol=PLANAR_TOL, return_fy=False):
    """Per-ampere ``(F_x, F_z, tau)`` on each magnet at pitch ``theta``.

    Parameters
    ----------
    theta : float
        Pitch angle [rad] in ``[0, pi/2]``.
    mode : ActuationMode
        Which coils are energized (at 1 A times the mode scale).
    scene : Scene
        Coil layout, magnets and world contact point.
    fd_step : float
        Central-difference step [m] for the force gradient.

    Returns
    -------
    ndarray, shape (n_magnets, 3)
        Force components [N/A] and direct torque [N m/A]. With
        ``return_fy=True`` the out-of-plane forces are returned as well.
    """
    if not -1e-12 <= theta <= np.pi / 2 + 1e-12:
        raise DomainError(f"theta={theta!r} outside [0, pi/2]")
    mode = ActuationMode.parse(mode)
    rot = pitch_rotation(theta)
    currents = mode.scales
    out = np.empty((len(scene.magnets), 3))
    fy = np.empty(len(scene.magnets))
    for k, magnet in enumerate(scene.magnets):
        pos = scene.contact_point + rot @ magnet.body_frame_offset
        m = rot @ magnet.body_moment
        stencil = np.vstack([pos, pos + fd_step * np.eye(3), pos - fd_step * np.eye(3)])
        b = scene_field(stencil, scene.coils, currents)
        energy = b @ m
        force = (energy[1:4] - energy[4:7]) / (2 * fd_step)
        out[k] = force[0], force[2], m[0] * b[0, 2] - m[2] * b[0, 0]
        fy[k] = force[1]
        scale = max(abs(force[0]), abs(force[2]))
        if abs(force[1]) > planar_tol * scale + 1e-15:
            raise PlanarityError(
                f"|F_y|={abs(force[1]):.3e} exceeds {planar_tol:g} of in-plane force {scale:.3e}"
            )
    if return_fy:
        return out, fy
    return out


def _grid(grid_step):
    if not grid_step > 0:
        raise ValueError(f"grid step {grid_step!r} rad must be positive")
    n = (np.pi / 2) / grid_step
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ValueError(f"grid step {grid_step!r} rad does not divide pi/2")
    n = int(round(n))
    return np.deg2rad(np.linspace(0.0, 90.0, n + 1))


def build_table(mode, grid_step=np.deg2rad(5.0), scene=None, **kwargs):
    """Sample ``magnet_wrench`` over ``[0, pi/2]`` at ``grid_step`` spacing."""
    if scene is None:
        scene = default_scene()
    mode = ActuationMode.parse(mode)
    angles = _grid(grid_step)
    rows = np.stack([magnet_wrench(th, mode, scene, **kwargs) for th in angles])
    return ActuationTable(mode, angles, rows, alpha=1.0)


_NODE_CACHE = weakref.WeakKeyDictionary()


def torque_nodes(table, capsule=None):
    """Combined per-ampere moment about the contact at every grid node (alpha applied)."""
    offsets = default_magnet_offsets() if capsule is None else capsule.magnet_offsets
    key = tuple(np.concatenate(offsets).tolist())
    cache = _NODE_CACHE.setdefault(table, {})
    if key not in cache:
        total = np.zeros(table.angles.size)
        for j, theta in enumerate(table.angles):
            rot = pitch_rotation(theta)
            for k, offset in enumerate(offsets):
                fx, fz, tau = table.rows[j, k]
                r = rot @ offset
                total[j] += tau + r[0] * fz - r[2] * fx
        nodes = table.alpha * total
        nodes.setflags(write=False)
        cache[key] = nodes
    return cache[key]


def tau_fe(table, theta, capsule=None):
    """Torque per ampere [N m/A] about the contact, linearly interpolated in ``theta``."""
    lo, hi = table.angles[0], table.angles[-1]
    if isinstance(theta, float):
        # scalar fast path for the integrator's inner loop
        if not lo - 1e-12 <= theta <= hi + 1e-12:
            raise DomainError(f"theta={theta!r} outside table range [{lo:g}, {hi:g}]")
        return float(np.interp(theta, table.angles, torque_nodes(table, capsule)))
    theta_arr = np.asarray(theta, dtype=float)
    if np.any(theta_arr < lo - 1e-12) or np.any(theta_arr > hi + 1e-12):
        raise DomainError(f"theta={theta!r} outside table range [{lo:g}, {hi:g}]")
    out = np.interp(theta_arr, table.angles, torque_nodes(table, capsule))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# default geometry
# ---------------------------------------------------------------------------


def default_coils(tip_spacing=COIL_TIP_SPACING, cone_height=CONE_HEIGHT, core_gain=3.0, **coil_kwargs):
    """Four coils with tips on the corners of a square centred on the origin.

    Coil order is (upper-right, upper-left, lower-right, lower-left). Axes are
    signed so that a positive current in every coil adds to an upward field at
    the centre, and the (upper-right, lower-left) pair adds along the +x+z
    diagonal.
    """
    length = coil_kwargs.get("axial_length", 0.100)
    half = tip_spacing / 2
    corners = [(half, half), (-half, half), (half, -half), (-half, -half)]
    axes = [(1, 1), (-1, 1), (-1, 1), (1, 1)]
    coils = []
    for (cx, cz), (ax, az) in zip(corners, axes):
        outward = _unit([cx, 0.0, cz])
        tip = np.array([cx, 0.0, cz])
        center = tip + (cone_height + length / 2) * outward
        coils.append(CoilGeometry(center, _unit([ax, 0.0, az]), core_gain=core_gain, **coil_kwargs))
    return tuple(coils)


def default_magnets(capsule=None, moment=None):
    offsets = default_magnet_offsets() if capsule is None else capsule.magnet_offsets
    if moment is None:
        moment = magnet_dipole_moment()
    return tuple(MagnetSpec(np.asarray(r), moment) for r in offsets)


def default_scene(capsule=None, contact_point=(0.0, 0.0, 0.0), **coil_kwargs):
    return Scene(default_coils(**coil_kwargs), default_magnets(capsule), np.asarray(contact_point, dtype=float))


# ---------------------------------------------------------------------------
# table files
# ---------------------------------------------------------------------------

_COLUMNS = "theta_deg,m1_Fx,m1_Fz,m1_tau,m2_Fx,m2_Fz,m2_tau"


def quantize(values, digits=9):
    """Round to ``digits`` significant decimal digits, as written to table files."""
    return np.vectorize(lambda x: float(f"{x:.{digits}g}"))(np.asarray(values, dtype=float))


def save_table(table, path):
    """Write ``table`` in the ``actuation_table v1`` CSV format."""
    if table.rows.shape[1] != 2:
        raise ValueError("table files hold exactly two magnets")
    lines = [f"# actuation_table v1, mode={table.mode.value}, alpha={table.alpha!r}", _COLUMNS]
    for theta, row in zip(table.angles, table.rows):
        values = [np.rad2deg(theta)] + list(row.ravel())
        lines.append(",".join(f"{v:.9g}" for v in values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_header(line):
    prefix = "# actuation_table v1,"
    if not line.startswith(prefix):
        raise TableFormatError("expected '# actuation_table v1, mode=..., alpha=...'", 1)
    fields = {}
    for part in line[len(prefix):].split(","):
        key, sep, value = part.strip().partition("=")
        if not sep:
            raise TableFormatError(f"malformed header field {part.strip()!r}", 1)
        fields[key.strip()] = value.strip()
    try:
        mode = ActuationMode.parse(fields["mode"])
        alpha = float(fields["alpha"])
    except KeyError as exc:
        raise TableFormatError(f"header is missing {exc.args[0]!r}", 1) from None
    except ValueError as exc:
        raise TableFormatError(str(exc), 1) from None
    if not (np.isfinite(alpha) and alpha > 0):
        raise TableFormatError("alpha must be a positive finite number", 1)
    return mode, alpha


def load_table(path):
    """Read an ``actuation_table v1`` file; angles are converted to radians."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise TableFormatError("file is too short", len(lines) or 1)
    mode, alpha = _parse_header(lines[0])
    if lines[1].replace(" ", "") != _COLUMNS:
        raise TableFormatError(f"expected column header {_COLUMNS!r}", 2)
    degrees, rows = [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise TableFormatError(f"expected 7 columns, found {len(parts)}", lineno)
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise TableFormatError(f"non-numeric value in {line!r}", lineno) from None
        if not all(np.isfinite(values)):
            raise TableFormatError("non-finite value", lineno)
        if degrees and values[0] <= degrees[-1]:
            raise TableFormatError("angles must be strictly increasing", lineno)
        degrees.append(values[0])
        rows.append(np.reshape(values[1:], (2, 3)))
    if len(degrees) < 2:
        raise TableFormatError("table needs at least two rows", len(lines))
    if degrees[0] != 0.0 or abs(degrees[-1] - 90.0) > 1e-9:
        raise TableFormatError("angle grid must span 0 to 90 degrees", len(lines))
    angles = np.deg2rad(degrees)
    angles[-1] = np.deg2rad(90.0)
    return ActuationTable(mode, angles, np.array(rows), alpha)
