"""Independent reference computations used by the test-suite.

None of these import the code under test beyond plain data containers.
"""

import itertools

import numpy as np
from scipy.special import ellipe, ellipk

MU0 = 4e-7 * np.pi


# ---------------------------------------------------------------------------
# magnetostatics
# ---------------------------------------------------------------------------


def elliptic_loop_field(point, center, axis, radius, current):
    """Closed-form field of a circular filament (complete elliptic integrals)."""
    rel = np.asarray(point, float) - center
    z = rel @ axis
    radial = rel - z * axis
    rho = np.linalg.norm(radial)
    a2 = radius**2 + rho**2 + z**2 - 2 * radius * rho
    b2 = radius**2 + rho**2 + z**2 + 2 * radius * rho
    k2 = 1 - a2 / b2
    K, E = ellipk(k2), ellipe(k2)
    C = MU0 * current / np.pi
    bz = C / (2 * a2 * np.sqrt(b2)) * ((radius**2 - rho**2 - z**2) * E + a2 * K)
    if rho < 1e-15:
        return bz * axis
    brho = C * z / (2 * a2 * np.sqrt(b2) * rho) * ((radius**2 + rho**2 + z**2) * E - a2 * K)
    return bz * axis + brho * radial / rho


def winding_filaments(coil, n_radial=4, n_axial=10):
    """Filament stack of a winding, rebuilt from the coil's dimensions."""
    dr = (coil.bobbin_outer_radius - coil.bobbin_inner_radius) / n_radial
    dz = coil.axial_length / n_axial
    out = []
    for a in range(n_radial):
        r = coil.bobbin_inner_radius + (a + 0.5) * dr
        for b in range(n_axial):
            s = -coil.axial_length / 2 + (b + 0.5) * dz
            out.append((coil.center_position + s * coil.axis_direction, r, coil.turns / (n_radial * n_axial)))
    return out


def elliptic_scene_field(point, coils, currents):
    total = np.zeros(3)
    for coil, i in zip(coils, currents):
        if i == 0:
            continue
        for c, r, n in winding_filaments(coil):
            total += elliptic_loop_field(point, c, coil.axis_direction, r, coil.core_gain * n * i)
    return total


def elliptic_wrench(theta, coils, currents, offsets, moment, h=2e-4):
    """Per-magnet (F_x, F_z, tau) from the closed-form field; 4th-order differences for the force."""
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, 0, -s], [0, 1, 0], [s, 0, c]])
    rows = []
    for off in offsets:
        pos = rot @ off
        m = rot @ np.array([moment, 0.0, 0.0])

        def energy(p):
            return elliptic_scene_field(p, coils, currents) @ m

        grad = []
        for e in np.eye(3):
            grad.append((-energy(pos + 2 * h * e) + 8 * energy(pos + h * e)
                         - 8 * energy(pos - h * e) + energy(pos - 2 * h * e)) / (12 * h))
        b = elliptic_scene_field(pos, coils, currents)
        rows.append((grad[0], grad[2], m[0] * b[2] - m[2] * b[0]))
    return np.array(rows)


# ---------------------------------------------------------------------------
# quadratic programs
# ---------------------------------------------------------------------------


def qp_rows(n, u_prev, u_max, du_max):
    """Constraint pairs as (row, lower, upper): box on each u_j and slew on each difference."""
    pairs = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        pairs.append((e, -u_max, u_max))
    for j in range(n):
        d = np.zeros(n)
        d[j] = 1.0
        if j == 0:
            pairs.append((d, u_prev - du_max, u_prev + du_max))
        else:
            d[j - 1] = -1.0
            pairs.append((d, -du_max, du_max))
    return pairs


def feasible_mask(U, pairs, tol=1e-12):
    ok = np.ones(U.shape[0], dtype=bool)
    for row, lo, hi in pairs:
        v = U @ row
        ok &= (v >= lo - tol) & (v <= hi + tol)
    return ok


def enumerate_active_sets(H, f, u_prev, u_max, du_max):
    """Exact minimum by enumerating every lower/free/upper pattern on the constraint pairs.

    For each pattern with at most ``n`` active rows the equality-constrained
    minimizer is computed (batched); the best primal-feasible candidate is
    the global optimum of the convex QP.
    """
    n = len(f)
    pairs = qp_rows(n, u_prev, u_max, du_max)
    best_val, best_u = np.inf, None
    for k in range(0, n + 1):
        for chosen in itertools.combinations(range(len(pairs)), k):
            rows = np.array([pairs[c][0] for c in chosen]).reshape(k, n)
            # all lower/upper choices for this subset at once
            sides = list(itertools.product((1, 2), repeat=k))
            rhs = np.array([[pairs[c][s] for c, s in zip(chosen, side)] for side in sides], dtype=float)
            rhs = rhs.reshape(len(sides), k)
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = H
            kkt[:n, n:] = rows.T
            kkt[n:, :n] = rows
            # with H positive definite the KKT matrix is invertible exactly
            # when the chosen rows are independent
            if k and np.linalg.matrix_rank(rows) < k:
                continue
            b = np.zeros((rhs.shape[0], n + k))
            b[:, :n] = -f
            b[:, n:] = rhs
            try:
                sol = np.linalg.solve(kkt, b.T).T[:, :n]
            except np.linalg.LinAlgError:
                continue
            ok = feasible_mask(sol, pairs, tol=1e-10)
            if not ok.any():
                continue
            cand = sol[ok]
            vals = 0.5 * np.einsum("ij,jk,ik->i", cand, H, cand) + cand @ f
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val, best_u = vals[j], cand[j]
    return best_u, best_val


def box_grid_search(H, f, u_max, coarse=9, final_spacing=2.0**-24, min_gain=1e-12, max_moves=3000):
    """Brute-force grid search over the box ``|u_j| <= u_max``.

    A uniform ``coarse^n`` grid is scanned exhaustively, then the best point
    is refined on successively halved grids using the full ``3^n``
    neighbourhood, clipped to the box (box faces stay on the grid). After a
    successful move the spacing doubles again, so long narrow valleys of
    ill-conditioned problems are followed quickly. Moves gaining less than
    ``min_gain`` count as failures and refinement stops after ``max_moves``
    stencil evaluations, which bounds the work in flat valleys.
    """
    n = len(f)

    def values(U):
        return 0.5 * np.einsum("ij,jk,ik->i", U, H, U) + U @ f

    axes = [np.linspace(-u_max, u_max, coarse)] * n
    U = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    vals = values(U)
    j = int(np.argmin(vals))
    best_u, best_val = U[j], vals[j]
    stencil = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=n)))
    initial = spacing = 2 * u_max / (coarse - 1)
    moves = 0
    while spacing >= final_spacing and moves < max_moves:
        moves += 1
        U = np.clip(best_u + spacing * stencil, -u_max, u_max)
        vals = values(U)
        j = int(np.argmin(vals))
        if vals[j] < best_val - min_gain:
            best_u, best_val = U[j], vals[j]
            spacing = min(2 * spacing, initial)
        else:
            spacing /= 2
    return best_u, best_val


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def settling_scan(time, theta, ref, band, engage):
    """Brute-force settling time: test every candidate start index in turn."""
    for k in range(len(time)):
        if time[k] < engage - 1e-12:
            continue
        if all(abs(theta[j] - ref) <= band for j in range(k, len(time))):
            return time[k] - engage
    return None
