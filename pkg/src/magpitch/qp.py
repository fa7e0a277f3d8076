"""Dense convex QP solver for the condensed MPC problem.

Solves ``min 1/2 U'HU + f'U  s.t.  G U <= h`` with a primal active-set
method. The iterate stays feasible throughout, so an early stop still
returns a usable command sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REGULARIZATION = 1e-10


@dataclass(frozen=True)
class QpProblem:
    """Condensed MPC quadratic program.

    The objective is ``1/2 U'HU + f'U + constant``; ``constant`` makes it equal
    to the MPC cost of the predicted trajectory. The constraint rows encode
    ``|u_j| <= u_max``, ``|u_0 - u_prev| <= du_max`` and
    ``|u_{j+1} - u_j| <= du_max``.
    """

    H: np.ndarray
    f: np.ndarray
    G: np.ndarray
    h: np.ndarray
    u_prev: float
    u_max: float
    du_max: float
    constant: float = 0.0

    def objective(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * u @ self.H @ u + self.f @ u + self.constant

    def violation(self, u):
        return float(np.max(self.G @ np.asarray(u, dtype=float) - self.h, initial=0.0))

    @property
    def size(self):
        return self.f.size


@dataclass(frozen=True)
class QpInfo:
    status: str
    iterations: int
    multipliers: np.ndarray
    kkt_residual: float


def box_slew_constraints(n, u_prev, u_max, du_max):
    """Rows ``G`` and bounds ``h`` for amplitude and slew limits on ``n`` inputs."""
    eye = np.eye(n)
    diff = eye - np.eye(n, k=-1)  # row j: u_j - u_{j-1}, with u_{-1} moved to h
    G = np.vstack([eye, -eye, diff, -diff])
    h = np.concatenate([np.full(n, u_max), np.full(n, u_max), np.full(n, du_max), np.full(n, du_max)])
    h[2 * n] += u_prev
    h[3 * n] -= u_prev
    return G, h


def make_qp(H, f, u_prev, u_max, du_max, constant=0.0):
    H = np.asarray(H, dtype=float)
    H = 0.5 * (H + H.T)
    f = np.asarray(f, dtype=float)
    G, h = box_slew_constraints(f.size, u_prev, u_max, du_max)
    return QpProblem(H, f, G, h, float(u_prev), float(u_max), float(du_max), float(constant))


def project_feasible(qp, u=None):
    """Sequentially clip ``u`` onto the box and slew limits.

    Returns ``None`` when no feasible point exists (``|u_prev|`` too far
    outside the box).
    """
    n = qp.size
    u = np.zeros(n) if u is None else np.array(u, dtype=float)
    last = qp.u_prev
    for j in range(n):
        lo = max(-qp.u_max, last - qp.du_max)
        hi = min(qp.u_max, last + qp.du_max)
        if lo > hi:
            return None
        u[j] = min(max(u[j], lo), hi)
        last = u[j]
    return u


def kkt_residual(qp, u, multipliers):
    """Infinity norm of stationarity, dual feasibility and complementarity violations."""
    grad = qp.H @ u + qp.f + qp.G.T @ multipliers
    slack = qp.h - qp.G @ u
    return max(
        float(np.max(np.abs(grad))),
        float(np.max(-multipliers, initial=0.0)),
        float(np.max(np.abs(multipliers * slack))),
    )


def _solve(a, b):
    """Dense solve with a least-squares fallback for numerically singular systems.

    Strongly unstable linearizations over a long horizon give Hessians with
    condition numbers beyond 1e20; there the KKT matrix can be singular to
    working precision even though the problem is convex.
    """
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(a, b, rcond=None)[0]


def _in_span(rows, g, tol=1e-9):
    coef = np.linalg.lstsq(rows.T, g, rcond=None)[0]
    return np.linalg.norm(rows.T @ coef - g) <= tol * np.linalg.norm(g)


def solve_qp(qp, tol=1e-9, max_iter=200, warm_start=None):
    """Primal active-set solve.

    Parameters
    ----------
    qp : QpProblem
    tol : float
        Threshold on the KKT residual and on negative multipliers.
    max_iter : int
        Iteration cap; on hitting it the current (feasible) iterate is returned
        with status ``"max_iter"``.
    warm_start : array_like, optional
        Initial guess, projected onto the feasible set before use.

    Returns
    -------
    u : ndarray
    info : QpInfo
    """
    n = qp.size
    m = qp.h.size
    H = qp.H + REGULARIZATION * np.eye(n)
    G, h = qp.G, qp.h
    u = project_feasible(qp, warm_start)
    if u is None:
        return np.zeros(n), QpInfo("infeasible", 0, np.zeros(m), np.inf)

    scale = max(1.0, float(np.max(np.abs(H))), float(np.max(np.abs(qp.f), initial=0.0)))
    active = []
    lam = np.zeros(m)
    status = "max_iter"
    it = 0
    # after an unblocked full step u minimizes over the working set; round-off
    # in an ill-conditioned KKT system would otherwise keep p from being zero
    at_minimizer = False
    for it in range(1, max_iter + 1):
        g = H @ u + qp.f
        k = len(active)
        if k >= n:
            # vertex: the active rows pin u, only the multipliers are free
            p = np.zeros(n)
            mult = np.linalg.lstsq(G[active].T, -g, rcond=None)[0]
        elif k:
            Ga = G[active]
            kkt = np.block([[H, Ga.T], [Ga, np.zeros((k, k))]])
            sol = _solve(kkt, np.concatenate([-g, np.zeros(k)]))
            p, mult = sol[:n], sol[n:]
        else:
            p, mult = _solve(H, -g), np.zeros(0)

        if at_minimizer or np.max(np.abs(p)) <= 1e-12 * (1.0 + np.max(np.abs(u))):
            at_minimizer = False
            if k == 0 or mult.min() >= -tol * scale:
                lam = np.zeros(m)
                lam[active] = np.maximum(mult, 0.0)
                status = "optimal"
                break
            active.pop(int(np.argmin(mult)))
            continue

        # longest feasible step along p
        alpha, blocking = 1.0, None
        gp = G @ p
        slack = h - G @ u
        cand = np.array([i for i in np.flatnonzero(gp > 1e-14) if i not in active], dtype=int)
        if cand.size:
            steps = np.maximum(slack[cand], 0.0) / gp[cand]
            for j in np.argsort(steps, kind="stable"):
                if steps[j] >= 1.0:
                    break
                # rows dependent on the working set cannot block the step
                if active and _in_span(G[active], G[cand[j]]):
                    continue
                alpha, blocking = float(steps[j]), int(cand[j])
                break
        u = u + alpha * p
        if blocking is not None:
            active.append(int(blocking))
        else:
            at_minimizer = True

    # polish tiny violations from round-off
    u = project_feasible(qp, u)
    return u, QpInfo(status, it, lam, kkt_residual(qp, u, lam))
