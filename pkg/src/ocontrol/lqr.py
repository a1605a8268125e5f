"""Independent discrete-time LQR solver.

Serves as ground truth for the duality and separability tests and supplies
the reactive gain to the any-time controller. Deliberately implemented as a
plain Riccati fixed-point iteration so it shares no code with the filter
recursions it validates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ocontrol.errors import UnstabilizableError
from ocontrol.linalg import spectral_radius, symmetrize


@dataclass(frozen=True)
class LqrSolution:
    """Gain, cost-to-go matrix, and convergence diagnostics."""

    k_gain: np.ndarray
    p_riccati: np.ndarray
    iterations: int
    residual: float


def solve_dare(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    m_cross: np.ndarray | None = None,
    tol: float = 1e-12,
    max_iter: int = 100000,
    p0: np.ndarray | None = None,
) -> LqrSolution:
    """Discrete algebraic Riccati equation by fixed-point iteration.

    Supports the state/control cross term via the standard completion of
    squares inside the iteration. The stabilizing gain satisfies
    u = -K x for the regulation problem.

    Raises:
        UnstabilizableError: the iteration failed to reach the defect
            tolerance (unstabilizable pair or indefinite weights).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n, m = b.shape
    mc = np.zeros((n, m)) if m_cross is None else np.atleast_2d(np.asarray(m_cross, dtype=float))

    p = q.copy() if p0 is None else np.atleast_2d(np.asarray(p0, dtype=float)).copy()
    iterations = 0
    defect = np.inf
    for iterations in range(1, max_iter + 1):
        btpb = r + b.T @ p @ b
        k = np.linalg.solve(btpb, b.T @ p @ a + mc.T)
        p_next = symmetrize(q + a.T @ p @ a - (a.T @ p @ b + mc) @ k)
        defect = float(np.max(np.abs(p_next - p)))
        p = p_next
        if defect < tol:
            break
    if defect >= tol or not np.all(np.isfinite(p)):
        raise UnstabilizableError(
            f"Riccati iteration did not converge (defect {defect:.3g} after {iterations} iterations)"
        )
    k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a + mc.T)
    closed_loop = a - b @ k
    if spectral_radius(closed_loop) >= 1.0:
        raise UnstabilizableError("converged Riccati solution is not stabilizing")
    return LqrSolution(k_gain=k, p_riccati=p, iterations=iterations, residual=defect)


def steady_state_control(a: np.ndarray, b: np.ndarray, x_ref: np.ndarray) -> np.ndarray:
    """Control holding the plant at x_ref: least-squares solution of x_ref = A x_ref + B u.

    Raises:
        UnstabilizableError: B is column-rank deficient.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    x_ref = np.atleast_1d(np.asarray(x_ref, dtype=float))
    if np.linalg.matrix_rank(b) < b.shape[1]:
        raise UnstabilizableError("B must have full column rank for steady-state control")
    u_ss, *_ = np.linalg.lstsq(b, (np.eye(a.shape[0]) - a) @ x_ref, rcond=None)
    return u_ss


def tracking_gain_and_target(
    phi: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r_tilde: np.ndarray,
    x_ref: np.ndarray,
    r: np.ndarray | None = None,
    m_cross: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, LqrSolution]:
    """Incremental LQR law for the augmented system: u = u_prev + K (target - chi).

    Solves the control-increment Riccati problem on the augmented transition
    (input matrix [B; I]). With no direct control penalty (r is None) the
    stage cost penalizes states only and the returned target [x_ref; u_ss]
    makes the law track x_ref offset-free. With a control penalty the stage
    cost matches the full blocked objective (including its cross terms
    against the increment) and the target is [x_ref; 0], matching the
    measurement convention of a full-state objective.
    """
    n, m = b.shape
    b_tilde = np.vstack([b, np.eye(m)])
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r_tilde = np.atleast_2d(np.asarray(r_tilde, dtype=float))
    q_aug = np.zeros((n + m, n + m))
    q_aug[:n, :n] = q
    r_aug = r_tilde.copy()
    m_aug = None
    if r is not None:
        r = np.atleast_2d(np.asarray(r, dtype=float))
        mc = np.zeros((n, m)) if m_cross is None else np.atleast_2d(np.asarray(m_cross, dtype=float))
        q_aug[:n, n:] = mc
        q_aug[n:, :n] = mc.T
        q_aug[n:, n:] = r
        r_aug = r + r_tilde
        m_aug = np.vstack([mc, r])
    sol = solve_dare(phi, b_tilde, q_aug, r_aug, m_aug)
    if r is None:
        u_target = steady_state_control(phi[:n, :n], b, x_ref)
    else:
        u_target = np.zeros(m)
    target = np.concatenate([np.atleast_1d(x_ref), u_target])
    return sol.k_gain, target, sol
