"""Augmented state-space construction and objective-to-covariance mapping.

The augmented state stacks the plant state with the held control, so that a
filter estimating the augmented state effectively optimizes the control. A
quadratic objective maps onto the filter by inverting its weight matrices:
the blocked state/control penalty becomes the measurement covariance and the
control-rate penalty becomes the (control block of the) process covariance.
The plant-state block of the process covariance is exactly zero, which turns
the dynamics into hard constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.linalg import expm

from ocontrol.errors import NonFiniteError, SingularObjectiveError
from ocontrol.linalg import symmetrize


@dataclass(frozen=True)
class AugmentedState:
    """Plant state and held control, filtered as one vector of length n + m."""

    x: np.ndarray
    u: np.ndarray

    @property
    def chi(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(self.x), np.atleast_1d(self.u)])

    @classmethod
    def from_chi(cls, chi: np.ndarray, m: int) -> "AugmentedState":
        chi = np.asarray(chi, dtype=float)
        return cls(x=chi[: chi.size - m], u=chi[chi.size - m :])


@dataclass(frozen=True)
class AugmentedModel:
    """Augmented transition, measurement sensitivity, and noise covariances.

    Attributes:
        phi: (n+m) x (n+m) transition; control rows are [0 I].
        h: default measurement sensitivity (duality mode, full or row-selected).
        q_grave: process covariance, zero on the plant-state block.
        r_grave: measurement covariance matching ``h``'s row count.
        dt: step period in seconds.
    """

    phi: np.ndarray
    h: np.ndarray
    q_grave: np.ndarray
    r_grave: np.ndarray
    dt: float
    n: int = field(default=0)
    m: int = field(default=0)

    def __post_init__(self):
        eta = self.phi.shape[0]
        if self.n + self.m != eta:
            raise ValueError(f"n + m = {self.n + self.m} must equal phi size {eta}")
        if self.q_grave.shape != (eta, eta):
            raise ValueError("q_grave must be (n+m) square")
        if self.h.shape[1] != eta:
            raise ValueError("h column count must equal n + m")
        if self.r_grave.shape != (self.h.shape[0],) * 2:
            raise ValueError("r_grave must match h row count")

    @property
    def eta(self) -> int:
        return self.n + self.m

    @property
    def a(self) -> np.ndarray:
        """Plant transition block."""
        return self.phi[: self.n, : self.n]

    @property
    def b(self) -> np.ndarray:
        """Plant control block."""
        return self.phi[: self.n, self.n :]


@dataclass(frozen=True)
class LqrWeights:
    """Quadratic penalty weights on state, control, coupling, and control rate."""

    q: np.ndarray
    r: np.ndarray
    m_cross: np.ndarray | None = None
    r_tilde: np.ndarray | None = None

    def blocked(self) -> np.ndarray:
        """The blocked state/control penalty [[Q, M], [M^T, R]]."""
        q = np.atleast_2d(self.q)
        r = np.atleast_2d(self.r)
        n, m = q.shape[0], r.shape[0]
        mc = np.zeros((n, m)) if self.m_cross is None else np.atleast_2d(self.m_cross)
        return np.block([[q, mc], [mc.T, r]])


class NonlinearPlant(Protocol):
    """Continuous-time plant with analytic Jacobians for the EKF path."""

    dt: float

    def dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...

    def jac_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...

    def jac_u(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...


def build_augmented(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray | None = None,
    d: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Build the augmented transition and measurement sensitivity blocks.

    Returns (phi, h) with phi = [[A, B], [0, I]] and h = [[C, D], [0, I]].
    C defaults to the identity and D to zero, giving full-state sensitivity.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n, m = b.shape
    if a.shape != (n, n):
        raise ValueError(f"A must be {n}x{n} to match B {b.shape}")
    c = np.eye(n) if c is None else np.atleast_2d(np.asarray(c, dtype=float))
    nu = c.shape[0]
    d = np.zeros((nu, m)) if d is None else np.atleast_2d(np.asarray(d, dtype=float))
    if c.shape[1] != n or d.shape != (nu, m):
        raise ValueError("C/D dimensions inconsistent with A/B")
    phi = np.block([[a, b], [np.zeros((m, n)), np.eye(m)]])
    h = np.block([[c, d], [np.zeros((m, n)), np.eye(m)]])
    return phi, h


def map_lqr_weights(weights: LqrWeights) -> tuple[np.ndarray, np.ndarray]:
    """Map quadratic objective weights to filter covariances (Q̀, R̀).

    The measurement covariance is the inverse of the blocked state/control
    penalty; the process covariance is block-diagonal with an exactly zero
    plant-state block and the inverse control-rate penalty.

    Raises:
        SingularObjectiveError: the blocked penalty is not invertible. Drop
            unpenalized rows from the measurement sensitivity instead.
    """
    blocked = weights.blocked()
    n = np.atleast_2d(weights.q).shape[0]
    m = np.atleast_2d(weights.r).shape[0]
    r_tilde = np.atleast_2d(weights.r_tilde if weights.r_tilde is not None else np.eye(m))
    try:
        r_grave = np.linalg.inv(blocked)
        r_tilde_inv = np.linalg.inv(r_tilde)
    except np.linalg.LinAlgError as exc:
        raise SingularObjectiveError(
            "blocked penalty or control-rate penalty is singular"
        ) from exc
    cond = np.linalg.cond(blocked)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularObjectiveError(
            f"blocked penalty is numerically singular (cond={cond:.3g})"
        )
    q_grave = np.zeros((n + m, n + m))
    q_grave[n:, n:] = r_tilde_inv
    return q_grave, symmetrize(r_grave)


def discretize_lti(a_c: np.ndarray, b_c: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a_c = np.atleast_2d(np.asarray(a_c, dtype=float))
    b_c = np.atleast_2d(np.asarray(b_c, dtype=float))
    n, m = b_c.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = a_c
    blk[:n, n:] = b_c
    e = expm(blk * dt)
    return e[:n, :n], e[:n, n:]


def _rk4(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def linearize_step(
    plant: NonlinearPlant,
    x: np.ndarray,
    u: np.ndarray,
    dt: float | None = None,
    substeps: int = 4,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-step state and sensitivities by joint fixed-step RK4 integration.

    Integrates the dynamics together with the state and control sensitivity
    equations from initial conditions (x, I, 0) over one step period, holding
    the control constant.

    Returns:
        (x_next, f_x, f_u): the propagated state and the one-step Jacobians
        of x_next with respect to x and u.
    """
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = x.size
    m = u.size
    dt = plant.dt if dt is None else dt

    def joint(z: np.ndarray) -> np.ndarray:
        xs = z[:n]
        f_x = z[n : n + n * n].reshape(n, n)
        f_u = z[n + n * n :].reshape(n, m)
        jx = plant.jac_x(xs, u)
        ju = plant.jac_u(xs, u)
        return np.concatenate(
            [plant.dynamics(xs, u), (jx @ f_x).ravel(), (jx @ f_u + ju).ravel()]
        )

    z = np.concatenate([x, np.eye(n).ravel(), np.zeros(n * m)])
    h = dt / substeps
    for _ in range(substeps):
        z = _rk4(joint, z, h)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("dynamics integration produced non-finite values")
    return z[:n], z[n : n + n * n].reshape(n, n), z[n + n * n :].reshape(n, m)


def augment_linearization(f_x: np.ndarray, f_u: np.ndarray) -> np.ndarray:
    """Per-step augmented transition [[F_x, F_u], [0, I]] from plant sensitivities."""
    n, m = f_u.shape
    return np.block([[f_x, f_u], [np.zeros((m, n)), np.eye(m)]])
