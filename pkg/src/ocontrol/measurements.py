"""Per-horizon-step measurement triples in three modes.

Each mode produces an (innovation, sensitivity, covariance) triple consumed by
the filter update ``mean += K @ r``:

* duality: the residual against an explicit target, r = z - H chi, with the
  row-selected identity sensitivity and the inverted quadratic penalty as
  covariance;
* one-step SQP: the damped Newton displacement r = -pinv(Hess) grad with the
  projector onto the Hessian row space as sensitivity and pinv(Hess) as
  covariance;
* gradient: the negated user residual r = -g(chi) with its Jacobian as
  sensitivity and a step-size-scaled covariance.

The stored innovation always points toward lower cost, so the three modes
produce identical posteriors whenever the underlying objective is quadratic.
Triples are recomputed at every horizon step's prior; nothing is cached.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ocontrol.errors import NonFiniteError, NonMinimumError
from ocontrol.linalg import symmetrize


@dataclass(frozen=True)
class MeasurementTriple:
    """Innovation r, sensitivity H, and covariance R̀ for one filter update."""

    r: np.ndarray
    h: np.ndarray
    r_grave: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(self.r).size
        if self.h.shape[0] != mu or self.r_grave.shape != (mu, mu):
            raise ValueError("triple dimensions inconsistent")


@dataclass(frozen=True)
class ObjectiveOracle:
    """Derivative information for one horizon step of a nonquadratic objective.

    SQP mode requires ``gradient`` and ``hessian`` of a scalar objective.
    Gradient mode requires ``residual`` (zero at the desired condition) and
    its ``jacobian``, plus the step weight ``alpha``; ``weight_inv`` optionally
    replaces the identity in the covariance alpha * weight_inv.
    """

    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    residual: Callable[[np.ndarray], np.ndarray] | None = None
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    value: Callable[[np.ndarray], float] | None = None
    alpha: float = 1.0
    weight_inv: np.ndarray | None = None


def duality_measurement(
    z_target: np.ndarray,
    chi_prior: np.ndarray,
    r_grave: np.ndarray,
    selection: np.ndarray | None = None,
) -> MeasurementTriple:
    """Target-tracking measurement with row-selected identity sensitivity.

    ``selection`` lists the augmented-state rows that carry a penalty; the
    target and covariance must already be restricted to those rows. A full
    selection measures every state and control.
    """
    eta = chi_prior.size
    if selection is None:
        h = np.eye(eta)
    else:
        selection = np.asarray(selection, dtype=int)
        if selection.size == 0:
            raise ValueError("empty measurement selection")
        h = np.eye(eta)[selection]
    z = np.atleast_1d(np.asarray(z_target, dtype=float))
    if z.size != h.shape[0]:
        raise ValueError("target size must match selected rows")
    return MeasurementTriple(r=z - h @ chi_prior, h=h, r_grave=np.atleast_2d(r_grave))


def _symmetric_pinv(hess: np.ndarray, rel_tol: float = 1e-10):
    """Eigendecomposition pseudo-inverse; ties break toward rank reduction."""
    w, v = np.linalg.eigh(symmetrize(hess))
    wmax = float(np.max(np.abs(w), initial=0.0))
    if wmax == 0.0:
        return np.zeros_like(hess), np.zeros_like(hess)
    keep = w > rel_tol * wmax
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    pinv = (v * inv) @ v.T
    projector = (v * keep.astype(float)) @ v.T
    return pinv, projector


def sqp_measurement(oracle: ObjectiveOracle, chi_prior: np.ndarray) -> MeasurementTriple:
    """One damped Newton step of the scalar objective as a measurement.

    The innovation is the displacement -pinv(Hess) grad toward the step's
    local minimum; the sensitivity is the projector onto the Hessian row
    space; the covariance is the Hessian pseudo-inverse. Rank-deficient
    Hessians are permitted (unpenalized directions are simply not measured).

    Raises:
        NonMinimumError: the Hessian has an eigenvalue below -1e-8 times its
            largest magnitude, violating the second-order condition.
    """
    grad = np.atleast_1d(oracle.gradient(chi_prior))
    hess = np.atleast_2d(oracle.hessian(chi_prior))
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
        raise NonFiniteError("objective derivatives are not finite")
    w = np.linalg.eigvalsh(symmetrize(hess))
    wmax = float(np.max(np.abs(w), initial=0.0))
    if wmax > 0.0 and w.min() < -1e-8 * wmax:
        raise NonMinimumError(f"Hessian eigenvalue {w.min():.3g} violates second-order condition")
    pinv, projector = _symmetric_pinv(hess)
    return MeasurementTriple(r=-(pinv @ grad), h=projector, r_grave=pinv)


def gradient_measurement(oracle: ObjectiveOracle, chi_prior: np.ndarray) -> MeasurementTriple:
    """User-supplied residual incorporated in the EKF guise.

    The residual function must vanish at the desired condition; its value at
    the prior enters (negated) as the innovation and its Jacobian as the
    sensitivity. The covariance alpha * weight_inv acts like a gradient
    descent step size.
    """
    res = np.atleast_1d(oracle.residual(chi_prior))
    jac = np.atleast_2d(oracle.jacobian(chi_prior))
    if not (np.all(np.isfinite(res)) and np.all(np.isfinite(jac))):
        raise NonFiniteError("residual evaluation is not finite")
    mu = res.size
    base = np.eye(mu) if oracle.weight_inv is None else np.atleast_2d(oracle.weight_inv)
    return MeasurementTriple(r=-res, h=jac, r_grave=oracle.alpha * base)
