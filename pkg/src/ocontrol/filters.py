"""Kalman prediction/update, RTS backward smoothing, and EKF/UKF variants.

All controllers consume these operations through one contract: a predict
producing a prior belief plus the per-step transition actually used, and an
update consuming a measurement triple (innovation, sensitivity, covariance).
Covariances are symmetrized after every operation; the exactly singular
process covariance of the augmented system is handled by eigendecomposition
throughout, never by regularization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from ocontrol.augmented import NonlinearPlant, augment_linearization, linearize_step
from ocontrol.errors import NonFiniteError, SingularObjectiveError, SingularPriorError
from ocontrol.linalg import psd_pinv, psd_sqrt_columns, symmetrize
from ocontrol.measurements import MeasurementTriple

PRIOR = "prior"
POSTERIOR = "posterior"


@dataclass(frozen=True)
class FilterBelief:
    """Mean/covariance pair tagged with its filtering phase."""

    mean: np.ndarray
    cov: np.ndarray
    phase: str = POSTERIOR

    def __post_init__(self):
        if self.phase not in (PRIOR, POSTERIOR):
            raise ValueError(f"unknown phase {self.phase!r}")


@dataclass(frozen=True)
class UkfParams:
    """Merwe-scaled sigma-point parameters.

    Defaults are the standard Gaussian-optimal choice: alpha=1, beta=2,
    kappa=3-eta (kappa resolved against the state dimension at use time).
    """

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None

    def resolve(self, eta: int) -> tuple[np.ndarray, np.ndarray, float]:
        """Mean weights, covariance weights, and the sigma scaling c = eta + lambda."""
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        kappa = 3.0 - eta if self.kappa is None else self.kappa
        c = self.alpha**2 * (eta + kappa)
        if c <= 0.0:
            raise ValueError("alpha^2 (eta + kappa) must be positive")
        lam = c - eta
        wm = np.full(2 * eta + 1, 1.0 / (2.0 * c))
        wm[0] = lam / c
        wc = wm.copy()
        wc[0] += 1.0 - self.alpha**2 + self.beta
        return wm, wc, c


class UpdateResult(NamedTuple):
    belief: FilterBelief
    gain: np.ndarray
    s: np.ndarray
    residual: np.ndarray


class InverseCounter:
    """Counts matrix factorizations/inversions performed in a controller pass."""

    def __init__(self):
        self.count = 0

    def tick(self, n: int = 1) -> None:
        self.count += n


def kf_predict(belief: FilterBelief, phi: np.ndarray, q_grave: np.ndarray) -> FilterBelief:
    """Propagate mean and covariance one step through a linear transition."""
    mean = phi @ belief.mean
    cov = symmetrize(phi @ belief.cov @ phi.T + q_grave)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NonFiniteError("prediction produced non-finite belief")
    return FilterBelief(mean=mean, cov=cov, phase=PRIOR)


def kf_update_innovation(
    belief: FilterBelief,
    triple: MeasurementTriple,
    joseph: bool = False,
    counter: InverseCounter | None = None,
) -> UpdateResult:
    """Measurement update from a precomputed innovation.

    S is the inverse-free gain factor H^T (H P H^T + R̀)^{-1}; the Kalman gain
    is K = P S. The posterior covariance uses the (I - K H) P form by default,
    or the Joseph form when requested. When the measurement covariance itself
    is rank deficient (SQP mode with a singular Hessian), the innovation
    matrix inverts on its positive-rank subspace; a singular innovation matrix
    under a positive definite covariance is an error, never regularized.

    Raises:
        SingularObjectiveError: the innovation matrix is not positive definite
            while the measurement covariance claims full rank.
    """
    p = belief.cov
    h = triple.h
    innov_cov = symmetrize(h @ p @ h.T + triple.r_grave)
    if counter is not None:
        counter.tick()
    try:
        c = np.linalg.cholesky(innov_cov)
        s = np.linalg.solve(c.T, np.linalg.solve(c, h)).T
    except np.linalg.LinAlgError as exc:
        r_eigs = np.linalg.eigvalsh(symmetrize(triple.r_grave))
        scale = max(float(np.max(np.abs(r_eigs))), 1e-300)
        psd_singular = r_eigs.min() >= -1e-10 * scale and r_eigs.min() <= 1e-12 * scale
        if not psd_singular:
            raise SingularObjectiveError(
                "innovation matrix is not positive definite"
            ) from exc
        s = h.T @ psd_pinv(innov_cov)
    gain = p @ s
    mean = belief.mean + gain @ triple.r
    ikh = np.eye(p.shape[0]) - gain @ h
    if joseph:
        cov = ikh @ p @ ikh.T + gain @ triple.r_grave @ gain.T
    else:
        cov = ikh @ p
    post = FilterBelief(mean=mean, cov=symmetrize(cov), phase=POSTERIOR)
    return UpdateResult(belief=post, gain=gain, s=s, residual=triple.r)


def kf_update(
    belief: FilterBelief,
    z: np.ndarray,
    h: np.ndarray,
    r_grave: np.ndarray,
    joseph: bool = False,
) -> UpdateResult:
    """Standard measurement update with residual r = z - H mean."""
    r = np.asarray(z, dtype=float) - h @ belief.mean
    return kf_update_innovation(
        belief, MeasurementTriple(r=r, h=h, r_grave=r_grave), joseph=joseph
    )


def rts_backward_step(
    post_k: FilterBelief,
    prior_k1: FilterBelief,
    phi_k: np.ndarray | None,
    smoothed_k1: FilterBelief,
    consistency_tol: float = 1e-6,
    smoother_cross: np.ndarray | None = None,
) -> FilterBelief:
    """One backward smoothing step from the step-(k+1) smoothed belief.

    The smoother gain inverts the step-(k+1) prior covariance on its
    positive-rank subspace; this is exact whenever the smoothing correction
    lies in the range of that covariance, which holds for priors propagated
    from the structurally singular process covariance. Sigma-point backends
    supply the cross-covariance P_posterior Phi^T directly instead of a
    transition matrix.

    Raises:
        SingularPriorError: the correction has a component outside the prior
            covariance range; use the inverse-free efficient controller.
    """
    p_prior = prior_k1.cov
    pinv = psd_pinv(p_prior)
    if smoother_cross is None:
        smoother_cross = post_k.cov @ phi_k.T
    gain = smoother_cross @ pinv
    dmean = smoothed_k1.mean - prior_k1.mean
    # Correction components in the null space of the prior covariance cannot
    # be mapped backward; detect them instead of silently dropping them.
    resid = dmean - p_prior @ (pinv @ dmean)
    scale = max(float(np.linalg.norm(dmean)), 1.0)
    if np.linalg.norm(resid) > consistency_tol * scale:
        raise SingularPriorError(
            "smoothing correction leaves the prior covariance range"
        )
    mean = post_k.mean + gain @ dmean
    cov = symmetrize(post_k.cov + gain @ (smoothed_k1.cov - p_prior) @ gain.T)
    return FilterBelief(mean=mean, cov=cov, phase=POSTERIOR)


MeasurementModel = Callable[[np.ndarray], MeasurementTriple]


class StepResult(NamedTuple):
    prior: FilterBelief
    posterior: FilterBelief
    phi_k: np.ndarray
    gain: np.ndarray
    s: np.ndarray
    residual: np.ndarray


def ekf_predict(
    plant: NonlinearPlant,
    belief: FilterBelief,
    q_grave: np.ndarray,
    m: int,
) -> tuple[FilterBelief, np.ndarray]:
    """Predict through the linearized plant.

    The transition is the augmented one-step sensitivity [[F_x, F_u], [0, I]]
    evaluated at the belief mean; the mean itself is propagated through the
    nonlinear dynamics.
    """
    x = belief.mean[:-m]
    u = belief.mean[-m:]
    x_next, f_x, f_u = linearize_step(plant, x, u)
    phi_k = augment_linearization(f_x, f_u)
    mean = np.concatenate([x_next, u])
    cov = symmetrize(phi_k @ belief.cov @ phi_k.T + q_grave)
    return FilterBelief(mean=mean, cov=cov, phase=PRIOR), phi_k


def ekf_step(
    plant: NonlinearPlant,
    belief: FilterBelief,
    measurement: MeasurementModel,
    q_grave: np.ndarray,
    m: int,
    joseph: bool = False,
) -> StepResult:
    """EKF predict followed by a measurement update at the prior."""
    prior, phi_k = ekf_predict(plant, belief, q_grave, m)
    res = kf_update_innovation(prior, measurement(prior.mean), joseph=joseph)
    return StepResult(prior, res.belief, phi_k, res.gain, res.s, res.residual)


def plant_step(plant: NonlinearPlant, x: np.ndarray, u: np.ndarray, substeps: int = 4) -> np.ndarray:
    """Propagate the plant state one controller period under held control."""

    def f(xs: np.ndarray) -> np.ndarray:
        return plant.dynamics(xs, u)

    h = plant.dt / substeps
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def unscented_transform(
    mean: np.ndarray,
    cov: np.ndarray,
    fn: Callable[[np.ndarray], np.ndarray],
    params: UkfParams | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Propagate (mean, cov) through fn with 2n+1 Merwe-scaled sigma points.

    The square root comes from an eigendecomposition with negative
    eigenvalues clamped at zero, so exactly singular covariances are valid
    inputs. Returns the propagated mean, covariance (without additive
    noise), and input-output cross-covariance.
    """
    params = params or UkfParams()
    n = mean.size
    wm, wc, c = params.resolve(n)
    root = psd_sqrt_columns(cov) * np.sqrt(c)
    sigmas = [mean]
    for i in range(n):
        sigmas.append(mean + root[:, i])
        sigmas.append(mean - root[:, i])
    propagated = [np.atleast_1d(fn(sig)) for sig in sigmas]
    out_mean = sum(w * y for w, y in zip(wm, propagated))
    out_cov = np.zeros((out_mean.size, out_mean.size))
    cross = np.zeros((n, out_mean.size))
    for w, sig, y in zip(wc, sigmas, propagated):
        dy = y - out_mean
        out_cov += w * np.outer(dy, dy)
        cross += w * np.outer(sig - mean, dy)
    return out_mean, out_cov, cross


def ukf_predict_cross(
    plant: NonlinearPlant,
    belief: FilterBelief,
    q_grave: np.ndarray,
    m: int,
    params: UkfParams | None = None,
) -> tuple[FilterBelief, np.ndarray]:
    """Unscented predict returning the input-output cross-covariance.

    The cross-covariance C_xy is the exact sigma-point analogue of
    P_posterior @ Phi^T, which is all the smoothing recursions need. Sigma
    points propagate as one batch when the plant supports it.

    Raises:
        SingularPriorError: the belief covariance has an eigenvalue below
            the -1e-8 tolerance.
    """
    params = params or UkfParams()
    eta = belief.mean.size
    wm, wc, c = params.resolve(eta)
    if np.min(np.linalg.eigvalsh(symmetrize(belief.cov))) < -1e-8:
        raise SingularPriorError("belief covariance has a significantly negative eigenvalue")
    root = psd_sqrt_columns(belief.cov) * np.sqrt(c)
    sigmas = np.empty((eta, 2 * eta + 1))
    sigmas[:, 0] = belief.mean
    sigmas[:, 1 : eta + 1] = belief.mean[:, None] + root
    sigmas[:, eta + 1 :] = belief.mean[:, None] - root

    xs = sigmas[:-m]
    us = sigmas[-m:]
    batch = getattr(plant, "dynamics_batch", None)
    if batch is not None:
        h = plant.dt / 4.0
        for _ in range(4):
            k1 = batch(xs, us)
            k2 = batch(xs + 0.5 * h * k1, us)
            k3 = batch(xs + 0.5 * h * k2, us)
            k4 = batch(xs + h * k3, us)
            xs = xs + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        propagated = np.vstack([xs, us])
    else:
        cols = []
        for i in range(2 * eta + 1):
            x_next = plant_step(plant, sigmas[:-m, i], sigmas[-m:, i])
            cols.append(np.concatenate([x_next, sigmas[-m:, i]]))
        propagated = np.array(cols).T

    mean = propagated @ wm
    dev = propagated - mean[:, None]
    cov = (dev * wc) @ dev.T + q_grave
    cross = ((sigmas - belief.mean[:, None]) * wc) @ dev.T
    prior = FilterBelief(mean=mean, cov=symmetrize(cov), phase=PRIOR)
    return prior, cross


def ukf_predict(
    plant: NonlinearPlant,
    belief: FilterBelief,
    q_grave: np.ndarray,
    m: int,
    params: UkfParams | None = None,
) -> tuple[FilterBelief, np.ndarray]:
    """Unscented predict with additive process noise.

    The returned transition is the statistical linearization
    phi_hat = C_xy^T pinv(P_posterior), the cross-covariance of the propagated
    sigma points divided by the input covariance on its positive-rank
    subspace; it satisfies P_posterior @ phi_hat^T == C_xy exactly.
    """
    prior, cross = ukf_predict_cross(plant, belief, q_grave, m, params)
    phi_hat = cross.T @ psd_pinv(belief.cov)
    return prior, phi_hat


def ukf_step(
    plant: NonlinearPlant,
    belief: FilterBelief,
    measurement: MeasurementModel,
    q_grave: np.ndarray,
    m: int,
    params: UkfParams | None = None,
    joseph: bool = False,
) -> StepResult:
    """Unscented predict followed by a measurement update at the prior."""
    prior, phi_hat = ukf_predict(plant, belief, q_grave, m, params)
    res = kf_update_innovation(prior, measurement(prior.mean), joseph=joseph)
    return StepResult(prior, res.belief, phi_hat, res.gain, res.s, res.residual)


def steady_state_filter(
    phi: np.ndarray,
    h: np.ndarray,
    q_grave: np.ndarray,
    r_grave: np.ndarray,
    tol: float = 1e-13,
    max_iter: int = 100000,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Iterate the filter covariance recursion to convergence.

    Returns (p_prior, p_posterior, gain) at the fixed point. Used to obtain
    the converged smoother gain and the closed-loop filter spectral radius
    that drives the horizon-length heuristic.
    """
    p = q_grave.astype(float).copy()
    eye = np.eye(phi.shape[0])
    p_prior = p
    gain = None
    for _ in range(max_iter):
        p_prior = symmetrize(phi @ p @ phi.T + q_grave)
        innov = h @ p_prior @ h.T + r_grave
        gain = p_prior @ h.T @ np.linalg.inv(innov)
        p_next = symmetrize((eye - gain @ h) @ p_prior)
        if np.max(np.abs(p_next - p)) < tol:
            p = p_next
            break
        p = p_next
    p_prior = symmetrize(phi @ p @ phi.T + q_grave)
    innov = h @ p_prior @ h.T + r_grave
    gain = p_prior @ h.T @ np.linalg.inv(innov)
    return p_prior, p, gain


def closed_loop_lambda_max(
    phi: np.ndarray, h: np.ndarray, q_grave: np.ndarray, r_grave: np.ndarray
) -> float:
    """Largest eigenvalue magnitude of the converged closed-loop filter (I - K H) phi."""
    _, _, gain = steady_state_filter(phi, h, q_grave, r_grave)
    m = (np.eye(phi.shape[0]) - gain @ h) @ phi
    return float(np.max(np.abs(np.linalg.eigvals(m))))
