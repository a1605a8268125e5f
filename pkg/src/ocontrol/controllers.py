"""The observed-control algorithms, termination metrics, and oracles.

Four controllers share one structure: a Kalman filter runs forward over the
prediction horizon, measuring the objective at every step, and the first
control of the optimal sequence is extracted from the smoothed initial state.

* ``naive_oc`` smooths explicitly with a full backward pass.
* ``forward_only_oc`` accumulates the smoother-gain product so only the first
  control is refined, in a single forward pass; works with KF, EKF, and UKF
  backends and supports early termination.
* ``efficient_oc`` reformulates the accumulator so that the only inversion per
  step is the (positive definite) innovation matrix; KF and EKF backends.
* ``anytime_oc`` separates the control into a reactive regulator term and an
  anticipatory feed-forward sum computed from references alone, so it can be
  interrupted at any horizon step while retaining regulator-grade stability.

The per-step refinement-gain norm (rho) and normalized smoothed-covariance
decrement (tau) quantify the marginal value of one more horizon step; both
vanish geometrically once the horizon covers the controllable dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from ocontrol.augmented import AugmentedModel, AugmentedState, NonlinearPlant
from ocontrol.errors import OcontrolError, SingularPriorError
from ocontrol.filters import (
    PRIOR,
    FilterBelief,
    InverseCounter,
    UkfParams,
    ekf_predict,
    kf_predict,
    kf_update_innovation,
    rts_backward_step,
    ukf_predict,
)
from ocontrol.linalg import psd_pinv, right_pinv_product, spectral_norm, symmetrize
from ocontrol.measurements import (
    MeasurementTriple,
    ObjectiveOracle,
    duality_measurement,
    gradient_measurement,
    sqp_measurement,
)

KF = "kf"
EKF = "ekf"
UKF = "ukf"


@dataclass(frozen=True)
class NonlinearModel:
    """A nonlinear plant packaged with the augmented process covariance."""

    plant: NonlinearPlant
    q_grave: np.ndarray
    m: int

    @property
    def eta(self) -> int:
        return self.q_grave.shape[0]


ControlModel = AugmentedModel | NonlinearModel


@dataclass(frozen=True)
class ControllerConfig:
    """Horizon length, termination thresholds, and backend selection."""

    n_max: int
    delta1: float = 1e-4
    delta2: float = 1e-7
    mode: str = "duality"
    backend: str = KF
    termination_enabled: bool = False
    rho_peak_guard: bool = True
    joseph: bool = False
    ukf_params: UkfParams = field(default_factory=UkfParams)

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        if self.delta1 < 0 or self.delta2 < 0:
            raise ValueError("termination thresholds must be non-negative")
        if self.backend not in (KF, EKF, UKF):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class ControllerOutput:
    """First control plus convergence diagnostics from one horizon pass."""

    u0: np.ndarray
    trace_p0s: float
    steps_used: int
    rho_trace: np.ndarray
    tau_trace: np.ndarray
    residual_norms: np.ndarray
    inverse_count: int | None = None
    anticipatory: np.ndarray | None = None


@runtime_checkable
class ReferenceProvider(Protocol):
    """Per-step source of measurement triples over the horizon."""

    def triple(self, k: int, chi_prior: np.ndarray) -> MeasurementTriple: ...


class DualityProvider:
    """Explicit targets measured through a row-selected identity.

    Args:
        targets: step index -> target restricted to the selected rows.
        r_grave: measurement covariance on the selected rows.
        selection: kept rows of the identity sensitivity (None = all).
        full_targets: step index -> full augmented target; required by the
            any-time controller, which initializes its filter at the target.
    """

    def __init__(self, targets, r_grave, selection=None, full_targets=None):
        self.targets = targets
        self.r_grave = np.atleast_2d(np.asarray(r_grave, dtype=float))
        self.selection = None if selection is None else np.asarray(selection, dtype=int)
        self.full_targets = full_targets
        self._h = None

    def _sensitivity(self, eta: int) -> np.ndarray:
        if self._h is None or self._h.shape[1] != eta:
            eye = np.eye(eta)
            self._h = eye if self.selection is None else eye[self.selection]
        return self._h

    def triple(self, k: int, chi_prior: np.ndarray) -> MeasurementTriple:
        h = self._sensitivity(chi_prior.size)
        z = np.asarray(self.targets(k), dtype=float)
        return MeasurementTriple(r=z - h @ chi_prior, h=h, r_grave=self.r_grave)

    def linear_measurement(self, k: int, eta: int):
        """(z, H, R̀) of the step-k measurement; valid because H is state-free."""
        h = self._sensitivity(eta)
        return np.atleast_1d(np.asarray(self.targets(k), dtype=float)), h, self.r_grave

    def augmented_target(self, k: int) -> np.ndarray:
        if self.full_targets is None:
            raise ValueError("provider has no full augmented targets")
        return np.asarray(self.full_targets(k), dtype=float)


class OracleProvider:
    """Nonquadratic objectives measured in SQP or gradient mode."""

    def __init__(self, oracles: Callable[[int], ObjectiveOracle], mode: str = "sqp"):
        if mode not in ("sqp", "gradient"):
            raise ValueError(f"unknown oracle mode {mode!r}")
        self.oracles = oracles
        self.mode = mode

    def triple(self, k: int, chi_prior: np.ndarray) -> MeasurementTriple:
        oracle = self.oracles(k)
        if self.mode == "sqp":
            return sqp_measurement(oracle, chi_prior)
        return gradient_measurement(oracle, chi_prior)


def _resolve_backend(model: ControlModel, config: ControllerConfig):
    """Return (predict, q_grave, m): predict maps a posterior to (prior, phi_k)."""
    if isinstance(model, AugmentedModel):
        phi = model.phi
        q_grave = model.q_grave

        def predict(belief: FilterBelief):
            return kf_predict(belief, phi, q_grave), phi

        return predict, q_grave, model.m
    if config.backend == EKF:

        def predict(belief: FilterBelief):
            return ekf_predict(model.plant, belief, model.q_grave, model.m)

        return predict, model.q_grave, model.m
    if config.backend == UKF:

        def predict(belief: FilterBelief):
            return ukf_predict(model.plant, belief, model.q_grave, model.m, config.ukf_params)

        return predict, model.q_grave, model.m
    raise ValueError("nonlinear model requires an EKF or UKF backend")


class _TerminationGuard:
    """Blocks termination until the refinement-gain norm has passed its peak.

    Guards against exiting before the horizon reaches the controllability
    index, where rho may still be rising from zero.
    """

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.rho_max = 0.0
        self.peaked = False

    def admit(self, rho: float) -> bool:
        if rho > 0.0 and rho < self.rho_max:
            self.peaked = True
        self.rho_max = max(self.rho_max, rho)
        return self.peaked or not self.enabled


def compute_rho_tau(
    g_prev: np.ndarray,
    phi_prev: np.ndarray,
    s_k: np.ndarray,
    h_k: np.ndarray,
    trace_p0s: float,
) -> tuple[float, float]:
    """Early-termination metrics from the inverse-free accumulator.

    rho is the spectral norm of the refinement gain G Phi^T S mapping the
    step-k residual onto the first control; tau is the trace of the smoothed
    initial-covariance decrement normalized by the current smoothed trace.
    """
    if trace_p0s <= 0.0:
        raise OcontrolError("smoothed covariance trace must be positive")
    t_k = g_prev @ phi_prev.T @ s_k
    rho = spectral_norm(t_k)
    tau = float(np.trace(t_k @ h_k @ (g_prev @ phi_prev.T).T)) / trace_p0s
    return rho, tau


def estimate_horizon(lambda_max: float, epsilon: float) -> int:
    """Horizon length for a relative convergence tolerance, from the geometric decay rate.

    Raises:
        OcontrolError: lambda_max >= 1 means the system passes through an
            uncontrollability and no finite estimate exists.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if lambda_max <= 0.0:
        raise ValueError("lambda_max must be positive")
    if lambda_max >= 1.0:
        raise OcontrolError("no finite horizon estimate for lambda_max >= 1")
    return math.ceil(math.log(epsilon) / (2.0 * math.log(lambda_max)))


def naive_oc(
    model: ControlModel,
    state: AugmentedState,
    refs: ReferenceProvider,
    config: ControllerConfig,
) -> ControllerOutput:
    """Full forward filter pass followed by a full backward smoothing pass.

    The entire smoothed trajectory is computed even though only the first
    control is used; kept as the reference implementation.
    """
    predict, q_grave, m = _resolve_backend(model, config)
    belief = FilterBelief(mean=state.chi, cov=q_grave.astype(float).copy(), phase=PRIOR)
    priors: list[FilterBelief] = []
    posts: list[FilterBelief] = []
    phis: list[np.ndarray] = []
    resid_norms = []
    post = belief
    for k in range(config.n_max + 1):
        if k > 0:
            prior, phi_k = predict(post)
            phis.append(phi_k)
        else:
            prior = belief
        res = kf_update_innovation(prior, refs.triple(k, prior.mean), joseph=config.joseph)
        priors.append(prior)
        posts.append(res.belief)
        resid_norms.append(float(np.sqrt(res.residual @ res.residual)))
        post = res.belief

    smoothed = posts[-1]
    for k in range(config.n_max - 1, -1, -1):
        smoothed = rts_backward_step(posts[k], priors[k + 1], phis[k], smoothed)
    return ControllerOutput(
        u0=smoothed.mean[-m:],
        trace_p0s=float(np.trace(smoothed.cov)),
        steps_used=config.n_max,
        rho_trace=np.array([]),
        tau_trace=np.array([]),
        residual_norms=np.asarray(resid_norms),
    )


def forward_only_oc(
    model: ControlModel,
    state: AugmentedState,
    refs: ReferenceProvider,
    config: ControllerConfig,
) -> ControllerOutput:
    """Single forward pass refining only the first control via the gain accumulator.

    The accumulator is the running product of RTS smoother gains restricted
    to the control rows; prior-covariance inverses are taken on the positive
    rank subspace, which reproduces the explicit smoother exactly because the
    accumulated gain annihilates the covariance null space.
    """
    predict, q_grave, m = _resolve_backend(model, config)
    eta = state.chi.size
    prior = FilterBelief(mean=state.chi, cov=q_grave.astype(float).copy(), phase=PRIOR)
    gamma = np.hstack([np.zeros((m, eta - m)), np.eye(m)])
    u = state.chi[-m:].astype(float).copy()
    trace = float(np.trace(q_grave))
    guard = _TerminationGuard(config.rho_peak_guard)
    rhos, taus, resid_norms = [], [], []
    post = prior
    steps = 0
    for k in range(config.n_max + 1):
        if k > 0:
            p_post_prev = post.cov
            prior, phi_k = predict(post)
            # accumulate in control-row form: the product never grows past m rows
            gamma = right_pinv_product((gamma @ p_post_prev) @ phi_k.T, prior.cov)
        triple = refs.triple(k, prior.mean)
        res = kf_update_innovation(prior, triple, joseph=config.joseph)
        gamma_gain = gamma @ res.gain
        u = u + gamma_gain @ res.residual
        # tr(Gamma (P- - P+) Gamma^T) via P- - P+ = K H P-, using small factors
        decrement = float(np.trace(gamma_gain @ (triple.h @ (prior.cov @ gamma.T))))
        trace -= decrement
        if trace <= 0.0:
            raise OcontrolError("smoothed covariance trace exhausted; degenerate process noise")
        rho = spectral_norm(gamma_gain)
        tau = decrement / trace
        rhos.append(rho)
        taus.append(tau)
        resid_norms.append(float(np.sqrt(res.residual @ res.residual)))
        post = res.belief
        steps = k
        admitted = guard.admit(rho)
        if config.termination_enabled and admitted and rho <= config.delta1 and tau <= config.delta2:
            break
    return ControllerOutput(
        u0=u,
        trace_p0s=trace,
        steps_used=steps,
        rho_trace=np.asarray(rhos),
        tau_trace=np.asarray(taus),
        residual_norms=np.asarray(resid_norms),
    )


def efficient_oc(
    model: ControlModel,
    state: AugmentedState,
    refs: ReferenceProvider,
    config: ControllerConfig,
) -> ControllerOutput:
    """Forward pass with the inverse-free accumulator; one SPD inverse per step.

    Unavailable with the UKF backend, whose update lacks the explicit
    sensitivity structure the accumulator requires; use ``forward_only_oc``.
    """
    if config.backend == UKF:
        raise OcontrolError("efficient controller supports KF and EKF backends only")
    predict, q_grave, m = _resolve_backend(model, config)
    eta = state.chi.size
    prior = FilterBelief(mean=state.chi, cov=q_grave.astype(float).copy(), phase=PRIOR)
    g = np.hstack([np.zeros((m, eta - m)), np.eye(m)]) @ q_grave
    phi_prev = np.eye(eta)
    u = state.chi[-m:].astype(float).copy()
    trace = float(np.trace(q_grave))
    counter = InverseCounter()
    guard = _TerminationGuard(config.rho_peak_guard)
    rhos, taus, resid_norms = [], [], []
    post = prior
    steps = 0
    for k in range(config.n_max + 1):
        if k > 0:
            prior, phi_prev = predict(post)
        triple = refs.triple(k, prior.mean)
        res = kf_update_innovation(prior, triple, joseph=config.joseph, counter=counter)
        g_phi_t = g @ phi_prev.T
        t_k = g_phi_t @ res.s
        u = u + t_k @ res.residual
        psi = t_k @ triple.h @ g_phi_t.T
        trace -= float(np.trace(psi))
        if trace <= 0.0:
            raise OcontrolError("smoothed covariance trace exhausted; degenerate process noise")
        rho = spectral_norm(t_k)
        tau = float(np.trace(psi)) / trace
        rhos.append(rho)
        taus.append(tau)
        resid_norms.append(float(np.sqrt(res.residual @ res.residual)))
        post = res.belief
        steps = k
        admitted = guard.admit(rho)
        if config.termination_enabled and admitted and rho <= config.delta1 and tau <= config.delta2:
            break
        g = g_phi_t @ (np.eye(eta) - res.gain @ triple.h).T
    return ControllerOutput(
        u0=u,
        trace_p0s=trace,
        steps_used=steps,
        rho_trace=np.asarray(rhos),
        tau_trace=np.asarray(taus),
        residual_norms=np.asarray(resid_norms),
        inverse_count=counter.count,
    )


def anytime_oc(
    model: AugmentedModel,
    x_hat: np.ndarray,
    u_last: np.ndarray,
    refs: ReferenceProvider,
    config: ControllerConfig,
    k_lqr: np.ndarray,
) -> ControllerOutput:
    """Reactive regulator plus anticipatory feed-forward, valid at any horizon.

    The anticipatory sum is computed by the same forward recursion as the
    efficient controller, but initialized at the step-0 augmented target so it
    is independent of the plant state. The returned control applies the
    supplied regulator gain to the true current error, so interrupting the
    pass at any step (including before it starts) leaves a stabilizing
    control. Restricted to linear time-invariant models.
    """
    if not isinstance(model, AugmentedModel):
        raise OcontrolError("any-time controller requires a linear time-invariant model")
    q_grave = model.q_grave
    m = model.m
    eta = model.eta
    z0 = refs.augmented_target(0)
    if z0.size != eta:
        raise ValueError("step-0 augmented target must cover the full augmented state")
    prior = FilterBelief(mean=z0.astype(float).copy(), cov=q_grave.astype(float).copy(), phase=PRIOR)
    g = np.hstack([np.zeros((m, eta - m)), np.eye(m)]) @ q_grave
    phi_prev = np.eye(eta)
    u_a = np.zeros(m)
    trace = float(np.trace(q_grave))
    counter = InverseCounter()
    guard = _TerminationGuard(config.rho_peak_guard)
    rhos, taus, resid_norms = [], [], []
    post = prior
    steps = 0
    for k in range(config.n_max + 1):
        if k > 0:
            prior = kf_predict(post, model.phi, q_grave)
            phi_prev = model.phi
        triple = refs.triple(k, prior.mean)
        res = kf_update_innovation(prior, triple, joseph=config.joseph, counter=counter)
        g_phi_t = g @ phi_prev.T
        t_k = g_phi_t @ res.s
        u_a = u_a + t_k @ res.residual
        psi = t_k @ triple.h @ g_phi_t.T
        trace -= float(np.trace(psi))
        if trace <= 0.0:
            raise OcontrolError("smoothed covariance trace exhausted; degenerate process noise")
        rho = spectral_norm(t_k)
        tau = float(np.trace(psi)) / trace
        rhos.append(rho)
        taus.append(tau)
        resid_norms.append(float(np.sqrt(res.residual @ res.residual)))
        post = res.belief
        steps = k
        admitted = guard.admit(rho)
        if config.termination_enabled and admitted and rho <= config.delta1 and tau <= config.delta2:
            break
        g = g_phi_t @ (np.eye(eta) - res.gain @ triple.h).T
    u_last = np.atleast_1d(np.asarray(u_last, dtype=float))
    # The reactive term is evaluated against the true plant state (full-state
    # feedback at the current time), not the target-initialized filter state.
    r0 = z0 - np.concatenate([np.asarray(x_hat, dtype=float), u_last])
    u0 = u_last + k_lqr @ r0 + u_a
    return ControllerOutput(
        u0=u0,
        trace_p0s=trace,
        steps_used=steps,
        rho_trace=np.asarray(rhos),
        tau_trace=np.asarray(taus),
        residual_norms=np.asarray(resid_norms),
        inverse_count=counter.count,
        anticipatory=u_a,
    )


def compute_keff_lambda(
    model: AugmentedModel,
    refs: ReferenceProvider,
    n: int,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Reactive gain K_eff and anticipatory gains Lambda_0..Lambda_N.

    Requires a linear time-invariant model with full-state feedback at the
    current time (the step-0 sensitivity must be the identity). The returned
    gains satisfy the superposition identity

        u0 = u_last + K_eff r0 + sum_k Lambda_k z_k

    for arbitrary initial states and reference sequences, where r0 is the
    step-0 residual.
    """
    if not isinstance(model, AugmentedModel):
        raise OcontrolError("separability gains require a linear time-invariant model")
    eta = model.eta
    m = model.m
    phi = model.phi
    q_grave = model.q_grave

    zeros = np.zeros(eta)
    h0 = refs.triple(0, zeros).h
    if h0.shape != (eta, eta) or not np.allclose(h0, np.eye(eta)):
        raise OcontrolError("step-0 measurement must be full-state (H_0 = I)")

    p = q_grave.astype(float).copy()
    g = np.hstack([np.zeros((m, eta - m)), np.eye(m)]) @ q_grave
    phi_prev = np.eye(eta)
    eye = np.eye(eta)
    t_list, h_list, k_list = [], [], []
    for k in range(n + 1):
        if k > 0:
            p = symmetrize(phi @ p @ phi.T + q_grave)
            phi_prev = phi
        triple = refs.triple(k, zeros)
        h_k = triple.h
        res = kf_update_innovation(FilterBelief(mean=zeros, cov=p, phase=PRIOR), triple)
        t_list.append(g @ phi_prev.T @ res.s)
        h_list.append(h_k)
        k_list.append(res.gain)
        p = res.belief.cov
        g = g @ phi_prev.T @ (eye - res.gain @ h_k).T

    e = [phi @ (eye - k_list[i] @ h_list[i]) for i in range(n + 1)]

    k_eff = t_list[0].copy()
    running = np.eye(eta)
    for k in range(1, n + 1):
        running = e[k - 1] @ running
        k_eff = k_eff + t_list[k] @ h_list[k] @ running

    # tail_k = sum_{j>k} T_j H_j (E_{j-1} ... E_{k+1})
    tails = [np.zeros((m, eta)) for _ in range(n + 1)]
    for k in range(n - 1, -1, -1):
        tails[k] = t_list[k + 1] @ h_list[k + 1] + tails[k + 1] @ e[k + 1]

    lambdas = [-tails[0] @ phi]
    for k in range(1, n + 1):
        lambdas.append(t_list[k] - tails[k] @ phi @ k_list[k])
    return k_eff, lambdas


def batch_oracle(
    model: AugmentedModel,
    state: AugmentedState,
    refs: DualityProvider,
    n: int,
) -> np.ndarray:
    """First control from the dense weighted least-squares horizon problem.

    Stacks the control sequence as the only free variables, imposing the
    dynamics as hard equalities (the exact limit of the zero plant-state
    process noise), and solves the resulting least-squares problem directly.
    Independent of every recursion above; desk-scale only.
    """
    if not hasattr(refs, "linear_measurement"):
        raise OcontrolError("batch oracle requires linear (duality-mode) measurements")
    a = model.a
    b = model.b
    n_x, m = b.shape
    eta = model.eta
    r_tilde = np.linalg.inv(model.q_grave[n_x:, n_x:])
    rt_half = np.linalg.cholesky(symmetrize(r_tilde)).T

    powers = [np.eye(n_x)]
    for _ in range(n):
        powers.append(a @ powers[-1])

    n_u = m * (n + 1)
    rows, rhs = [], []
    for k in range(n + 1):
        row = np.zeros((m, n_u))
        row[:, k * m : (k + 1) * m] = rt_half
        if k == 0:
            rhs.append(rt_half @ state.u)
        else:
            row[:, (k - 1) * m : k * m] -= rt_half
            rhs.append(np.zeros(m))
        rows.append(row)
    for k in range(n + 1):
        z, h, r_grave = refs.linear_measurement(k, eta)
        w_half = np.linalg.cholesky(np.linalg.inv(symmetrize(r_grave))).T
        h_x, h_u = h[:, :n_x], h[:, n_x:]
        row = np.zeros((h.shape[0], n_u))
        for i in range(k):
            row[:, i * m : (i + 1) * m] += h_x @ powers[k - 1 - i] @ b
        row[:, k * m : (k + 1) * m] += h_u
        rows.append(w_half @ row)
        rhs.append(w_half @ (z - h_x @ powers[k] @ state.x))
    a_mat = np.vstack(rows)
    b_vec = np.concatenate(rhs)
    sol, _, rank, _ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    if rank < n_u:
        raise OcontrolError("batch normal equations are rank deficient")
    return sol[:m]
