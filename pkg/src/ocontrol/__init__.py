"""Observed control: predictive control computed by Kalman filter and smoother recursions.

The library casts finite-horizon control problems as state estimation: the
plant state is augmented with the held control, horizon-step objectives become
filter measurements, and the first control of the optimal sequence is read out
of the smoothed initial state. All controllers run in a single forward pass
(or forward plus one backward pass) and therefore scale linearly with the
horizon length.
"""

from ocontrol.augmented import (
    AugmentedModel,
    AugmentedState,
    LqrWeights,
    build_augmented,
    discretize_lti,
    linearize_step,
    map_lqr_weights,
)
from ocontrol.controllers import (
    ControllerConfig,
    ControllerOutput,
    DualityProvider,
    NonlinearModel,
    OracleProvider,
    anytime_oc,
    batch_oracle,
    compute_keff_lambda,
    compute_rho_tau,
    efficient_oc,
    estimate_horizon,
    forward_only_oc,
    naive_oc,
)
from ocontrol.filters import (
    FilterBelief,
    UkfParams,
    ekf_step,
    kf_predict,
    kf_update,
    rts_backward_step,
    ukf_step,
    unscented_transform,
)
from ocontrol.lqr import LqrSolution, solve_dare, steady_state_control
from ocontrol.measurements import (
    MeasurementTriple,
    ObjectiveOracle,
    duality_measurement,
    gradient_measurement,
    sqp_measurement,
)

__all__ = [
    "AugmentedModel",
    "AugmentedState",
    "ControllerConfig",
    "ControllerOutput",
    "DualityProvider",
    "FilterBelief",
    "LqrSolution",
    "LqrWeights",
    "MeasurementTriple",
    "NonlinearModel",
    "ObjectiveOracle",
    "OracleProvider",
    "UkfParams",
    "anytime_oc",
    "batch_oracle",
    "build_augmented",
    "compute_keff_lambda",
    "compute_rho_tau",
    "discretize_lti",
    "duality_measurement",
    "efficient_oc",
    "ekf_step",
    "estimate_horizon",
    "forward_only_oc",
    "gradient_measurement",
    "kf_predict",
    "kf_update",
    "linearize_step",
    "map_lqr_weights",
    "naive_oc",
    "rts_backward_step",
    "solve_dare",
    "sqp_measurement",
    "steady_state_control",
    "ukf_step",
    "unscented_transform",
]

__version__ = "0.1.0"
