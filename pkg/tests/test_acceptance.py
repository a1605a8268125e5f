"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line so the gate can be audited from the
pytest -s output. Tolerances are pinned here, not configurable.
"""

import time

import numpy as np
import pytest

from conftest import random_lti_model
from ocontrol.augmented import AugmentedState, build_augmented
from ocontrol.controllers import (
    ControllerConfig,
    DualityProvider,
    OracleProvider,
    batch_oracle,
    compute_keff_lambda,
    efficient_oc,
    estimate_horizon,
    forward_only_oc,
    naive_oc,
)
from ocontrol.filters import closed_loop_lambda_max, steady_state_filter
from ocontrol.harness import (
    benchmark_scaling,
    cartpole_swingup_task,
    fit_scaling,
    integrated_cost,
    lds_obstacle_task,
    lqr_baseline_task,
    msd_step_task,
    run_closed_loop,
    termination_study,
)
from ocontrol.linalg import psd_pinv, spectral_norm, spectral_radius
from ocontrol.lqr import tracking_gain_and_target
from ocontrol.measurements import ObjectiveOracle
from ocontrol.plants import LinearDragPlant, MsdPlant, default_msd_weights


def _report(num: int, description: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {num}: {status} - {description}{suffix}")
    assert passed, f"criterion {num} failed: {description} {suffix}"


def test_criterion_1_cross_algorithm_equivalence():
    """Algorithms 1, 2, 3 agree to 1e-9 on 100 random LTI instances and MSD."""
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        model = random_lti_model(rng)
        n = int(rng.integers(3, 41))
        targets = rng.normal(size=(n + 1, model.h.shape[0]))
        provider = DualityProvider(lambda k, T=targets: T[k], model.r_grave)
        state = AugmentedState(x=rng.normal(size=model.n), u=rng.normal(size=model.m))
        cfg = ControllerConfig(n_max=n)
        u1 = naive_oc(model, state, provider, cfg).u0
        u2 = forward_only_oc(model, state, provider, cfg).u0
        u3 = efficient_oc(model, state, provider, cfg).u0
        worst = max(worst, float(np.max(np.abs(u1 - u3))), float(np.max(np.abs(u2 - u3))))
    # the MSD step task at a mid-transient state
    for alg_pair in (("naive", "efficient"), ("forward_only", "efficient")):
        outs = []
        for alg in alg_pair:
            task = msd_step_task(algorithm=alg, n_max=40)
            outs.append(task.tick(np.array([0.4, -0.3]), np.array([0.6]), 0.0).u0)
        worst = max(worst, float(np.max(np.abs(outs[0] - outs[1]))))
    elapsed = time.perf_counter() - start
    _report(
        1,
        "cross-algorithm equivalence at 1e-9 on 100 LTI instances + MSD, under 5 s",
        worst <= 1e-9 and elapsed < 5.0,
        f"worst={worst:.3g}, elapsed={elapsed:.2f}s",
    )


def test_criterion_2_batch_oracle_equivalence():
    """Algorithm 3 matches the dense least-squares solver to 1e-8 for N <= 20."""
    rng = np.random.default_rng(2)
    worst = 0.0
    msd = MsdPlant()
    weights = default_msd_weights()
    a, b = msd.discrete()
    phi, h = build_augmented(a, b)
    from ocontrol.augmented import AugmentedModel

    q_grave = np.zeros((3, 3))
    q_grave[2, 2] = 1.0 / weights["r_tilde"][0, 0]
    msd_model = AugmentedModel(
        phi=phi, h=np.eye(3)[:2], q_grave=q_grave, r_grave=np.linalg.inv(weights["q"]), dt=0.1, n=2, m=1
    )
    lds = LinearDragPlant()
    a2, b2 = lds.discrete()
    phi2, _ = build_augmented(a2, b2)
    q2 = np.zeros((6, 6))
    q2[4:, 4:] = np.linalg.inv(0.1 * np.eye(2))
    lds_model = AugmentedModel(
        phi=phi2, h=np.eye(6)[:4], q_grave=q2, r_grave=np.linalg.inv(lds.w_chi), dt=0.1, n=4, m=2
    )
    for model, sel in ((msd_model, np.array([0, 1])), (lds_model, np.array([0, 1, 2, 3]))):
        for _ in range(20):
            n = int(rng.integers(1, 21))
            targets = rng.normal(size=(n + 1, sel.size))
            provider = DualityProvider(lambda k, T=targets: T[k], model.r_grave, selection=sel)
            state = AugmentedState(x=rng.normal(size=model.n), u=rng.normal(size=model.m))
            u_eff = efficient_oc(model, state, provider, ControllerConfig(n_max=n)).u0
            u_batch = batch_oracle(model, state, provider, n)
            worst = max(worst, float(np.max(np.abs(u_eff - u_batch))))
    _report(2, "dense-oracle equivalence at 1e-8 on MSD and planar drag", worst <= 1e-8, f"worst={worst:.3g}")


def test_criterion_3_gain_duality():
    """K_eff error is monotone and reaches 1e-6 within twice the horizon heuristic."""
    plant = MsdPlant()
    weights = default_msd_weights()
    a, b = plant.discrete()
    phi, h = build_augmented(a, b)
    from ocontrol.augmented import AugmentedModel, LqrWeights, map_lqr_weights

    lw = LqrWeights(q=weights["q"], r=weights["r"], m_cross=weights["m_cross"], r_tilde=weights["r_tilde"])
    q_grave, r_grave = map_lqr_weights(lw)
    model = AugmentedModel(phi=phi, h=h, q_grave=q_grave, r_grave=r_grave, dt=0.1, n=2, m=1)
    k_lqr, _, _ = tracking_gain_and_target(
        phi, b, weights["q"], weights["r_tilde"], np.zeros(2), r=weights["r"], m_cross=weights["m_cross"]
    )
    provider = DualityProvider(lambda k: np.zeros(3), r_grave)
    lam = closed_loop_lambda_max(phi, h, q_grave, r_grave)
    bound = 2 * estimate_horizon(lam, 1e-6)
    k_norm = spectral_norm(k_lqr)
    errs = []
    first_below = None
    for n in range(bound + 1):
        k_eff, _ = compute_keff_lambda(model, provider, n)
        errs.append(spectral_norm(k_eff - k_lqr) / k_norm)
        if first_below is None and errs[-1] <= 1e-6:
            first_below = n
    monotone = all(errs[i + 1] <= errs[i] + 1e-14 for i in range(len(errs) - 1))
    _report(
        3,
        "reactive gain converges monotonically, below 1e-6 within 2x the horizon heuristic",
        monotone and first_below is not None and first_below <= bound,
        f"first_below={first_below}, bound={bound}, final={errs[-1]:.3g}",
    )


def test_criterion_4_cost_convergence_and_baseline():
    """Any-time at N=0 matches the regulator baseline; costs converge by N=12."""
    base = lqr_baseline_task()
    cost_base = integrated_cost(run_closed_loop(base, t_end=7.5), base)
    t0 = msd_step_task(algorithm="anytime", n_max=0)
    cost_any0 = integrated_cost(run_closed_loop(t0, t_end=7.5), t0)
    baseline_ok = abs(cost_any0 - cost_base) / cost_base <= 0.005

    converged = True
    details = [f"anytime0={abs(cost_any0 - cost_base) / cost_base:.2e}"]
    for alg in ("naive", "forward_only", "efficient", "anytime"):
        costs = {}
        for n in (12, 50):
            task = msd_step_task(algorithm=alg, n_max=n)
            costs[n] = integrated_cost(run_closed_loop(task, t_end=7.5), task)
        rel = abs(costs[12] - costs[50]) / costs[50]
        details.append(f"{alg}={rel:.2e}")
        converged = converged and rel <= 0.001
    _report(
        4,
        "N=0 any-time within 0.5% of the regulator baseline; all costs at N=12 within 0.1% of N=50",
        baseline_ok and converged,
        ", ".join(details),
    )


def test_criterion_5_controllability_peaks_and_decay():
    """rho peaks exactly at the controllability index; tau decays at 2 ln(lambda)."""
    records = termination_study(orders=(1, 2, 3, 4, 5), n_steps=60, fit_start=20)
    peaks_ok = all(rec.rho_argmax == rec.order for rec in records)
    slopes_ok = all(
        abs(rec.tau_slope - 2.0 * np.log(rec.lambda_max)) <= 0.1 * abs(2.0 * np.log(rec.lambda_max))
        for rec in records
    )
    detail = ", ".join(
        f"n{rec.order}: argmax={rec.rho_argmax} slope_ratio={rec.tau_slope / (2 * np.log(rec.lambda_max)):.3f}"
        for rec in records
    )
    _report(5, "companion-family peak locations and tau decay rates", peaks_ok and slopes_ok, detail)


def test_criterion_6_smoother_gain_stability():
    """Converged smoother gain spectral radius < 1 on 50 seeded random systems."""
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        a = rng.normal(size=(n, n)) * 0.7
        b = rng.normal(size=(n, m))
        phi, h = build_augmented(a, b)
        eta = n + m
        w = rng.normal(size=(eta, eta))
        w = w @ w.T + 0.4 * np.eye(eta)
        q_grave = np.zeros((eta, eta))
        q_grave[n:, n:] = np.diag(rng.uniform(0.5, 2.0, m))
        p_prior, p_post, _ = steady_state_filter(phi, h, q_grave, np.linalg.inv(w))
        gain = p_post @ phi.T @ psd_pinv(p_prior)
        worst = max(worst, spectral_radius(gain))
    _report(6, "converged smoother gain is stable on 50 random systems", worst < 1.0, f"max radius={worst:.6f}")


def test_criterion_7_cartpole_swingup():
    """EKF- and UKF-backed swing-up reach upright within 10 s and agree."""
    finals = {}
    for backend in ("ekf", "ukf"):
        task = cartpole_swingup_task(backend=backend, n_max=15)
        result = run_closed_loop(task, t_end=10.0)
        assert not result.unstable
        finals[backend] = result.sub_states[-1]
    ok = True
    details = []
    for backend, final in finals.items():
        theta_ok = abs(final[2]) < 0.05
        x_ok = abs(final[0]) < 0.1
        ok = ok and theta_ok and x_ok
        details.append(f"{backend}: |theta|={abs(final[2]):.2e}, |x|={abs(final[0]):.2e}")
    gap = np.max(np.abs(finals["ekf"] - finals["ukf"]))
    ok = ok and gap < 1e-2
    details.append(f"backend gap={gap:.2e}")
    _report(7, "cart-pole swing-up via both nonlinear backends", ok, ", ".join(details))


def test_criterion_8_obstacle_modes_and_tolerances():
    """All measurement modes avoid collision; tightening delta2 converges costs."""
    configs = [("sqp", 1.0)] + [("gradient", alpha) for alpha in (1.0, 2.0, 4.0, 8.0, 32.0)]
    deltas = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    all_ok = True
    details = []
    for mode, alpha in configs:
        ref_task = lds_obstacle_task(mode=mode, alpha=alpha, n_max=40, termination_enabled=False)
        ref_res = run_closed_loop(ref_task, t_end=12.0)
        ref_cost = integrated_cost(ref_res, ref_task)
        collision_free = not ref_res.unstable and ref_res.min_distance > 0.0
        ratios = []
        for delta2 in deltas:
            task = lds_obstacle_task(
                mode=mode, alpha=alpha, n_max=40, termination_enabled=True, delta1=np.inf, delta2=delta2
            )
            res = run_closed_loop(task, t_end=12.0)
            collision_free = collision_free and not res.unstable and res.min_distance > 0.0
            ratios.append(integrated_cost(res, task) / ref_cost)
        # The discrete horizon interacts with the tau threshold, which puts
        # percent-scale jitter on the ratio curve; monotonicity is therefore
        # enforced at that granularity.
        non_increasing = all(ratios[i + 1] <= ratios[i] + 0.02 for i in range(len(ratios) - 1))
        converged = abs(ratios[-1] - 1.0) <= 0.01
        all_ok = all_ok and collision_free and non_increasing and converged
        details.append(f"{mode}/a{alpha:g}: r={ratios[-1]:.4f} mono={non_increasing} free={collision_free}")
    _report(8, "obstacle scenario: collision-free, tolerance-convergent", all_ok, "; ".join(details))


def test_criterion_9_scalability():
    """Update time is linear in N and ordered efficient <= forward-only <= naive."""
    rows = benchmark_scaling(
        n_grid=(10, 50, 100, 150, 200, 250),
        repetitions=11,
        warmup=2,
    )
    fits = fit_scaling(rows)
    quad_ok = all(fit["quad_share_at_nmax"] <= 0.05 for fit in fits.values())
    worst_quad = max(fit["quad_share_at_nmax"] for fit in fits.values())

    by_cell: dict = {}
    for row in rows:
        by_cell.setdefault((row.plant, row.backend, row.horizon), {})[row.algorithm] = row.median_ns
    order_ok = True
    for (plant, backend, n), cell in by_cell.items():
        if "efficient" in cell and "forward_only" in cell:
            order_ok = order_ok and cell["efficient"] <= cell["forward_only"]
        if "forward_only" in cell and "naive" in cell:
            order_ok = order_ok and cell["forward_only"] <= cell["naive"]
    _report(
        9,
        "linear horizon scaling with the expected algorithm ordering",
        quad_ok and order_ok,
        f"max quad share={worst_quad:.3f}, ordering={'ok' if order_ok else 'violated'}",
    )


def test_criterion_10_measurement_mode_equivalence():
    """Duality, SQP, and gradient modes produce identical controls on quadratics."""
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(10):
        model = random_lti_model(rng, n=3, m=2)
        w = np.linalg.inv(model.r_grave)
        z = rng.normal(size=5)
        state = AugmentedState(x=rng.normal(size=3), u=rng.normal(size=2))
        cfg = ControllerConfig(n_max=12)
        oracle = ObjectiveOracle(
            gradient=lambda chi, w=w, z=z: w @ (chi - z),
            hessian=lambda chi, w=w: w,
            residual=lambda chi, z=z: chi - z,
            jacobian=lambda chi: np.eye(5),
            alpha=1.0,
            weight_inv=model.r_grave,
        )
        u_d = efficient_oc(model, state, DualityProvider(lambda k, z=z: z, model.r_grave), cfg).u0
        u_s = efficient_oc(model, state, OracleProvider(lambda k, o=oracle: o, mode="sqp"), cfg).u0
        u_g = efficient_oc(model, state, OracleProvider(lambda k, o=oracle: o, mode="gradient"), cfg).u0
        worst = max(worst, float(np.max(np.abs(u_s - u_d))), float(np.max(np.abs(u_g - u_d))))
    _report(10, "measurement-mode equivalence at 1e-8 on quadratic objectives", worst <= 1e-8, f"worst={worst:.3g}")
