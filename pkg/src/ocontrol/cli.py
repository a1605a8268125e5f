"""Command-line front end: simulate, gains, termination-study, benchmark.

Every command takes a TOML configuration file and an output directory and
emits CSV artifacts (plus figures with --plots). Exit codes: 0 success,
1 runtime failure, 2 configuration error, 3 unstable closed-loop run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ocontrol.config import ConfigError, RunConfig, load_config
from ocontrol.controllers import compute_keff_lambda, estimate_horizon
from ocontrol.errors import OcontrolError
from ocontrol.filters import closed_loop_lambda_max
from ocontrol.harness import (
    DEFAULT_BENCH_COMBOS,
    DEFAULT_LDS_TIMES,
    DEFAULT_LDS_WAYPOINTS,
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
from ocontrol.linalg import spectral_norm
from ocontrol.plants import CartPolePlant, CompanionFamily, LinearDragPlant, MsdPlant
from ocontrol import reports

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3


def _build_task(cfg: RunConfig):
    if cfg.plant_type == "msd":
        plant = MsdPlant(**{k: cfg.plant_params[k] for k in cfg.plant_params})
        if cfg.algorithm == "lqr_baseline":
            return lqr_baseline_task(step_time=cfg.step_time, target=cfg.target, plant=plant)
        return msd_step_task(
            algorithm=cfg.algorithm,
            n_max=cfg.n_max,
            anticipatory=cfg.anticipatory,
            step_time=cfg.step_time,
            target=cfg.target,
            plant=plant,
            termination_enabled=cfg.termination,
            delta1=cfg.delta1,
            delta2=cfg.delta2,
        )
    if cfg.plant_type == "linear_drag":
        plant = LinearDragPlant(**{k: cfg.plant_params[k] for k in cfg.plant_params})
        waypoints = cfg.points or list(DEFAULT_LDS_WAYPOINTS)
        times = cfg.times or list(DEFAULT_LDS_TIMES)
        if cfg.algorithm in ("anytime", "lqr_baseline"):
            raise ConfigError(f"algorithm {cfg.algorithm!r} is not available for the obstacle task")
        return lds_obstacle_task(
            mode=cfg.mode,
            alpha=cfg.alpha,
            n_max=cfg.n_max,
            algorithm=cfg.algorithm,
            termination_enabled=cfg.termination,
            delta1=cfg.delta1,
            delta2=cfg.delta2,
            plant=plant,
            waypoints=waypoints,
            times=times,
        )
    if cfg.plant_type == "cartpole":
        plant = CartPolePlant(**{k: cfg.plant_params[k] for k in cfg.plant_params})
        if cfg.backend not in ("ekf", "ukf"):
            raise ConfigError("cartpole requires an ekf or ukf backend")
        return cartpole_swingup_task(
            backend=cfg.backend,
            n_max=cfg.n_max,
            alpha=cfg.alpha,
            algorithm=cfg.algorithm,
            plant=plant,
            termination_enabled=cfg.termination,
            delta1=cfg.delta1,
            delta2=cfg.delta2,
        )
    raise ConfigError(f"plant type {cfg.plant_type!r} has no simulate task")


def _seed_check(cfg: RunConfig) -> None:
    """Cross-check algorithm agreement on the configured task before running."""
    from ocontrol.augmented import AugmentedState
    from ocontrol.controllers import batch_oracle

    if cfg.plant_type != "msd":
        return
    task_a = msd_step_task(algorithm="naive", n_max=min(cfg.n_max, 30))
    task_b = msd_step_task(algorithm="forward_only", n_max=min(cfg.n_max, 30))
    task_c = msd_step_task(algorithm="efficient", n_max=min(cfg.n_max, 30))
    x = np.array([0.3, -0.1])
    u = np.array([0.2])
    outs = [t.tick(x, u, 0.0).u0 for t in (task_a, task_b, task_c)]
    worst = max(float(np.max(np.abs(outs[0] - outs[2]))), float(np.max(np.abs(outs[1] - outs[2]))))
    if worst > 1e-9:
        raise OcontrolError(f"seed check failed: algorithm disagreement {worst:.3g}")
    print(f"seed_check=ok algorithm_agreement={worst:.3g}")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir)
    if args.seed_check:
        _seed_check(cfg)
    task = _build_task(cfg)
    result = run_closed_loop(task, t_end=cfg.t_end, sim_substeps=cfg.substeps)
    if result.unstable:
        print(f"run=unstable t={result.times[-1] if result.times.size else 0.0}")
        return EXIT_UNSTABLE
    cost = integrated_cost(result, task)
    reports.write_trajectory_csv(out_dir / "trajectory.csv", result)
    reports.write_diagnostics_csv(out_dir / "diagnostics.csv", result)
    if args.plots:
        reports.render_simulation(out_dir / "trajectory.png", result, task)
    final = result.sub_states[-1]
    summary = [
        f"cost={cost!r}",
        f"mean_steps_used={float(np.mean(result.steps_used))!r}",
        f"ticks={len(result.times)}",
        f"final_state={' '.join(repr(float(v)) for v in final)!r}",
    ]
    if task.distance_fn is not None:
        summary.append(f"min_distance={result.min_distance!r}")
    if cfg.plant_type == "cartpole":
        summary.append(f"final_abs_theta={abs(float(final[2]))!r}")
    print(" ".join(summary))
    return EXIT_OK


def cmd_gains(args) -> int:
    cfg = load_config(args.config)
    if cfg.plant_type != "msd":
        raise ConfigError("gains command requires a linear time-invariant plant (msd)")
    from ocontrol.augmented import AugmentedModel, build_augmented, map_lqr_weights, LqrWeights
    from ocontrol.controllers import DualityProvider
    from ocontrol.lqr import tracking_gain_and_target
    from ocontrol.plants import default_msd_weights

    plant = MsdPlant(**{k: cfg.plant_params[k] for k in cfg.plant_params})
    weights = default_msd_weights()
    a, b = plant.discrete()
    phi, h_full = build_augmented(a, b)
    w = LqrWeights(q=weights["q"], r=weights["r"], m_cross=weights["m_cross"], r_tilde=weights["r_tilde"])
    q_grave, r_grave = map_lqr_weights(w)
    model = AugmentedModel(phi=phi, h=h_full, q_grave=q_grave, r_grave=r_grave, dt=plant.dt, n=2, m=1)
    provider = DualityProvider(lambda k: np.zeros(3), r_grave)
    k_lqr, _, _ = tracking_gain_and_target(
        phi, b, weights["q"], weights["r_tilde"], np.zeros(2), r=weights["r"], m_cross=weights["m_cross"]
    )
    n_max = int(cfg.study.get("n_max", 60))
    rows = []
    prev_err = np.inf
    for n in range(n_max + 1):
        keff, lambdas = compute_keff_lambda(model, provider, n)
        err = spectral_norm(keff - k_lqr)
        if err > prev_err + 1e-12:
            raise OcontrolError(f"gain error increased at N={n}: {err:.3g} > {prev_err:.3g}")
        prev_err = err
        rows.append(
            {
                "n": n,
                "keff": [float(v) for v in np.ravel(keff)],
                "keff_err": err,
                "lambda0_norm": spectral_norm(lambdas[0]),
                "lambda_tail_max": max(spectral_norm(lam) for lam in lambdas[1:]) if len(lambdas) > 1 else 0.0,
            }
        )
    out_dir = Path(args.out_dir)
    reports.write_gains_csv(out_dir / "gains.csv", rows)
    if args.plots:
        reports.render_gains(out_dir / "gains.png", rows)
    lam = closed_loop_lambda_max(phi, h_full, q_grave, r_grave)
    eps = float(cfg.study.get("epsilon", 1e-6))
    print(
        f"k_lqr_norm={spectral_norm(k_lqr)!r} lambda_max={lam!r} "
        f"horizon_estimate={estimate_horizon(lam, eps)} final_err={rows[-1]['keff_err']!r}"
    )
    return EXIT_OK


def cmd_termination_study(args) -> int:
    cfg = load_config(args.config)
    if cfg.plant_type != "companion":
        raise ConfigError("termination-study requires plant type 'companion'")
    poles = cfg.plant_params.get("poles")
    family = CompanionFamily(poles=tuple(poles)) if poles else CompanionFamily()
    orders = [int(v) for v in cfg.study.get("orders", (1, 2, 3, 4, 5))]
    records = termination_study(
        family=family,
        orders=orders,
        n_steps=int(cfg.study.get("n_steps", 60)),
        fit_start=int(cfg.study.get("fit_start", 20)),
        gamma_scale=float(cfg.study.get("gamma_scale", 0.1)),
    )
    out_dir = Path(args.out_dir)
    reports.write_termination_csv(out_dir / "termination.csv", records)
    if args.plots:
        reports.render_termination(out_dir / "termination.png", records)
    for rec in records:
        print(
            f"order={rec.order} rho_argmax={rec.rho_argmax} tau_slope={rec.tau_slope!r} "
            f"two_log_lambda={float(2.0 * np.log(rec.lambda_max))!r}"
        )
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    combos = cfg.study.get("combos")
    combos = tuple(tuple(c) for c in combos) if combos else DEFAULT_BENCH_COMBOS
    n_grid = [int(v) for v in cfg.study.get("n_grid", (10, 50, 100, 150, 200, 250))]
    repetitions = int(cfg.study.get("repetitions", 100))
    warmup = int(cfg.study.get("warmup", 3))
    rows = benchmark_scaling(combos=combos, n_grid=n_grid, repetitions=repetitions, warmup=warmup)
    out_dir = Path(args.out_dir)
    reports.write_benchmark_csv(out_dir / "benchmark.csv", rows)
    if args.plots:
        reports.render_benchmark(out_dir / "benchmark.png", rows)
    for combo, fit in sorted(fit_scaling(rows).items()):
        print(
            f"plant={combo[0]} algorithm={combo[1]} backend={combo[2]} "
            f"slope_ns_per_step={fit['b']!r} quad_share={fit['quad_share_at_nmax']!r}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ocontrol",
        description="Predictive control via filter/smoother recursions: simulate, study, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", cmd_simulate),
        ("gains", cmd_gains),
        ("termination-study", cmd_termination_study),
        ("benchmark", cmd_benchmark),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out-dir", default="out", help="directory for CSV/figure artifacts")
        p.add_argument("--plots", action="store_true", help="render figures alongside the CSVs")
        p.add_argument(
            "--seed-check",
            action="store_true",
            help="run oracle cross-checks before the main run",
        )
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OcontrolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
