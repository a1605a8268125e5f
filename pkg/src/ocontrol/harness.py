"""Closed-loop simulation, scoring, and the study/benchmark engines.

A task bundles the continuous truth plant, the controller (algorithm, model,
backend, measurement mode), and the reference trajectory. The closed loop
ticks the controller at the model period while the plant integrates at a
finer fixed substep, so costs are evaluated on the continuous system. All
runs are deterministic: fixed-step integration, no randomness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ocontrol.augmented import AugmentedModel, AugmentedState, build_augmented, map_lqr_weights
from ocontrol.controllers import (
    ControllerConfig,
    ControllerOutput,
    DualityProvider,
    NonlinearModel,
    OracleProvider,
    anytime_oc,
    efficient_oc,
    forward_only_oc,
    naive_oc,
)
from ocontrol.errors import NonFiniteError, OcontrolError
from ocontrol.filters import closed_loop_lambda_max
from ocontrol.lqr import tracking_gain_and_target
from ocontrol.plants import CartPolePlant, CompanionFamily, LinearDragPlant, MsdPlant, rk4_step

ALGORITHMS = ("naive", "forward_only", "efficient", "anytime")


class StepTrajectory:
    """Reference that jumps from zero to a target at a scheduled time."""

    def __init__(self, target: np.ndarray, step_time: float = 0.0):
        self.target = np.atleast_1d(np.asarray(target, dtype=float))
        self.step_time = step_time

    def position(self, t: float) -> np.ndarray:
        return self.target if t >= self.step_time else np.zeros_like(self.target)

    def velocity(self, t: float) -> np.ndarray:
        return np.zeros_like(self.target)

    @property
    def corner_times(self) -> list[float]:
        return [self.step_time]


class WaypointTrajectory:
    """Piecewise-linear interpolation through timed waypoints, clamped outside."""

    def __init__(self, times: Sequence[float], points: Sequence[Sequence[float]]):
        self.times = np.asarray(times, dtype=float)
        self.points = np.asarray(points, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.points):
            raise ValueError("times and points must align")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")

    def position(self, t: float) -> np.ndarray:
        if t <= self.times[0]:
            return self.points[0].copy()
        if t >= self.times[-1]:
            return self.points[-1].copy()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        frac = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1.0 - frac) * self.points[i] + frac * self.points[i + 1]

    def velocity(self, t: float) -> np.ndarray:
        if t < self.times[0] or t >= self.times[-1]:
            return np.zeros(self.points.shape[1])
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return (self.points[i + 1] - self.points[i]) / (self.times[i + 1] - self.times[i])

    @property
    def corner_times(self) -> list[float]:
        return list(self.times[1:-1])


@dataclass
class ControlTask:
    """A closed-loop scenario: truth plant, controller closure, and scoring data."""

    name: str
    sim_plant: object
    dt: float
    m: int
    x0: np.ndarray
    tick: Callable[[np.ndarray, np.ndarray, float], ControllerOutput]
    state_ref: Callable[[float], np.ndarray]
    cost_weights: np.ndarray
    r_tilde: np.ndarray
    distance_fn: Callable[[np.ndarray], float] | None = None
    extra_cost: Callable[[np.ndarray, float], float] | None = None


@dataclass
class SimResult:
    """Time series and summary of one closed-loop run."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    steps_used: np.ndarray
    rho_final: np.ndarray
    tau_final: np.ndarray
    update_ns: np.ndarray
    sub_times: np.ndarray
    sub_states: np.ndarray
    sub_controls: np.ndarray
    unstable: bool
    min_distance: float = np.inf

    def __post_init__(self):
        n = len(self.times)
        for series in (self.states, self.controls, self.steps_used, self.rho_final, self.tau_final, self.update_ns):
            if len(series) != n:
                raise ValueError("result series lengths differ")


def run_closed_loop(
    task: ControlTask,
    t_end: float,
    sim_substeps: int = 10,
) -> SimResult:
    """Tick the controller and integrate the plant under held controls.

    A non-finite plant state stops the run and marks it unstable rather than
    raising, so sweeps over aggressive configurations survive.
    """
    if sim_substeps < 1:
        raise ValueError("sim_substeps must be at least 1")
    n_ticks = int(round(t_end / task.dt))
    x = np.asarray(task.x0, dtype=float).copy()
    u_last = np.zeros(task.m)
    times, states, controls = [], [], []
    steps_used, rho_final, tau_final, update_ns = [], [], [], []
    sub_times, sub_states, sub_controls = [], [], []
    unstable = False
    min_distance = np.inf
    h = task.dt / sim_substeps
    for tick_idx in range(n_ticks):
        t = tick_idx * task.dt
        start = time.perf_counter_ns()
        try:
            out = task.tick(x, u_last, t)
        except (OcontrolError, np.linalg.LinAlgError):
            # Controller numerics breaking down mid-run is a divergence
            # symptom; record the run as unstable instead of crashing sweeps.
            unstable = True
            break
        update_ns.append(time.perf_counter_ns() - start)
        u = np.atleast_1d(out.u0)
        times.append(t)
        states.append(x.copy())
        controls.append(u.copy())
        steps_used.append(out.steps_used)
        rho_final.append(out.rho_trace[-1] if out.rho_trace.size else np.nan)
        tau_final.append(out.tau_trace[-1] if out.tau_trace.size else np.nan)
        for j in range(sim_substeps):
            sub_times.append(t + j * h)
            sub_states.append(x.copy())
            sub_controls.append(u.copy())
            if task.distance_fn is not None:
                min_distance = min(min_distance, task.distance_fn(x))
            try:
                x = rk4_step(task.sim_plant, x, u, h)
            except NonFiniteError:
                unstable = True
                break
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
                unstable = True
                break
        u_last = u
        if unstable:
            break
    sub_times.append(n_ticks * task.dt if not unstable else len(sub_times) * h)
    sub_states.append(x.copy())
    sub_controls.append(u_last.copy())
    if task.distance_fn is not None and np.all(np.isfinite(x)):
        min_distance = min(min_distance, task.distance_fn(x))
    return SimResult(
        times=np.asarray(times),
        states=np.asarray(states),
        controls=np.asarray(controls),
        steps_used=np.asarray(steps_used, dtype=int),
        rho_final=np.asarray(rho_final),
        tau_final=np.asarray(tau_final),
        update_ns=np.asarray(update_ns, dtype=np.int64),
        sub_times=np.asarray(sub_times),
        sub_states=np.asarray(sub_states),
        sub_controls=np.asarray(sub_controls),
        unstable=unstable,
        min_distance=min_distance,
    )


def integrated_cost(result: SimResult, task: ControlTask) -> float:
    """Trapezoidal quadrature of the blocked quadratic stage cost on the continuous plant.

    The integrand jumps where the held control switches, so each control tick
    is integrated as its own segment (with that tick's control at both
    endpoints); the state itself is continuous across ticks. The control-rate
    penalty is accumulated once per tick.
    """
    if result.unstable:
        return np.inf
    w = task.cost_weights
    n_ticks = len(result.times)
    substeps = (len(result.sub_times) - 1) // max(n_ticks, 1)

    def stage(t: float, xs: np.ndarray, us: np.ndarray) -> float:
        err = np.concatenate([xs, us]) - task.state_ref(t)
        value = float(err @ w @ err)
        if task.extra_cost is not None:
            value += task.extra_cost(xs, t)
        return value

    cost = 0.0
    for k in range(n_ticks):
        u = result.controls[k]
        lo = k * substeps
        hi = min(lo + substeps, len(result.sub_times) - 1)
        ts = result.sub_times[lo : hi + 1]
        # The segment owns [t_lo, t_hi); a reference jump at t_hi belongs to
        # the next segment, so the endpoint is evaluated at the left limit.
        t_left_limit = ts[-1] - 1e-9 * task.dt
        values = [
            stage(min(t, t_left_limit), xs, u)
            for t, xs in zip(ts, result.sub_states[lo : hi + 1])
        ]
        cost += float(np.trapezoid(values, ts))
    du = np.diff(result.controls, axis=0, prepend=np.zeros((1, task.m)))
    cost += float(np.einsum("ij,jk,ik->", du, task.r_tilde, du))
    return cost


def _select_algorithm(name: str):
    table = {"naive": naive_oc, "forward_only": forward_only_oc, "efficient": efficient_oc}
    if name not in table:
        raise ValueError(f"unknown algorithm {name!r}")
    return table[name]


def msd_step_task(
    algorithm: str = "efficient",
    n_max: int = 50,
    anticipatory: bool = True,
    step_time: float = 1.1,
    target: Sequence[float] = (1.0, 0.0),
    plant: MsdPlant | None = None,
    termination_enabled: bool = False,
    delta1: float = 1e-4,
    delta2: float = 1e-7,
) -> ControlTask:
    """Mass-spring-damper step task with state-only penalties.

    The measurement drops the control row, so the horizon supplies the
    steady-state control itself; the any-time variant pairs the same
    measurements with the incremental regulator gain and the steady-state
    augmented target.
    """
    from ocontrol.plants import default_msd_weights

    plant = plant or MsdPlant()
    weights = default_msd_weights()
    a, b = plant.discrete()
    phi, h_full = build_augmented(a, b)
    q_grave, _ = map_lqr_weights(
        _weights_obj(weights["q"], weights["r"], weights["m_cross"], weights["r_tilde"])
    )
    r_state = np.linalg.inv(weights["q"])
    traj = StepTrajectory(np.asarray(target, dtype=float), step_time)
    selection = np.array([0, 1])
    model = AugmentedModel(
        phi=phi, h=np.eye(3)[selection], q_grave=q_grave, r_grave=r_state, dt=plant.dt, n=2, m=1
    )
    config = ControllerConfig(
        n_max=n_max,
        delta1=delta1,
        delta2=delta2,
        mode="duality",
        backend="kf",
        termination_enabled=termination_enabled,
    )

    k_gain = target_fn = None
    if algorithm == "anytime":
        k_gain, _, _ = tracking_gain_and_target(phi, b, weights["q"], weights["r_tilde"], np.zeros(2))

        def target_fn(t: float) -> np.ndarray:
            from ocontrol.lqr import steady_state_control

            x_ref = traj.position(t)
            return np.concatenate([x_ref, steady_state_control(a, b, x_ref)])

    def tick(x: np.ndarray, u_last: np.ndarray, t: float) -> ControllerOutput:
        def targets(k: int) -> np.ndarray:
            t_k = t + k * plant.dt if anticipatory else t
            return traj.position(t_k)

        if algorithm == "anytime":
            provider = DualityProvider(
                targets,
                r_state,
                selection,
                full_targets=lambda k: target_fn(t + k * plant.dt if anticipatory else t),
            )
            return anytime_oc(model, x, u_last, provider, config, k_gain)
        provider = DualityProvider(targets, r_state, selection)
        return _select_algorithm(algorithm)(model, AugmentedState(x=x, u=u_last), provider, config)

    blocked = _weights_obj(weights["q"], weights["r"], weights["m_cross"], weights["r_tilde"]).blocked()

    def state_ref(t: float) -> np.ndarray:
        return np.concatenate([traj.position(t), np.zeros(1)])

    return ControlTask(
        name=f"msd_{algorithm}",
        sim_plant=plant,
        dt=plant.dt,
        m=1,
        x0=np.zeros(2),
        tick=tick,
        state_ref=state_ref,
        cost_weights=blocked,
        r_tilde=weights["r_tilde"],
    )


def lqr_baseline_task(
    step_time: float = 1.1,
    target: Sequence[float] = (1.0, 0.0),
    plant: MsdPlant | None = None,
) -> ControlTask:
    """Incremental LQR with steady-state compensation, as the reference controller."""
    from ocontrol.plants import default_msd_weights

    plant = plant or MsdPlant()
    weights = default_msd_weights()
    a, b = plant.discrete()
    phi, _ = build_augmented(a, b)
    k_gain, _, _ = tracking_gain_and_target(phi, b, weights["q"], weights["r_tilde"], np.zeros(2))
    traj = StepTrajectory(np.asarray(target, dtype=float), step_time)

    def tick(x: np.ndarray, u_last: np.ndarray, t: float) -> ControllerOutput:
        from ocontrol.lqr import steady_state_control

        x_ref = traj.position(t)
        chi_target = np.concatenate([x_ref, steady_state_control(a, b, x_ref)])
        u = u_last + k_gain @ (chi_target - np.concatenate([x, u_last]))
        return ControllerOutput(
            u0=u,
            trace_p0s=np.nan,
            steps_used=0,
            rho_trace=np.array([]),
            tau_trace=np.array([]),
            residual_norms=np.array([]),
        )

    blocked = _weights_obj(weights["q"], weights["r"], weights["m_cross"], weights["r_tilde"]).blocked()

    def state_ref(t: float) -> np.ndarray:
        return np.concatenate([traj.position(t), np.zeros(1)])

    return ControlTask(
        name="msd_lqr_baseline",
        sim_plant=plant,
        dt=plant.dt,
        m=1,
        x0=np.zeros(2),
        tick=tick,
        state_ref=state_ref,
        cost_weights=blocked,
        r_tilde=weights["r_tilde"],
    )


def _weights_obj(q, r, m_cross, r_tilde):
    from ocontrol.augmented import LqrWeights

    return LqrWeights(q=q, r=r, m_cross=m_cross, r_tilde=r_tilde)


DEFAULT_OBSTACLES = ((0.8, 0.7, 0.25), (2.3, 2.2, 0.25))
DEFAULT_LDS_WAYPOINTS = ((0.0, 0.0), (1.6, 1.4), (3.0, 3.0))
DEFAULT_LDS_TIMES = (0.0, 6.0, 12.0)


def lds_obstacle_task(
    mode: str = "sqp",
    alpha: float = 1.0,
    n_max: int = 40,
    algorithm: str = "forward_only",
    termination_enabled: bool = True,
    delta1: float = np.inf,
    delta2: float = 1e-4,
    plant: LinearDragPlant | None = None,
    waypoints: Sequence[Sequence[float]] = DEFAULT_LDS_WAYPOINTS,
    times: Sequence[float] = DEFAULT_LDS_TIMES,
) -> ControlTask:
    """Planar drag plant tracking a collision-containing trajectory.

    The reference runs straight through the obstacle set; the proximity cost
    deflects the closed-loop path around it. Gradient mode exposes the step
    size alpha; SQP mode takes damped Newton steps of the scalar objective.
    """
    plant = plant or LinearDragPlant(obstacles=DEFAULT_OBSTACLES)
    a, b = plant.discrete()
    phi, h_full = build_augmented(a, b)
    q_grave = np.zeros((6, 6))
    r_tilde = np.eye(2) * 0.1
    q_grave[4:, 4:] = np.linalg.inv(r_tilde)
    traj = WaypointTrajectory(times, waypoints)
    model = AugmentedModel(
        phi=phi,
        h=np.eye(6)[:4],
        q_grave=q_grave,
        r_grave=np.linalg.inv(plant.w_chi),
        dt=plant.dt,
        n=4,
        m=2,
    )
    config = ControllerConfig(
        n_max=n_max,
        delta1=delta1,
        delta2=delta2,
        mode=mode,
        backend="kf",
        termination_enabled=termination_enabled,
    )

    def chi_ref_at(t: float) -> np.ndarray:
        pos = traj.position(t)
        vel = traj.velocity(t)
        return np.concatenate([pos, vel, np.zeros(2)])

    def tick(x: np.ndarray, u_last: np.ndarray, t: float) -> ControllerOutput:
        def oracle(k: int):
            ref = chi_ref_at(t + k * plant.dt)
            if mode == "sqp":
                return plant.sqp_oracle(ref)
            return plant.gradient_oracle(ref, alpha=alpha)

        provider = OracleProvider(oracle, mode=mode)
        return _select_algorithm(algorithm)(model, AugmentedState(x=x, u=u_last), provider, config)

    blocked = np.zeros((6, 6))
    blocked[:4, :4] = plant.w_chi

    def state_ref(t: float) -> np.ndarray:
        return chi_ref_at(t)

    def distance(x: np.ndarray) -> float:
        return plant.min_distance(x[:2])[0]

    def extra(x: np.ndarray, t: float) -> float:
        from ocontrol.plants import obstacle_cost

        return plant.w_obstacle * obstacle_cost(distance(x), plant.d_zero)

    return ControlTask(
        name=f"lds_{mode}_a{alpha:g}",
        sim_plant=plant,
        dt=plant.dt,
        m=2,
        x0=np.zeros(4),
        tick=tick,
        state_ref=state_ref,
        cost_weights=0.5 * blocked,
        r_tilde=r_tilde,
        distance_fn=distance,
        extra_cost=lambda xs, t: 0.5 * extra(xs, t),
    )


def cartpole_swingup_task(
    backend: str = "ekf",
    n_max: int = 15,
    alpha: float = 1.0,
    algorithm: str = "forward_only",
    plant: CartPolePlant | None = None,
    termination_enabled: bool = False,
    delta1: float = 1e-4,
    delta2: float = 1e-7,
) -> ControlTask:
    """Swing the pole from hanging rest to upright and balance.

    Forward-only control with an EKF or UKF backend and the gradient
    measurement mode on the quadratic swing-up objective. The short horizon
    is deliberate: it keeps the per-tick plan inside the trust region of the
    sequential linearization, which is what pumps energy into the swing.
    """
    plant = plant or CartPolePlant()
    q_grave = np.zeros((5, 5))
    q_grave[4, 4] = 1.0 / plant.w_force
    model = NonlinearModel(plant=plant, q_grave=q_grave, m=1)
    config = ControllerConfig(
        n_max=n_max,
        delta1=delta1,
        delta2=delta2,
        mode="gradient",
        backend=backend,
        termination_enabled=termination_enabled,
    )
    chi_ref = np.zeros(5)
    oracle = plant.gradient_oracle(chi_ref, alpha=alpha)

    def tick(x: np.ndarray, u_last: np.ndarray, t: float) -> ControllerOutput:
        provider = OracleProvider(lambda k: oracle, mode="gradient")
        if algorithm == "forward_only" or backend == "ukf":
            return forward_only_oc(model, AugmentedState(x=x, u=u_last), provider, config)
        return _select_algorithm(algorithm)(model, AugmentedState(x=x, u=u_last), provider, config)

    blocked = np.zeros((5, 5))
    blocked[:4, :4] = plant.w_state

    return ControlTask(
        name=f"cartpole_{backend}",
        sim_plant=plant,
        dt=plant.dt,
        m=1,
        x0=np.array([0.0, 0.0, np.pi, 0.0]),
        tick=tick,
        state_ref=lambda t: np.zeros(5),
        cost_weights=blocked,
        r_tilde=np.array([[plant.w_force]]),
    )


@dataclass
class TerminationRecord:
    """Per-order metric traces from one horizon pass on a companion member."""

    order: int
    rho: np.ndarray
    tau: np.ndarray
    rho_argmax: int
    tau_slope: float
    lambda_max: float
    heuristic: np.ndarray


def termination_study(
    family: CompanionFamily | None = None,
    orders: Sequence[int] = (1, 2, 3, 4, 5),
    n_steps: int = 60,
    fit_start: int = 20,
    gamma_scale: float = 0.1,
) -> list[TerminationRecord]:
    """Metric traces for companion systems measured through their first state.

    The position-only output delays information about the control by exactly
    the controllability index, so the refinement gain peaks there; the
    covariance decrement then decays geometrically at the squared closed-loop
    filter rate, which the heuristic line gamma * lambda_max^(2k) overlays.
    """
    family = family or CompanionFamily()
    records = []
    for order in orders:
        a, b = family.member(order)
        phi, _ = build_augmented(a, b)
        q_grave = np.zeros((order + 1, order + 1))
        q_grave[order, order] = 1.0
        r_meas = np.array([[1.0]])
        selection = np.array([0])
        provider = DualityProvider(lambda k: np.zeros(1), r_meas, selection)
        model = AugmentedModel(
            phi=phi,
            h=np.eye(order + 1)[selection],
            q_grave=q_grave,
            r_grave=r_meas,
            dt=1.0,
            n=order,
            m=1,
        )
        config = ControllerConfig(n_max=n_steps, termination_enabled=False, mode="duality", backend="kf")
        out = efficient_oc(model, AugmentedState(x=np.zeros(order), u=np.zeros(1)), provider, config)
        lam = closed_loop_lambda_max(phi, np.eye(order + 1)[selection], q_grave, r_meas)
        ks = np.arange(out.tau_trace.size)
        mask = (ks > fit_start) & (out.tau_trace > 0.0)
        slope = float(np.polyfit(ks[mask], np.log(out.tau_trace[mask]), 1)[0])
        heuristic = gamma_scale * lam ** (2.0 * ks)
        records.append(
            TerminationRecord(
                order=order,
                rho=out.rho_trace,
                tau=out.tau_trace,
                rho_argmax=int(np.argmax(out.rho_trace)),
                tau_slope=slope,
                lambda_max=lam,
                heuristic=heuristic,
            )
        )
    return records


@dataclass
class BenchmarkRow:
    """Median wall-clock nanoseconds for one (plant, algorithm, backend, N) cell."""

    plant: str
    algorithm: str
    backend: str
    horizon: int
    median_ns: float
    repetitions: int


def _benchmark_tasks(plant_name: str, algorithm: str, backend: str, n: int) -> ControlTask:
    if plant_name == "msd":
        return msd_step_task(algorithm=algorithm, n_max=n, termination_enabled=False)
    if plant_name == "linear_drag":
        return lds_obstacle_task(
            mode="sqp", algorithm=algorithm, n_max=n, termination_enabled=False
        )
    if plant_name == "cartpole":
        return cartpole_swingup_task(backend=backend, n_max=n, algorithm=algorithm)
    raise ValueError(f"unknown benchmark plant {plant_name!r}")


DEFAULT_BENCH_COMBOS = (
    ("msd", "naive", "kf"),
    ("msd", "forward_only", "kf"),
    ("msd", "efficient", "kf"),
    ("linear_drag", "naive", "kf"),
    ("linear_drag", "forward_only", "kf"),
    ("linear_drag", "efficient", "kf"),
    ("cartpole", "naive", "ekf"),
    ("cartpole", "forward_only", "ekf"),
    ("cartpole", "efficient", "ekf"),
    ("cartpole", "naive", "ukf"),
    ("cartpole", "forward_only", "ukf"),
)


def benchmark_scaling(
    combos: Sequence[tuple[str, str, str]] = DEFAULT_BENCH_COMBOS,
    n_grid: Sequence[int] = (10, 50, 100, 150, 200, 250),
    repetitions: int = 100,
    warmup: int = 3,
) -> list[BenchmarkRow]:
    """Median control-update times over a horizon grid, termination disabled.

    Repetitions are interleaved across the algorithms of each (plant, backend)
    group so slow drift affects all algorithms alike; only ordering and
    scaling claims are meaningful, never absolute numbers.
    """
    groups: dict[tuple[str, str, int], list[str]] = {}
    for plant_name, algorithm, backend in combos:
        for n in n_grid:
            groups.setdefault((plant_name, backend, n), []).append(algorithm)

    rows = []
    for (plant_name, backend, n), algorithms in groups.items():
        tasks = {alg: _benchmark_tasks(plant_name, alg, backend, n) for alg in algorithms}
        states = {alg: (task.x0, np.zeros(task.m)) for alg, task in tasks.items()}
        samples: dict[str, list[int]] = {alg: [] for alg in algorithms}
        for rep in range(warmup + repetitions):
            for alg in algorithms:
                task = tasks[alg]
                x0, u0 = states[alg]
                start = time.perf_counter_ns()
                task.tick(x0, u0, 0.0)
                elapsed = time.perf_counter_ns() - start
                if rep >= warmup:
                    samples[alg].append(elapsed)
        for alg in algorithms:
            rows.append(
                BenchmarkRow(
                    plant=plant_name,
                    algorithm=alg,
                    backend=backend,
                    horizon=n,
                    median_ns=float(np.median(samples[alg])),
                    repetitions=repetitions,
                )
            )
    return rows


def fit_scaling(rows: Sequence[BenchmarkRow]) -> dict[tuple[str, str, str], dict[str, float]]:
    """Per-combo regression t = a + b N + c N^2 with the quadratic share at max N."""
    by_combo: dict[tuple[str, str, str], list[BenchmarkRow]] = {}
    for row in rows:
        by_combo.setdefault((row.plant, row.algorithm, row.backend), []).append(row)
    fits = {}
    for combo, combo_rows in by_combo.items():
        ns = np.array([r.horizon for r in combo_rows], dtype=float)
        ts = np.array([r.median_ns for r in combo_rows])
        design = np.vstack([np.ones_like(ns), ns, ns**2]).T
        coef, *_ = np.linalg.lstsq(design, ts, rcond=None)
        n_top = ns.max()
        prediction = coef[0] + coef[1] * n_top + coef[2] * n_top**2
        # only superlinear growth counts against linear scalability
        quad_share = max(coef[2], 0.0) * n_top**2 / max(abs(prediction), 1e-300)
        fits[combo] = {
            "a": float(coef[0]),
            "b": float(coef[1]),
            "c": float(coef[2]),
            "quad_share_at_nmax": float(quad_share),
        }
    return fits
