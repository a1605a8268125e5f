"""CSV emission and figure rendering for the CLI report paths.

CSV files follow the schemas in docs/csv_schemas.md: RFC-4180 quoting, UTF-8,
a header row, deterministic row ordering, and shortest round-trip float
formatting, so identical configurations produce byte-identical files (the
benchmark table, which records measured wall-clock times, is the documented
exception). Figures are optional companions rendered next to the CSVs.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from ocontrol.harness import BenchmarkRow, ControlTask, SimResult, TerminationRecord


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def write_trajectory_csv(path: Path, result: SimResult) -> None:
    n = result.sub_states.shape[1]
    m = result.sub_controls.shape[1]
    header = ["t", *(f"x{i}" for i in range(n)), *(f"u{i}" for i in range(m))]
    rows = [
        [t, *xs, *us]
        for t, xs, us in zip(result.sub_times, result.sub_states, result.sub_controls)
    ]
    write_csv(path, header, rows)


def write_diagnostics_csv(path: Path, result: SimResult) -> None:
    header = ["t", "steps_used", "rho", "tau"]
    rows = [
        [t, k, rho, tau]
        for t, k, rho, tau in zip(result.times, result.steps_used, result.rho_final, result.tau_final)
    ]
    write_csv(path, header, rows)


def write_gains_csv(path: Path, rows: Sequence[dict]) -> None:
    if not rows:
        return
    keff_cols = [f"keff_{i}" for i in range(len(rows[0]["keff"]))]
    header = ["n", *keff_cols, "keff_err", "lambda0_norm", "lambda_tail_max"]
    out = [
        [r["n"], *r["keff"], r["keff_err"], r["lambda0_norm"], r["lambda_tail_max"]]
        for r in rows
    ]
    write_csv(path, header, out)


def write_termination_csv(path: Path, records: Sequence[TerminationRecord]) -> None:
    header = ["order", "k", "rho", "tau", "heuristic"]
    rows = []
    for rec in records:
        for k in range(rec.rho.size):
            rows.append([rec.order, k, rec.rho[k], rec.tau[k], rec.heuristic[k]])
    write_csv(path, header, rows)


def write_benchmark_csv(path: Path, rows: Sequence[BenchmarkRow]) -> None:
    header = ["plant", "algorithm", "backend", "n", "median_ns", "repetitions"]
    ordered = sorted(rows, key=lambda r: (r.plant, r.backend, r.algorithm, r.horizon))
    write_csv(path, header, [[r.plant, r.algorithm, r.backend, r.horizon, r.median_ns, r.repetitions] for r in ordered])


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_simulation(path: Path, result: SimResult, task: ControlTask) -> None:
    """State/control traces; planar tasks additionally get an x-y path with obstacles."""
    plt = _matplotlib()
    n = result.sub_states.shape[1]
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
    for i in range(n):
        axes[0].plot(result.sub_times, result.sub_states[:, i], label=f"x{i}")
    axes[0].set_ylabel("state")
    axes[0].legend(loc="best", fontsize=8)
    for j in range(result.sub_controls.shape[1]):
        axes[1].step(result.sub_times, result.sub_controls[:, j], label=f"u{j}", where="post")
    axes[1].set_xlabel("time [s]")
    axes[1].set_ylabel("control")
    axes[1].legend(loc="best", fontsize=8)
    fig.suptitle(task.name)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)

    plant = task.sim_plant
    if getattr(plant, "obstacles", None):
        fig, ax = plt.subplots(figsize=(5.5, 5.5))
        ax.plot(result.sub_states[:, 0], result.sub_states[:, 1], label="path")
        refs = np.array([task.state_ref(t)[:2] for t in result.sub_times])
        ax.plot(refs[:, 0], refs[:, 1], "--", label="reference")
        for cx, cy, radius in plant.obstacles:
            ax.add_patch(plt.Circle((cx, cy), radius, color="tab:red", alpha=0.35))
            ax.add_patch(
                plt.Circle((cx, cy), radius + plant.d_zero, color="tab:red", alpha=0.08)
            )
        ax.set_aspect("equal")
        ax.legend(loc="best", fontsize=8)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        fig.tight_layout()
        fig.savefig(path.with_name(path.stem + "_path.png"), dpi=130)
        plt.close(fig)


def render_termination(path: Path, records: Sequence[TerminationRecord]) -> None:
    plt = _matplotlib()
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 7.0), sharex=True)
    for rec in records:
        ks = np.arange(rec.rho.size)
        axes[0].semilogy(ks[rec.rho > 0], rec.rho[rec.rho > 0], marker=".", label=f"order {rec.order}")
        axes[1].semilogy(ks[rec.tau > 0], rec.tau[rec.tau > 0], marker=".", label=f"order {rec.order}")
        axes[1].semilogy(ks, rec.heuristic, ":", alpha=0.6)
    axes[0].set_ylabel("refinement gain norm")
    axes[1].set_ylabel("covariance decrement (normalized)")
    axes[1].set_xlabel("horizon step")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_gains(path: Path, rows: Sequence[dict]) -> None:
    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ns = [r["n"] for r in rows]
    errs = [max(r["keff_err"], 1e-300) for r in rows]
    ax.semilogy(ns, errs, marker=".")
    ax.set_xlabel("horizon length")
    ax.set_ylabel("reactive gain error")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_benchmark(path: Path, rows: Sequence[BenchmarkRow]) -> None:
    plt = _matplotlib()
    combos: dict[tuple[str, str], dict[str, list]] = {}
    for row in rows:
        combos.setdefault((row.plant, row.backend), {}).setdefault(row.algorithm, []).append(row)
    fig, axes = plt.subplots(1, len(combos), figsize=(4.5 * len(combos), 4.0), squeeze=False)
    for ax, ((plant, backend), algs) in zip(axes[0], sorted(combos.items())):
        for algorithm, alg_rows in sorted(algs.items()):
            alg_rows = sorted(alg_rows, key=lambda r: r.horizon)
            ax.plot(
                [r.horizon for r in alg_rows],
                [r.median_ns / 1e6 for r in alg_rows],
                marker=".",
                label=algorithm,
            )
        ax.set_title(f"{plant} ({backend})")
        ax.set_xlabel("horizon length")
        ax.set_ylabel("median update [ms]")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130)
    plt.close(fig)
