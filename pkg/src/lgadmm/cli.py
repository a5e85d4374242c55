"""Command line harness: solve, relaxation sweeps, comparisons, certification.

Four subcommands drive the calibration benchmark end to end:

``solve``
    One run at a fixed relaxation factor; writes a trajectory CSV, a
    summary JSON, and the instance dump.
``gamma-sweep``
    A grid of relaxation factors crossed with repeat seeds, run in a
    worker pool; writes per-value means as CSV.
``baseline-compare``
    The same instance solved at relaxation 1.0 and 1.9; writes objective
    curves and a two-row summary table.
``certify``
    A strict-mode run whose recorded trajectory is fed through every
    certificate check; writes the reports as JSON and fails the process
    when any check fails.

Options can come from flags or from a ``key=value`` config file; flags
win. Exit codes are a stable contract: 0 success, 2 configuration error,
3 divergence, 4 certificate failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .calibration import (
    CalibrationInstance,
    build_problem,
    default_metrics,
    dump_instance,
    generate_instance,
)
from .certificates import (
    CertificateError,
    assemble_metrics,
    cross_term_check,
    ergodic_average,
    ergodic_gap_check,
    fejer_check,
    nonergodic_monotonicity_check,
    nonergodic_rate_check,
    sigma_gamma,
    step_inequality_check,
    update_recurrence_check,
)
from .problem import (
    BlockProblemError,
    PrimalDualPoint,
    evaluate_objective,
    feasible_probe,
    zeros_point,
)
from .serialization import atomic_write_json, atomic_write_text, format_float
from .solver import (
    ConfigError,
    DivergenceError,
    OracleError,
    SolveResult,
    SolverConfig,
    solve,
    write_trajectory_csv,
)

__all__ = [
    "main",
    "run_solve",
    "run_gamma_sweep",
    "run_baseline_compare",
    "run_certify",
]

DEFAULT_GRID = tuple(round(0.2 * i, 10) for i in range(1, 10))
COMPARE_GAMMAS = (1.0, 1.9)
BURN_IN_FRACTION = 0.1

_COMMON_DEFAULTS = {
    "seed": 0,
    "rho": 1.0,
    "max_iter": 10_000,
    "strict": False,
}

_DEFAULTS = {
    "solve": dict(_COMMON_DEFAULTS, n=50, gamma=1.0, tol=1e-6,
                  out="runs/solve"),
    "gamma-sweep": dict(_COMMON_DEFAULTS, n=50, tol=1e-6, repeat=5,
                        workers=None, gamma_grid=DEFAULT_GRID,
                        out="runs/gamma-sweep"),
    "baseline-compare": dict(_COMMON_DEFAULTS, n=100, tol=1e-6,
                             out="runs/baseline-compare"),
    "certify": dict(_COMMON_DEFAULTS, n=20, gamma=1.5, tol=1e-8, probes=10,
                    negative_control=False, out="runs/certify"),
}

# per-block proximal scale sigma in P_i = sigma I: benchmark default and
# the strict value used for certification
BENCHMARK_SIGMA = 0.5
CERTIFY_SIGMA = 4.0

_BOOL_WORDS = {
    "true": True, "1": True, "yes": True, "on": True,
    "false": False, "0": False, "no": False, "off": False,
}


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad gamma grid {text!r}: {exc}") from None
    if not values:
        raise ConfigError("gamma grid is empty")
    return values


def _grid_argument(text: str) -> tuple[float, ...]:
    try:
        return _parse_grid(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {text!r}") from None


# config-file parsers per option; grid and booleans need special handling
_FILE_PARSERS = {
    "n": int,
    "seed": int,
    "rho": float,
    "gamma": float,
    "tol": float,
    "max_iter": int,
    "repeat": int,
    "workers": int,
    "probes": int,
    "strict": _parse_bool,
    "negative_control": _parse_bool,
    "gamma_grid": _parse_grid,
    "out": str,
}


def _read_config_file(path: str) -> dict:
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _FILE_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _FILE_PARSERS[key](value.strip())
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def _merge_settings(args: argparse.Namespace) -> dict:
    """Layer hard defaults, then the config file, then explicit flags."""
    settings = dict(_DEFAULTS[args.command])
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
        unknown = set(file_values) - set(settings)
        if unknown:
            raise ConfigError(
                f"config keys not used by {args.command}: {sorted(unknown)}"
            )
        settings.update(file_values)
    for key in settings:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            settings[key] = flag_value
    settings["command"] = args.command
    _check_settings(settings)
    return settings


def _check_settings(settings: dict) -> None:
    if settings["n"] < 2:
        raise ConfigError(f"n must be at least 2, got {settings['n']}")
    if settings["rho"] <= 0:
        raise ConfigError(f"rho must be positive, got {settings['rho']}")
    if settings["tol"] <= 0:
        raise ConfigError(f"tolerance must be positive, got {settings['tol']}")
    if settings["max_iter"] < 1:
        raise ConfigError("max-iter must be at least 1")
    if "gamma" in settings and not 0.0 < settings["gamma"] < 2.0:
        raise ConfigError(
            f"gamma must lie strictly between 0 and 2, got {settings['gamma']}"
        )
    if "gamma_grid" in settings:
        bad = [g for g in settings["gamma_grid"] if not 0.0 < g < 2.0]
        if bad:
            raise ConfigError(f"gamma grid values outside (0, 2): {bad}")
    if settings.get("repeat") is not None and settings["repeat"] < 1:
        raise ConfigError("repeat must be at least 1")
    if settings.get("workers") is not None and settings["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    if settings.get("probes") is not None and settings["probes"] < 1:
        raise ConfigError("probes must be at least 1")


def _solver_config(settings: dict, gamma: float, sigma: float,
                   instance: CalibrationInstance, *, strict: bool,
                   record: bool, tolerance: float | None = None,
                   max_iterations: int | None = None) -> SolverConfig:
    return SolverConfig(
        rho=settings["rho"],
        gamma=gamma,
        proximal_metrics=default_metrics(instance, scale=sigma),
        max_iterations=settings["max_iter"] if max_iterations is None else max_iterations,
        tolerance=settings["tol"] if tolerance is None else tolerance,
        strict_theory_mode=strict,
        record_trajectory=record,
    )


def _timed_solve(problem, config, start) -> tuple[SolveResult, float]:
    begin = time.perf_counter()
    result = solve(problem, config, start)
    return result, time.perf_counter() - begin


def _summary_core(settings: dict, gamma: float, result: SolveResult,
                  objective: float, seconds: float) -> dict:
    return {
        "command": settings["command"],
        "n": settings["n"],
        "seed": settings["seed"],
        "rho": settings["rho"],
        "gamma": gamma,
        "tolerance": settings["tol"],
        "max_iterations": settings["max_iter"],
        "iterations": result.iterations,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "final_epsilon": result.final_epsilon,
        "objective": objective,
        "wall_seconds": seconds,
    }


def run_solve(settings: dict) -> int:
    """Solve one calibration instance and write its artifacts.

    Writes ``trajectory.csv``, ``summary.json`` and the instance dump
    (``c_matrix.txt`` plus ``instance.json``) into the output directory.

    Parameters
    ----------
    settings : dict
        Merged options; see ``_DEFAULTS["solve"]`` for the keys.

    Returns
    -------
    int
        Process exit code, 0 on success.
    """
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    instance = generate_instance(settings["n"], settings["seed"])
    problem = build_problem(instance)
    config = _solver_config(settings, settings["gamma"], BENCHMARK_SIGMA,
                            instance, strict=settings["strict"], record=False)
    result, seconds = _timed_solve(problem, config, zeros_point(problem))
    objective = evaluate_objective(problem, result.final)

    write_trajectory_csv(result.reports, problem.num_blocks,
                         os.path.join(out, "trajectory.csv"))
    summary = _summary_core(settings, settings["gamma"], result, objective, seconds)
    summary["validation"] = result.validation.to_dict()
    atomic_write_json(os.path.join(out, "summary.json"), summary)
    dump_instance(instance, out)
    print(f"solve: {result.iterations} iterations, objective {objective:.6f}, "
          f"converged={result.converged} -> {out}")
    return 0


def _sweep_cell(task: tuple) -> dict:
    """One sweep cell (module-level so worker processes can import it)."""
    n, seed, rho, gamma, tol, max_iter = task
    instance = generate_instance(n, seed)
    problem = build_problem(instance)
    config = SolverConfig(
        rho=rho,
        gamma=gamma,
        proximal_metrics=default_metrics(instance, scale=BENCHMARK_SIGMA),
        max_iterations=max_iter,
        tolerance=tol,
    )
    result, seconds = _timed_solve(problem, config, zeros_point(problem))
    return {
        "gamma": gamma,
        "seed": seed,
        "iterations": result.iterations,
        "seconds": seconds,
        "objective": evaluate_objective(problem, result.final),
        "converged": result.converged,
    }


def _spearman(xs: list, ys: list) -> float:
    def ranks(values):
        order = np.argsort(values, kind="stable")
        out = np.empty(len(values))
        out[order] = np.arange(1, len(values) + 1)
        return out

    rx, ry = ranks(xs), ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = float(np.sqrt((rx @ rx) * (ry @ ry)))
    return float(rx @ ry) / denom if denom else 0.0


def run_gamma_sweep(settings: dict) -> int:
    """Sweep the relaxation factor over a grid with repeated seeds.

    Each (grid value, seed) cell is an independent solve, run in a process
    pool; per-value means land in ``sweep.csv`` with columns ``gamma``,
    ``mean_iterations``, ``mean_seconds``, ``mean_objective``, and the
    sweep configuration plus the rank correlation between the grid and the
    mean iteration counts land in ``summary.json``.

    Parameters
    ----------
    settings : dict
        Merged options; see ``_DEFAULTS["gamma-sweep"]`` for the keys.

    Returns
    -------
    int
        Process exit code, 0 on success.
    """
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    grid = tuple(settings["gamma_grid"])
    seeds = [settings["seed"] + r for r in range(settings["repeat"])]
    tasks = [
        (settings["n"], seed, settings["rho"], gamma, settings["tol"],
         settings["max_iter"])
        for gamma in grid for seed in seeds
    ]
    workers = settings["workers"] or min(len(tasks), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_sweep_cell, tasks))
    else:
        cells = [_sweep_cell(task) for task in tasks]

    per_gamma = []
    for gamma in grid:
        rows = [c for c in cells if c["gamma"] == gamma]
        per_gamma.append({
            "gamma": gamma,
            "mean_iterations": float(np.mean([c["iterations"] for c in rows])),
            "mean_seconds": float(np.mean([c["seconds"] for c in rows])),
            "mean_objective": float(np.mean([c["objective"] for c in rows])),
        })

    header = "gamma,mean_iterations,mean_seconds,mean_objective"
    lines = [header]
    for row in per_gamma:
        lines.append(",".join(format_float(row[key]) for key in
                              ("gamma", "mean_iterations", "mean_seconds",
                               "mean_objective")))
    atomic_write_text(os.path.join(out, "sweep.csv"), "\n".join(lines) + "\n")

    spearman = _spearman([row["gamma"] for row in per_gamma],
                         [row["mean_iterations"] for row in per_gamma])
    summary = {
        "command": "gamma-sweep",
        "n": settings["n"],
        "seeds": seeds,
        "rho": settings["rho"],
        "tolerance": settings["tol"],
        "max_iterations": settings["max_iter"],
        "gamma_grid": list(grid),
        "spearman_gamma_iterations": spearman,
        "all_converged": all(c["converged"] for c in cells),
    }
    atomic_write_json(os.path.join(out, "summary.json"), summary)
    print(f"gamma-sweep: {len(tasks)} runs, rank correlation "
          f"{spearman:+.3f} -> {out}")
    return 0


def _monotone_after_burn_in(curve: list[float]) -> bool:
    skip = max(10, int(len(curve) * BURN_IN_FRACTION))
    tail = curve[skip:]
    return all(b <= a + 1e-8 * (1.0 + abs(a)) for a, b in zip(tail, tail[1:]))


def run_baseline_compare(settings: dict) -> int:
    """Solve one instance at relaxation 1.0 and 1.9 and compare the runs.

    Writes ``compare_curves.csv`` (per-iteration objective values, one
    column per run) and ``compare_summary.csv`` (iterations, seconds,
    objective, final epsilon, convergence and curve-shape flags per run),
    plus a ``summary.json`` holding the iteration ratio and the relative
    objective gap between the two runs.

    Parameters
    ----------
    settings : dict
        Merged options; see ``_DEFAULTS["baseline-compare"]`` for the keys.

    Returns
    -------
    int
        Process exit code, 0 on success.
    """
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    instance = generate_instance(settings["n"], settings["seed"])
    problem = build_problem(instance)

    runs = []
    for gamma in COMPARE_GAMMAS:
        config = _solver_config(settings, gamma, BENCHMARK_SIGMA, instance,
                                strict=settings["strict"], record=False)
        result, seconds = _timed_solve(problem, config, zeros_point(problem))
        curve = [report.objective for report in result.reports]
        runs.append({
            "gamma": gamma,
            "iterations": result.iterations,
            "seconds": seconds,
            "objective": evaluate_objective(problem, result.final),
            "final_epsilon": result.final_epsilon,
            "converged": result.converged,
            "monotone_after_burn_in": _monotone_after_burn_in(curve),
            "curve": curve,
        })

    labels = [str(run["gamma"]).replace(".", "_") for run in runs]
    lines = ["k," + ",".join(f"objective_gamma_{label}" for label in labels)]
    for k in range(max(len(run["curve"]) for run in runs)):
        cells = [format_float(run["curve"][k]) if k < len(run["curve"]) else ""
                 for run in runs]
        lines.append(f"{k + 1}," + ",".join(cells))
    atomic_write_text(os.path.join(out, "compare_curves.csv"),
                      "\n".join(lines) + "\n")

    header = ("gamma,iterations,seconds,objective,final_epsilon,"
              "converged,monotone_after_burn_in")
    rows = [header]
    for run in runs:
        rows.append(",".join([
            format_float(run["gamma"]),
            str(run["iterations"]),
            format_float(run["seconds"]),
            format_float(run["objective"]),
            format_float(run["final_epsilon"]),
            str(run["converged"]).lower(),
            str(run["monotone_after_burn_in"]).lower(),
        ]))
    atomic_write_text(os.path.join(out, "compare_summary.csv"),
                      "\n".join(rows) + "\n")

    first, second = runs
    gap_scale = max(abs(first["objective"]), abs(second["objective"]), 1e-30)
    summary = {
        "command": "baseline-compare",
        "n": settings["n"],
        "seed": settings["seed"],
        "rho": settings["rho"],
        "tolerance": settings["tol"],
        "gammas": list(COMPARE_GAMMAS),
        "iteration_ratio": first["iterations"] / second["iterations"],
        "objective_relative_gap":
            abs(first["objective"] - second["objective"]) / gap_scale,
        "all_converged": all(run["converged"] for run in runs),
    }
    atomic_write_json(os.path.join(out, "summary.json"), summary)
    print(f"baseline-compare: {first['iterations']} vs {second['iterations']} "
          f"iterations (ratio {summary['iteration_ratio']:.2f}) -> {out}")
    return 0


def _corrupt_trajectory(trajectory, magnitude: float = 1e3) -> int:
    """Shift one interior point so identity and contraction checks break."""
    mid = len(trajectory.points) // 2
    point = trajectory.points[mid]
    primal = list(point.primal)
    primal[0] = primal[0] + magnitude
    trajectory.points[mid] = PrimalDualPoint(tuple(primal),
                                             point.dual + magnitude)
    return mid


def run_certify(settings: dict) -> int:
    """Run a strict-mode solve and evaluate every certificate check on it.

    The proximal metrics are fixed at the strict default (4 times the
    identity per block) so the coupled first-phase metric is positive
    definite; the reference point comes from a second, tighter solve. All
    checks are written to ``certificates.json``; any failed check turns
    into exit code 4. The ``negative_control`` setting corrupts one
    recorded point first, to prove the checks can fail.

    Parameters
    ----------
    settings : dict
        Merged options; see ``_DEFAULTS["certify"]`` for the keys.

    Returns
    -------
    int
        Process exit code, 0 when every check passes, 4 otherwise.
    """
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    instance = generate_instance(settings["n"], settings["seed"])
    problem = build_problem(instance)
    gamma = settings["gamma"]

    config = _solver_config(settings, gamma, CERTIFY_SIGMA, instance,
                            strict=True, record=True)
    result, seconds = _timed_solve(problem, config, zeros_point(problem))
    trajectory = result.trajectory

    reference_config = _solver_config(
        settings, gamma, CERTIFY_SIGMA, instance, strict=True, record=False,
        tolerance=settings["tol"] * 1e-2,
        max_iterations=settings["max_iter"] * 10,
    )
    reference = solve(problem, reference_config, zeros_point(problem)).final

    metrics = assemble_metrics(problem, config)
    rng = np.random.default_rng(settings["seed"] + 2_000_000)
    probes = [feasible_probe(problem, rng) for _ in range(settings["probes"])]

    corrupted_at = None
    if settings["negative_control"]:
        corrupted_at = _corrupt_trajectory(trajectory)

    average = ergodic_average(trajectory.auxiliaries)
    reports = [
        update_recurrence_check(metrics, trajectory),
        fejer_check(metrics, trajectory, reference),
        nonergodic_monotonicity_check(metrics, trajectory),
        nonergodic_rate_check(metrics, trajectory, reference),
        cross_term_check(trajectory, config.proximal_metrics[-1],
                         problem.blocks[-1].linear_map),
        ergodic_gap_check(problem, metrics, average, probes,
                          trajectory.points[0],
                          len(trajectory.auxiliaries) - 1),
        step_inequality_check(problem, metrics, trajectory, probes),
    ]
    failed = [r.check for r in reports if r.passed is False]
    skipped = [r.check for r in reports if r.skipped]

    summary = _summary_core(settings, gamma, result,
                            evaluate_objective(problem, result.final), seconds)
    summary.update({
        "sigma_gamma": sigma_gamma(gamma),
        "proximal_scale": CERTIFY_SIGMA,
        "num_probes": settings["probes"],
        "negative_control": bool(settings["negative_control"]),
        "corrupted_iteration": corrupted_at,
        "validation": result.validation.to_dict(),
        "metric_conditions": metrics.to_dict(),
        "failed_checks": failed,
        "skipped_checks": skipped,
    })
    atomic_write_json(os.path.join(out, "summary.json"), summary)
    atomic_write_json(os.path.join(out, "certificates.json"),
                      {"summary": summary,
                       "checks": [r.to_dict() for r in reports]})
    dump_instance(instance, out)

    status = "FAIL" if failed else "pass"
    print(f"certify: {len(reports)} checks, {len(failed)} failed, "
          f"{len(skipped)} skipped [{status}] -> {out}")
    return 4 if failed else 0


_RUNNERS = {
    "solve": run_solve,
    "gamma-sweep": run_gamma_sweep,
    "baseline-compare": run_baseline_compare,
    "certify": run_certify,
}


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--n", type=int, help="matrix order of the instance")
    sub.add_argument("--seed", type=int, help="instance seed")
    sub.add_argument("--rho", type=float, help="penalty parameter")
    sub.add_argument("--tol", type=float, help="stopping tolerance")
    sub.add_argument("--max-iter", type=int, dest="max_iter",
                     help="iteration cap")
    sub.add_argument("--strict", action="store_const", const=True,
                     help="refuse configurations the theory does not cover")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--config", help="key=value defaults file (flags win)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lgadmm",
        description="Calibration benchmark harness for the multi-block "
                    "relaxed splitting solver.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve_cmd = commands.add_parser("solve", help="run one instance")
    _add_common(solve_cmd)
    solve_cmd.add_argument("--gamma", type=float, help="relaxation factor")

    sweep_cmd = commands.add_parser("gamma-sweep",
                                    help="sweep the relaxation factor")
    _add_common(sweep_cmd)
    sweep_cmd.add_argument("--gamma-grid", type=_grid_argument,
                           dest="gamma_grid",
                           help="comma separated relaxation factors")
    sweep_cmd.add_argument("--repeat", type=int,
                           help="seeds per grid value (seed..seed+repeat-1)")
    sweep_cmd.add_argument("--workers", type=int,
                           help="worker processes (default: one per core)")

    compare_cmd = commands.add_parser(
        "baseline-compare",
        help="same instance at relaxation 1.0 and 1.9")
    _add_common(compare_cmd)

    certify_cmd = commands.add_parser(
        "certify", help="strict run plus every certificate check")
    _add_common(certify_cmd)
    certify_cmd.add_argument("--gamma", type=float, help="relaxation factor")
    certify_cmd.add_argument("--probes", type=int,
                             help="number of feasible probe points")
    certify_cmd.add_argument("--negative-control", action="store_const",
                             const=True, dest="negative_control",
                             help="corrupt the trajectory to prove checks fail")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run the selected subcommand, map errors to exit codes.

    Parameters
    ----------
    argv : list of str, optional
        Arguments without the program name; defaults to ``sys.argv[1:]``.

    Returns
    -------
    int
        0 success, 2 configuration error, 3 divergence or oracle failure,
        4 certificate failure.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _merge_settings(args)
        return _RUNNERS[args.command](settings)
    except (ConfigError, BlockProblemError, CertificateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, OracleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
