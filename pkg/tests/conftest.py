"""Shared fixtures: small calibration problems and one strict reference run."""

from types import SimpleNamespace

import pytest

from lgadmm import (
    SolverConfig,
    assemble_metrics,
    build_problem,
    default_metrics,
    generate_instance,
    solve,
    zeros_point,
)

STRICT_N = 8
STRICT_SEED = 3
STRICT_SIGMA = 4.0
STRICT_GAMMA = 1.5


@pytest.fixture(scope="session")
def small_instance():
    return generate_instance(5, seed=7)


@pytest.fixture(scope="session")
def small_problem(small_instance):
    return build_problem(small_instance)


@pytest.fixture(scope="session")
def strict_setup():
    """A strict-mode run with trajectory, metric matrices and a reference.

    Sized so the whole fixture builds in a few seconds; the acceptance
    suite repeats the same pipeline at the contract size.
    """
    instance = generate_instance(STRICT_N, seed=STRICT_SEED)
    problem = build_problem(instance)
    config = SolverConfig(
        rho=1.0,
        gamma=STRICT_GAMMA,
        proximal_metrics=default_metrics(instance, scale=STRICT_SIGMA),
        max_iterations=20_000,
        tolerance=1e-8,
        strict_theory_mode=True,
        record_trajectory=True,
    )
    result = solve(problem, config, zeros_point(problem))
    reference_config = SolverConfig(
        rho=1.0,
        gamma=STRICT_GAMMA,
        proximal_metrics=default_metrics(instance, scale=STRICT_SIGMA),
        max_iterations=200_000,
        tolerance=1e-10,
        strict_theory_mode=True,
    )
    reference = solve(problem, reference_config, zeros_point(problem)).final
    metrics = assemble_metrics(problem, config)
    return SimpleNamespace(
        instance=instance,
        problem=problem,
        config=config,
        result=result,
        trajectory=result.trajectory,
        reference=reference,
        metrics=metrics,
    )
