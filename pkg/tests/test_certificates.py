"""Metric matrices and the runtime inequality checks."""

import numpy as np
import pytest

from lgadmm.calibration import build_problem, default_metrics, generate_instance
from lgadmm.certificates import (
    ProbeFeasibilityError,
    apply_metric,
    assemble_metrics,
    check_probe_feasible,
    cross_term_check,
    ergodic_average,
    ergodic_gap_check,
    fejer_check,
    first_phase_min_eig_estimate,
    inequality_slack,
    last_condition_min_eig_estimate,
    nonergodic_monotonicity_check,
    nonergodic_rate_check,
    sigma_gamma,
    step_inequality_check,
    step_inequality_probe,
    update_recurrence_check,
    weighted_norm_sq,
)
from lgadmm.operators import DenseSymmetric, ScaledIdentity
from lgadmm.problem import PrimalDualPoint, feasible_probe, zeros_point
from lgadmm.solver import (
    IterationState,
    SolverConfig,
    TrajectoryRecord,
    solve,
)
from lgadmm.synthetic import random_config, random_problem
from util import chain_problem


def two_block_hand_config():
    problem = chain_problem([[1.0], [1.0]], [0.0])
    config = SolverConfig(
        rho=1.0, gamma=1.0,
        proximal_metrics=(DenseSymmetric(np.array([[2.0]])),
                          DenseSymmetric(np.array([[1.0]]))))
    return problem, config


def test_inequality_slack_scales_with_largest_term():
    assert inequality_slack(0.0) == pytest.approx(1e-8)
    assert inequality_slack(3.0, -50.0, 2.0) == pytest.approx(1e-8 * 51.0)


def test_sigma_gamma_values():
    assert sigma_gamma(1.0) == pytest.approx(1.0)
    assert sigma_gamma(1.9) == pytest.approx(1.0 / 19.0)
    assert sigma_gamma(0.5) == pytest.approx(1.0)
    for gamma in np.linspace(0.05, 1.95, 39):
        value = sigma_gamma(float(gamma))
        assert 0.0 < value <= 1.0
    with pytest.raises(ValueError):
        sigma_gamma(2.0)
    with pytest.raises(ValueError):
        sigma_gamma(0.0)


def test_assembled_matrices_match_hand_computation():
    problem, config = two_block_hand_config()
    metrics = assemble_metrics(problem, config, mode="dense")
    assert np.allclose(metrics.q, [[2, 0, 0], [0, 2, 0], [0, -1, 1]])
    assert np.allclose(metrics.h, np.diag([2.0, 2.0, 1.0]))
    assert np.allclose(metrics.m_mat, [[1, 0, 0], [0, 1, 0], [0, -1, 1]])
    assert np.allclose(metrics.n_mat, np.diag([2.0, 1.0, 1.0]))
    assert metrics.g1 == pytest.approx(np.array([[2.0]]))
    assert metrics.strict_ok


def test_unit_relaxation_makes_h_block_diagonal():
    problem = random_problem(3, num_blocks=2, constraint_dim=3)
    rng = np.random.default_rng(0)
    config = random_config(rng, problem, gamma=1.0)
    metrics = assemble_metrics(problem, config, mode="dense")
    last_dim = problem.block_dims[-1]
    ell = problem.constraint_dim
    off = metrics.h[metrics.first_dim:metrics.first_dim + last_dim,
                    metrics.first_dim + last_dim:]
    assert np.allclose(off, 0.0, atol=1e-12)
    assert off.shape == (last_dim, ell)


def test_factorization_identities_on_random_configs():
    rng = np.random.default_rng(1)
    for trial in range(10):
        problem = random_problem(200 + trial,
                                 num_blocks=int(rng.integers(2, 4)),
                                 constraint_dim=3)
        config = random_config(rng, problem)
        metrics = assemble_metrics(problem, config, mode="dense")
        scale = 1.0 + max(np.abs(metrics.q).max(), np.abs(metrics.h).max())
        assert np.abs(metrics.q - metrics.h @ metrics.m_mat).max() <= 1e-12 * scale
        recomposed = (metrics.q.T + metrics.q
                      - metrics.m_mat.T @ metrics.h @ metrics.m_mat)
        assert np.abs(recomposed - metrics.n_mat).max() <= 1e-10 * scale
        if metrics.g1_min_eig > 1e-10:
            assert metrics.h_min_eig > 0.0


def test_weighted_norms_zero_vector(strict_setup):
    v = np.zeros(strict_setup.metrics.total_dim)
    for which in ("h", "n"):
        assert weighted_norm_sq(strict_setup.metrics, v, which) == 0.0


def test_weighted_norm_unit_dual():
    problem, config = two_block_hand_config()
    metrics = assemble_metrics(problem, config, mode="dense")
    v = np.zeros(metrics.total_dim)
    v[-1] = 1.0
    assert weighted_norm_sq(metrics, v, "h") == pytest.approx(1.0)


def test_weighted_norms_dense_and_matrix_free_agree(strict_setup):
    problem = strict_setup.problem
    config = strict_setup.config
    dense = strict_setup.metrics
    free = assemble_metrics(problem, config, mode="matrix_free")
    rng = np.random.default_rng(12)
    for _ in range(5):
        v = rng.standard_normal(dense.total_dim)
        for which in ("h", "n"):
            a = weighted_norm_sq(dense, v, which)
            b = weighted_norm_sq(free, v, which)
            assert abs(a - b) <= 1e-12 * (1.0 + abs(a))
        for which in ("q", "m", "h", "n"):
            left = apply_metric(dense, which, v)
            right = apply_metric(free, which, v)
            assert np.linalg.norm(left - right) <= 1e-12 * (
                1.0 + np.linalg.norm(left))


def test_first_phase_min_eig_paths():
    problem, config = two_block_hand_config()
    value, method = first_phase_min_eig_estimate(
        problem, config.proximal_metrics, config.rho, dense_cap=1024)
    assert value == pytest.approx(2.0)
    assert method == "operator"
    instance = generate_instance(4, seed=0)
    cal_problem = build_problem(instance)
    value, method = first_phase_min_eig_estimate(
        cal_problem, default_metrics(instance), 1.0, dense_cap=1024)
    assert value == pytest.approx(-0.5, abs=1e-8)
    assert method == "dense"
    value_power, method_power = first_phase_min_eig_estimate(
        cal_problem, default_metrics(instance), 1.0, dense_cap=4)
    assert method_power == "power"
    assert value_power == pytest.approx(-0.5, abs=1e-6)


def test_last_condition_bound():
    instance = generate_instance(4, seed=0)
    problem = build_problem(instance)
    value, method = last_condition_min_eig_estimate(
        problem, ScaledIdentity(16, 0.5), rho=1.0, gamma=1.0, dense_cap=1024)
    assert value == pytest.approx(2.5, abs=1e-7)
    assert method == "bound"


def test_probe_feasibility_guard(small_problem):
    rng = np.random.default_rng(3)
    probe = feasible_probe(small_problem, rng)
    check_probe_feasible(small_problem, probe)
    primal = list(probe.primal)
    bad = primal[2] + 5.0
    with pytest.raises(ProbeFeasibilityError):
        check_probe_feasible(
            small_problem,
            PrimalDualPoint((primal[0], primal[1], bad), probe.dual))


def test_fejer_contraction_on_strict_run(strict_setup):
    report = fejer_check(strict_setup.metrics, strict_setup.trajectory,
                         strict_setup.reference)
    assert report.passed
    assert report.iterations_checked == strict_setup.trajectory.steps
    assert report.worst_margin >= 0.0


def test_fejer_vacuous_on_single_point_trajectory(strict_setup):
    start = strict_setup.trajectory.points[0]
    tiny = TrajectoryRecord(points=[start], auxiliaries=[], reports=[])
    report = fejer_check(strict_setup.metrics, tiny, strict_setup.reference)
    assert report.passed
    assert report.iterations_checked == 0
    assert report.details.get("vacuous")


def test_fejer_requires_trajectory(strict_setup):
    with pytest.raises(ValueError):
        fejer_check(strict_setup.metrics, None, strict_setup.reference)


def test_checks_skip_outside_strict_conditions():
    instance = generate_instance(4, seed=6)
    problem = build_problem(instance)
    config = SolverConfig(rho=1.0, gamma=1.0,
                          proximal_metrics=default_metrics(instance),
                          max_iterations=5, tolerance=1e-300,
                          record_trajectory=True)
    result = solve(problem, config, zeros_point(problem))
    metrics = assemble_metrics(problem, config)
    assert not metrics.strict_ok
    report = fejer_check(metrics, result.trajectory, result.final)
    assert report.skipped
    assert report.passed is None
    assert "first-phase metric" in report.skipped_reason


def test_step_monotonicity_on_strict_run(strict_setup):
    report = nonergodic_monotonicity_check(strict_setup.metrics,
                                           strict_setup.trajectory)
    assert report.passed
    assert report.worst_margin >= 0.0


def test_rate_bound_on_strict_run(strict_setup):
    report = nonergodic_rate_check(strict_setup.metrics,
                                   strict_setup.trajectory,
                                   strict_setup.reference)
    assert report.passed
    assert report.details["tightest_t"] >= 1


def test_ergodic_average_shapes():
    a = PrimalDualPoint((np.array([1.0]), np.array([3.0])), np.array([5.0]))
    b = PrimalDualPoint((np.array([2.0]), np.array([-1.0])), np.array([1.0]))
    constant = ergodic_average([a, a, a])
    assert constant.primal[0] == pytest.approx(1.0)
    midpoint = ergodic_average([a, b])
    assert midpoint.primal[0] == pytest.approx(1.5)
    assert midpoint.primal[1] == pytest.approx(1.0)
    assert midpoint.dual == pytest.approx(3.0)
    with pytest.raises(ValueError):
        ergodic_average([])


def test_ergodic_average_feasibility_bounded_by_worst(small_problem, small_instance):
    from lgadmm.problem import primal_feasibility

    config = SolverConfig(rho=1.0, gamma=1.5,
                          proximal_metrics=default_metrics(small_instance),
                          max_iterations=50, tolerance=1e-300,
                          record_trajectory=True)
    result = solve(small_problem, config, zeros_point(small_problem))
    residuals = [primal_feasibility(small_problem, point)
                 for point in result.trajectory.auxiliaries]
    average = ergodic_average(result.trajectory.auxiliaries)
    assert primal_feasibility(small_problem, average) <= max(residuals) + 1e-12


def test_ergodic_gap_bound_on_strict_run(strict_setup):
    rng = np.random.default_rng(31)
    probes = [feasible_probe(strict_setup.problem, rng) for _ in range(10)]
    trajectory = strict_setup.trajectory
    average = ergodic_average(trajectory.auxiliaries)
    report = ergodic_gap_check(strict_setup.problem, strict_setup.metrics,
                               average, probes, trajectory.points[0],
                               len(trajectory.auxiliaries) - 1)
    assert report.passed
    assert report.details["num_probes"] == 10


def test_ergodic_gap_self_probe_trivially_passes(strict_setup):
    trajectory = strict_setup.trajectory
    average = ergodic_average(trajectory.auxiliaries)
    report = ergodic_gap_check(strict_setup.problem, strict_setup.metrics,
                               average, [average], trajectory.points[0],
                               len(trajectory.auxiliaries) - 1)
    assert report.passed


def test_ergodic_gap_detects_falsified_bound(strict_setup):
    # replacing the average with a far feasible point while shrinking the
    # right side to ~0 must fail the check
    rng = np.random.default_rng(4)
    far = feasible_probe(strict_setup.problem, rng, scale=5.0)
    probe = feasible_probe(strict_setup.problem, np.random.default_rng(5))
    report = ergodic_gap_check(strict_setup.problem, strict_setup.metrics,
                               far, [probe], strict_setup.trajectory.points[0],
                               10**9)
    assert report.passed is False


def test_cross_term_bound_on_strict_run(strict_setup):
    report = cross_term_check(strict_setup.trajectory,
                              strict_setup.config.proximal_metrics[-1],
                              strict_setup.problem.blocks[-1].linear_map)
    assert report.passed
    assert report.worst_margin >= 0.0


def test_cross_term_stationary_equality(strict_setup):
    point = strict_setup.trajectory.points[0]
    stationary = TrajectoryRecord(points=[point, point, point],
                                  auxiliaries=[point, point], reports=[])
    report = cross_term_check(stationary,
                              strict_setup.config.proximal_metrics[-1],
                              strict_setup.problem.blocks[-1].linear_map)
    assert report.passed
    assert report.worst_margin == pytest.approx(1e-8, rel=1e-6)


def test_update_recurrence_on_strict_run(strict_setup):
    report = update_recurrence_check(strict_setup.metrics,
                                     strict_setup.trajectory)
    assert report.passed


def test_update_recurrence_detects_corruption(strict_setup):
    trajectory = strict_setup.trajectory
    mid = len(trajectory.points) // 2
    points = list(trajectory.points)
    original = points[mid]
    points[mid] = PrimalDualPoint(
        tuple(part + 10.0 for part in original.primal), original.dual + 10.0)
    corrupted = TrajectoryRecord(points=points,
                                 auxiliaries=list(trajectory.auxiliaries),
                                 reports=[])
    report = update_recurrence_check(strict_setup.metrics, corrupted)
    assert report.passed is False


def test_step_inequality_probe_zero_at_auxiliary(strict_setup):
    trajectory = strict_setup.trajectory
    state = IterationState(
        k=1, current=trajectory.points[1], auxiliary=trajectory.auxiliaries[0],
        previous=trajectory.points[0], first_step_norms=None)
    margin = step_inequality_probe(strict_setup.problem, strict_setup.metrics,
                                   state, trajectory.auxiliaries[0])
    assert margin == pytest.approx(0.0, abs=1e-10)


def test_step_inequality_probe_requires_completed_step(strict_setup):
    state = IterationState.initial(strict_setup.trajectory.points[0])
    rng = np.random.default_rng(8)
    probe = feasible_probe(strict_setup.problem, rng)
    with pytest.raises(ValueError):
        step_inequality_probe(strict_setup.problem, strict_setup.metrics,
                              state, probe)


def test_step_inequality_check_on_strict_run(strict_setup):
    rng = np.random.default_rng(9)
    probes = [feasible_probe(strict_setup.problem, rng) for _ in range(3)]
    report = step_inequality_check(strict_setup.problem, strict_setup.metrics,
                                   strict_setup.trajectory, probes,
                                   max_samples=10)
    assert report.passed
    assert len(report.details["sampled_iterations"]) <= 10
    assert report.details["num_probes"] == 3


def test_step_inequality_check_rejects_infeasible_probe(strict_setup):
    probe = feasible_probe(strict_setup.problem, np.random.default_rng(10))
    primal = list(probe.primal)
    primal[2] = primal[2] + 3.0
    bad = PrimalDualPoint(tuple(primal), probe.dual)
    with pytest.raises(ProbeFeasibilityError):
        step_inequality_check(strict_setup.problem, strict_setup.metrics,
                              strict_setup.trajectory, [bad], max_samples=2)


def test_report_serialization(strict_setup):
    report = update_recurrence_check(strict_setup.metrics,
                                     strict_setup.trajectory)
    payload = report.to_dict()
    assert payload["check"] == "update_recurrence"
    assert payload["passed"] is True
    assert "worst_margin" in payload
    assert "iterations_checked" in payload


def test_strict_metrics_report_positive_minima(strict_setup):
    metrics = strict_setup.metrics
    assert metrics.strict_ok
    assert metrics.g1_min_eig > 0.0
    assert metrics.h_min_eig > 0.0
    assert metrics.n_min_eig > 0.0
    payload = metrics.to_dict()
    assert payload["strict_ok"] is True
