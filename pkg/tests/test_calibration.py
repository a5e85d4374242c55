"""Calibration benchmark: instances, projections, closed-form oracles."""

import numpy as np
import pytest

from lgadmm.calibration import (
    CalibrationInstance,
    build_problem,
    calibration_block_oracle,
    default_metrics,
    dump_instance,
    generate_instance,
    load_instance,
    project_box,
    project_psd,
    projected_gradient_oracle,
    splitmix64_uniform,
    stacked_maps,
    verify_stacked_maps,
)
from lgadmm.operators import DenseSymmetric, ScaledIdentity
from lgadmm.problem import PrimalDualPoint, evaluate_objective, zeros_point
from lgadmm.solver import SolverConfig, solve


def test_prng_deterministic_and_in_range():
    a = splitmix64_uniform(42, 1000)
    b = splitmix64_uniform(42, 1000)
    assert np.array_equal(a, b)
    assert a.shape == (1000,)
    assert np.all(a >= 0.0)
    assert np.all(a < 1.0)
    c = splitmix64_uniform(43, 1000)
    assert not np.array_equal(a, c)
    # prefix stability: shorter draws are prefixes of longer ones
    assert np.array_equal(splitmix64_uniform(42, 10), a[:10])


def test_generate_instance_construction():
    instance = generate_instance(6, seed=11)
    c = instance.c
    assert np.array_equal(c, c.T)
    assert np.all(np.diag(c) >= 0.0)
    assert np.all(np.diag(c) < 2.0)
    assert np.all(instance.h_upper == 0.1)
    assert np.all(instance.h_lower == -0.1)
    again = generate_instance(6, seed=11)
    assert np.array_equal(instance.c, again.c)
    other = generate_instance(6, seed=12)
    assert not np.array_equal(instance.c, other.c)


def test_generate_instance_rejects_tiny_orders():
    with pytest.raises(ValueError):
        generate_instance(0, seed=0)


def test_instance_invariants_enforced():
    with pytest.raises(ValueError):
        CalibrationInstance(n=2, c=np.array([[1.0, 0.5], [0.0, 1.0]]),
                            h_lower=-0.1 * np.ones((2, 2)),
                            h_upper=0.1 * np.ones((2, 2)))
    with pytest.raises(ValueError):
        CalibrationInstance(n=2, c=np.eye(2),
                            h_lower=0.2 * np.ones((2, 2)),
                            h_upper=0.1 * np.ones((2, 2)))


def test_project_psd_examples():
    assert np.allclose(project_psd(np.eye(3)), np.eye(3))
    assert np.allclose(project_psd(-np.eye(3)), np.zeros((3, 3)))
    flipper = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(project_psd(flipper),
                       np.array([[0.5, 0.5], [0.5, 0.5]]))


def test_project_psd_properties():
    rng = np.random.default_rng(2)
    for _ in range(50):
        base = rng.standard_normal((4, 4))
        a = base + base.T
        other = rng.standard_normal((4, 4))
        b = other + other.T
        pa = project_psd(a)
        pb = project_psd(b)
        assert np.linalg.norm(project_psd(pa) - pa) <= 1e-10
        assert np.linalg.eigvalsh(pa)[0] >= -1e-10
        assert (np.linalg.norm(pa - pb)
                <= np.linalg.norm(a - b) + 1e-10)


def test_project_box_examples():
    lower = -0.1 * np.ones((2, 2))
    upper = 0.1 * np.ones((2, 2))
    inside = np.array([[0.05, -0.02], [-0.02, 0.0]])
    assert np.array_equal(project_box(inside, lower, upper), inside)
    outside = np.array([[0.5, -0.3], [-0.3, 0.05]])
    assert np.allclose(project_box(outside, lower, upper),
                       np.array([[0.1, -0.1], [-0.1, 0.05]]))
    assert np.allclose(project_box(upper + 1.0, lower, upper), upper)
    with pytest.raises(ValueError):
        project_box(inside, upper, lower)


def test_project_box_properties():
    rng = np.random.default_rng(3)
    lower = -0.1 * np.ones((3, 3))
    upper = 0.1 * np.ones((3, 3))
    for _ in range(50):
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        pa = project_box(a, lower, upper)
        pb = project_box(b, lower, upper)
        assert np.array_equal(project_box(pa, lower, upper), pa)
        assert np.all(pa >= lower) and np.all(pa <= upper)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10


def test_stacked_maps_gram_structure():
    maps = stacked_maps(3)
    assert maps.constraint_dim == 27
    assert verify_stacked_maps(maps) <= 1e-12
    # dense realization pins the pairwise products at small order
    d = 9
    a1, a2, a3 = (m.dense() for m in (maps.a1, maps.a2, maps.a3))
    eye = np.eye(d)
    assert np.array_equal(a1.T @ a1, 2 * eye)
    assert np.array_equal(a2.T @ a2, 2 * eye)
    assert np.array_equal(a3.T @ a3, 2 * eye)
    assert np.array_equal(a1.T @ a2, -eye)
    assert np.array_equal(a1.T @ a3, -eye)
    assert np.array_equal(a2.T @ a3, -eye)


def test_verify_stacked_maps_catches_tampering():
    from lgadmm.operators import BlockSignMap

    maps = stacked_maps(2)
    tampered = type(maps)(a1=BlockSignMap((1, 0, 0), 4), a2=maps.a2,
                          a3=maps.a3, n=2)
    with pytest.raises(ValueError):
        verify_stacked_maps(tampered)


def test_oracle_returns_center_when_already_optimal():
    instance = generate_instance(3, seed=5)
    maps = stacked_maps(3)
    rng = np.random.default_rng(6)
    rho, sigma = 1.0, 0.5
    center_mat = project_psd(rng.standard_normal((3, 3)))
    center = center_mat.reshape(-1)
    c_flat = instance.c.reshape(-1)
    # choose the target so the unconstrained minimiser is exactly the center
    w = ((1.0 + 2.0 * rho) * center - c_flat) / (2.0 * rho)
    target = maps.a1.apply(w)
    oracle = calibration_block_oracle(instance.c, maps.a1, project_psd)
    out = oracle(target, center, rho, ScaledIdentity(9, sigma))
    assert np.allclose(out, center, atol=1e-12)


def test_oracle_block3_hand_formula():
    instance = generate_instance(2, seed=9)
    maps = stacked_maps(2)
    rng = np.random.default_rng(10)
    x1 = rng.standard_normal(4)
    x2 = rng.standard_normal(4)
    y = rng.standard_normal(12)
    center = rng.standard_normal(4)
    rho, sigma = 1.0, 0.5
    target = y / rho - maps.a1.apply(x1) - maps.a2.apply(x2)

    def box(mat):
        return project_box(mat, instance.h_lower, instance.h_upper)

    oracle = calibration_block_oracle(instance.c, maps.a3, box)
    out = oracle(target, center, rho, ScaledIdentity(4, sigma))

    numerator = (sigma * center + instance.c.reshape(-1)
                 + maps.a3.adjoint(y)
                 - rho * maps.a3.adjoint(maps.a1.apply(x1) + maps.a2.apply(x2)))
    expected = np.clip(numerator / (sigma + 1.0 + 2.0 * rho), -0.1, 0.1)
    assert np.allclose(out, expected, atol=1e-12)


def test_oracle_rejects_general_metrics():
    instance = generate_instance(2, seed=1)
    maps = stacked_maps(2)
    oracle = calibration_block_oracle(instance.c, maps.a1, project_psd)
    target = np.zeros(12)
    center = np.zeros(4)
    with pytest.raises(ValueError):
        oracle(target, center, 1.0, DenseSymmetric(np.eye(4)))
    with pytest.raises(ValueError):
        oracle(target, center, 1.0, ScaledIdentity(4, -0.5))


def test_oracle_agrees_with_projected_gradient():
    instance = generate_instance(3, seed=13)
    maps = stacked_maps(3)
    rng = np.random.default_rng(14)
    rho, sigma = 1.0, 0.5

    def box(mat):
        return project_box(mat, instance.h_lower, instance.h_upper)

    cases = [(maps.a1, project_psd), (maps.a2, project_psd), (maps.a3, box)]
    for amap, projection in cases:
        oracle = calibration_block_oracle(instance.c, amap, projection)
        for _ in range(5):
            target = rng.standard_normal(27)
            center = rng.standard_normal(9)
            closed = oracle(target, center, rho, ScaledIdentity(9, sigma))
            iterative = projected_gradient_oracle(
                instance.c, amap, projection, target, center, rho, sigma)
            assert np.linalg.norm(closed - iterative) <= 1e-8


def test_build_problem_shapes_and_examples():
    instance = generate_instance(4, seed=3)
    problem = build_problem(instance)
    assert problem.num_blocks == 3
    assert problem.constraint_dim == 48
    assert not problem.rhs.any()
    copies = PrimalDualPoint((instance.c.reshape(-1),) * 3, np.zeros(48))
    assert evaluate_objective(problem, copies) == pytest.approx(0.0)
    from lgadmm.problem import primal_feasibility
    assert primal_feasibility(problem, copies) == pytest.approx(0.0, abs=1e-13)


def test_default_metrics_are_spherical():
    instance = generate_instance(3, seed=0)
    metrics = default_metrics(instance)
    assert len(metrics) == 3
    for metric in metrics:
        assert isinstance(metric, ScaledIdentity)
        assert metric.scale == 0.5
        assert metric.dim == 9
    stricter = default_metrics(instance, scale=4.0)
    assert all(m.scale == 4.0 for m in stricter)


def test_converged_copies_agree_and_are_feasible():
    instance = generate_instance(12, seed=0)
    problem = build_problem(instance)
    config = SolverConfig(rho=1.0, gamma=1.5,
                          proximal_metrics=default_metrics(instance),
                          tolerance=1e-6)
    result = solve(problem, config, zeros_point(problem))
    assert result.converged
    n = instance.n
    mats = [part.reshape(n, n) for part in result.final.primal]
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.linalg.norm(mats[i] - mats[j]) <= 1e-4 * n
    assert np.linalg.eigvalsh(mats[0])[0] >= -1e-6
    assert np.all(mats[2] >= instance.h_lower - 1e-12)
    assert np.all(mats[2] <= instance.h_upper + 1e-12)


def test_objective_invariant_across_relaxation():
    instance = generate_instance(10, seed=4)
    problem = build_problem(instance)
    values = []
    for gamma in (0.6, 1.0, 1.4, 1.9):
        config = SolverConfig(rho=1.0, gamma=gamma,
                              proximal_metrics=default_metrics(instance),
                              tolerance=1e-6)
        result = solve(problem, config, zeros_point(problem))
        assert result.converged
        values.append(evaluate_objective(problem, result.final))
    spread = max(values) - min(values)
    assert spread <= 1e-3 * max(abs(v) for v in values)


def test_instance_dump_roundtrip(tmp_path):
    instance = generate_instance(5, seed=21)
    dump_instance(instance, str(tmp_path))
    assert (tmp_path / "c_matrix.txt").exists()
    assert (tmp_path / "instance.json").exists()
    loaded = load_instance(str(tmp_path))
    assert loaded.n == 5
    assert loaded.seed == 21
    assert np.array_equal(loaded.c, instance.c)
    assert np.array_equal(loaded.h_upper, instance.h_upper)


def test_dump_requires_uniform_bounds(tmp_path):
    instance = generate_instance(3, seed=2)
    lopsided = CalibrationInstance(
        n=3, c=instance.c, h_lower=-0.2 * np.ones((3, 3)),
        h_upper=0.1 * np.ones((3, 3)))
    with pytest.raises(ValueError):
        dump_instance(lopsided, str(tmp_path))
