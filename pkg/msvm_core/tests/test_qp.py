"""Tests for the dual solver."""
import numpy as np
import pytest
import msvm_core as core


def unit_problem(offset=1.0):
    # e1, e2, e3 in categories 0, 1, 2 with the linear kernel
    G = (1.0 + offset) * np.eye(3)
    return core.qp.DualProblem(G, [0, 1, 2], 3)


def random_problem(m=8, Q=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, 2))
    labels = np.arange(m) % Q
    spec = core.kernels.KernelSpec.gaussian(gamma=0.5, diagonal_offset=0.5)
    return core.qp.DualProblem(core.kernels.build_gram(spec, X), labels, Q)


def test_problem_structure():
    problem = unit_problem()
    assert problem.m == 3
    assert problem.Q == 3
    assert np.isclose(problem.target, 0.5)
    assert np.array_equal(problem.pinned, np.eye(3, dtype=bool))

    alpha = np.full((3, 3), 0.75)
    alpha[problem.pinned] = 0
    assert np.allclose(problem.as_matrix(alpha.ravel()), alpha)
    assert np.allclose(problem.equality_residuals(alpha), 0)

    with pytest.raises(ValueError):
        problem.as_matrix(np.zeros(4))
    with pytest.raises(ValueError):
        core.qp.DualProblem(np.eye(2), [0, 3], 3)


def test_hessian_product_matches_dense():
    problem = random_problem()
    H = core.util.dense_hessian(problem.gram, problem.Q)
    rng = np.random.default_rng(1)
    A = rng.random((problem.m, problem.Q))
    assert np.allclose(problem.hessian_product(A).ravel(), H @ A.ravel())


def test_solve_unit_problem():
    problem = unit_problem()
    solution = core.qp.solve_dual(problem, tol=1e-10)

    expected = np.full((3, 3), 0.75)
    np.fill_diagonal(expected, 0)
    assert solution.converged
    assert solution.status == core.qp.CONVERGED
    assert np.allclose(solution.alpha, expected, atol=1e-8)
    assert np.isclose(solution.objective, 9 / 8)
    assert np.allclose(solution.biases, 0, atol=1e-8)
    assert solution.flat.shape == (9,)

    # objective history never decreases
    assert np.all(np.diff(solution.history) >= -1e-12)


def test_solve_matches_dense_solver():
    problem = random_problem(m=9, Q=3, seed=2)
    solution = core.qp.solve_dual(problem)
    alpha, objective = core.util.solve_dense_dual(problem.gram, problem.labels, problem.Q)

    assert solution.acceptable()
    assert np.isclose(solution.objective, objective, rtol=1e-6)
    assert np.isclose(core.qp.dual_objective(problem, alpha), objective)


def test_kkt_report():
    problem = random_problem(m=10, Q=4, seed=3)
    solution = core.qp.solve_dual(problem)
    report = core.qp.kkt_report(problem, solution.alpha)

    assert np.isclose(report.max_residual, solution.kkt_residual)
    assert report.max_residual <= 1e-8
    assert np.isclose(np.sum(report.biases), 0)
    assert report.pinned == 0

    # zero is feasible but not optimal
    zero = core.qp.kkt_report(problem, np.zeros((problem.m, problem.Q)))
    assert zero.max_residual > 1e-3


def test_project_feasible():
    problem = random_problem(m=7, Q=3, seed=4)
    rng = np.random.default_rng(5)
    V = rng.standard_normal((problem.m, problem.Q))
    P = core.qp.project_feasible(problem, V)

    assert np.all(P >= 0)
    assert np.all(P[problem.pinned] == 0)
    sums = P.sum(axis=0)
    assert np.allclose(sums, sums[0])

    # a feasible point is its own projection
    assert np.allclose(core.qp.project_feasible(problem, P), P, atol=1e-10)


def test_project_feasible_empty_category():
    # no point is free in category 0 when every point belongs to it
    problem = core.qp.DualProblem(np.eye(2), [0, 0], 2)
    P = core.qp.project_feasible(problem, np.ones((2, 2)))
    assert np.all(P == 0)


def test_single_point():
    problem = core.qp.DualProblem(np.eye(1), [0], 2)
    solution = core.qp.solve_dual(problem)
    assert solution.converged
    assert np.all(solution.alpha == 0)


def test_unbounded_dual():
    # identical points in different categories cannot be separated
    problem = core.qp.DualProblem(np.ones((2, 2)), [0, 1], 2)
    with pytest.raises(core.qp.UnboundedDualError):
        core.qp.solve_dual(problem)


def test_not_psd():
    problem = core.qp.DualProblem(np.array([[1.0, 2.0], [2.0, 1.0]]), [0, 1], 2)
    with pytest.raises(core.kernels.NotPSDError):
        core.qp.solve_dual(problem)


def test_iteration_limit():
    problem = random_problem(m=12, Q=3, seed=6)
    solution = core.qp.solve_dual(problem, max_iter=0)
    assert not solution.converged
    assert solution.status == core.qp.MAX_ITER
    assert not solution.acceptable()
    assert solution.iterations == 0
    assert np.all(solution.alpha == 0)


def test_solver_settings_from_config():
    settings = core.qp.SolverSettings.from_config(
        {"tol": "1e-6", "max_iter_factor": 10, "support_threshold": 1e-5, "accept_factor": 10}
    )
    assert settings.tol == 1e-6
    assert settings.accept_factor == 10
    assert settings.support_threshold == 1e-5
    assert settings.iteration_limit(unit_problem()) == 90

    settings = core.qp.SolverSettings(max_iter=5)
    assert settings.iteration_limit(unit_problem()) == 5

    with pytest.raises(ValueError):
        core.qp.SolverSettings(tol=0)
    with pytest.raises(ValueError):
        core.qp.SolverSettings(accept_factor=0.5)


def test_solver_logging(tmp_path):
    logger = core.logging.DataLogger({"logging": {"log_dir": str(tmp_path)}})
    solution = core.qp.solve_dual(unit_problem(), data_logger=logger)
    data = logger.arrays()
    assert data["objective"].shape == (solution.iterations + 1,)
    assert np.isclose(data["objective"][-1], solution.objective)
    assert data["kkt_residual"][-1] <= 1e-8 * 0.5


def oracle_instance(seed):
    # Q cycles through 2, 3, 4 with m <= 15, so that Qm <= 60
    rng = np.random.default_rng(100 + seed)
    Q = 2 + seed % 3
    m = int(rng.integers(6, 16))
    X = rng.standard_normal((m, 2))
    labels = rng.permutation(np.arange(m) % Q)
    if seed % 2:
        spec = core.kernels.KernelSpec.gaussian(gamma=rng.uniform(0.2, 2.0))
    else:
        spec = core.kernels.KernelSpec.polynomial(degree=2, offset=0.5)
    spec = spec.with_diagonal_offset(1 / (2 * rng.uniform(0.2, 5.0)))
    return core.qp.DualProblem(core.kernels.build_gram(spec, X), labels, Q)


def assert_feasible(problem, alpha):
    scale = 1.0 + np.max(alpha)
    assert np.max(np.abs(problem.equality_residuals(alpha))) <= 1e-9 * scale
    assert np.all(alpha >= 0)
    assert np.all(alpha[problem.pinned] == 0)


@pytest.mark.parametrize("seed", range(50))
def test_matches_dense_solver_on_random_instances(seed):
    problem = oracle_instance(seed)
    solution = core.qp.solve_dual(problem)
    _, objective = core.util.solve_dense_dual(problem.gram, problem.labels, problem.Q)

    assert solution.acceptable()
    assert solution.kkt_residual <= 1e-8
    assert abs(solution.objective - objective) <= 1e-6 * (1 + abs(objective))
    assert_feasible(problem, solution.alpha)


def test_polynomial_blobs_stay_feasible():
    # long ascent steps on this instance used to leave the equality constraints
    dataset = core.util.gaussian_blobs(4, 4, seed=11)
    spec = core.kernels.KernelSpec.polynomial(degree=2, offset=0.5).with_diagonal_offset(0.5)
    problem = core.qp.DualProblem(
        core.kernels.build_gram(spec, dataset.points), dataset.labels, dataset.Q
    )
    logger = core.logging.DataLogger({})
    solution = core.qp.solve_dual(problem, data_logger=logger)
    _, objective = core.util.solve_dense_dual(problem.gram, problem.labels, problem.Q)

    assert solution.acceptable()
    assert_feasible(problem, solution.alpha)
    # a feasible point never beats the optimum
    assert solution.objective <= objective + 1e-6 * (1 + abs(objective))
    assert np.isclose(solution.objective, objective, rtol=1e-6)
    assert np.all(np.diff(logger.arrays()["objective"]) >= -1e-12)


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_gram_scaling(c):
    problem = random_problem(m=10, Q=3, seed=7)
    scaled = core.qp.DualProblem(c * problem.gram, problem.labels, problem.Q)
    solution = core.qp.solve_dual(problem)
    solution_scaled = core.qp.solve_dual(scaled)

    # scaling the Gram matrix by c scales the optimal alpha and objective by 1/c
    assert np.isclose(solution_scaled.objective, solution.objective / c, rtol=1e-6)
    amax = np.max(solution.alpha)
    assert np.allclose(solution_scaled.alpha, solution.alpha / c, atol=1e-5 * amax / c)


def test_stalled_solution_accepted():
    solution = core.qp.DualSolution(
        alpha=np.zeros((2, 2)),
        objective=0.0,
        kkt_residual=2e-8,
        iterations=40,
        status=core.qp.STALLED,
        biases=np.zeros(2),
        tolerance=1e-8,
    )
    assert not solution.converged
    assert solution.acceptable()
    assert not solution.acceptable(accept_factor=1.0)

    with pytest.raises(ValueError):
        core.qp.DualSolution(np.zeros((2, 2)), 0.0, 0.0, 0, "done", np.zeros(2), 1e-8)
