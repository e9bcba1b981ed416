import numpy as np
import pytest

from seqreg import OptimOptions, lbfgs_minimize
from seqreg.optimizer import ObjectiveEval


def quadratic(center):
    c = np.asarray(center, dtype=float)

    def f(x):
        return ObjectiveEval(float(np.sum((x - c) ** 2)), 2.0 * (x - c))

    return f


def rosenbrock(x):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array(
        [-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)]
    )
    return ObjectiveEval(float(f), g)


def test_quadratic_converges_quickly():
    r = lbfgs_minimize(quadratic([1.0, 2.0]), np.zeros(2))
    assert r.iterations <= 5
    assert np.linalg.norm(r.x_final - [1.0, 2.0]) < 1e-6


def test_start_at_minimum_returns_immediately():
    r = lbfgs_minimize(quadratic([1.0, 2.0]), np.array([1.0, 2.0]))
    assert r.iterations == 0
    assert r.objective_evaluations == 1
    assert r.converged_reason == "grad_tol"


def test_rosenbrock():
    opts = OptimOptions(max_iters=100, grad_tol=1e-12, f_tol=1e-16, step_tol=1e-14)
    r = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), opts)
    assert r.f_final < 1e-8
    assert r.iterations <= 100


def test_monotone_descent():
    values = []
    opts = OptimOptions(max_iters=60, grad_tol=1e-10, f_tol=1e-14)
    lbfgs_minimize(
        rosenbrock,
        np.array([-1.2, 1.0]),
        opts,
        trace=lambda it, f, g, s, e: values.append(f),
    )
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


def test_deterministic():
    def run():
        trace = []
        r = lbfgs_minimize(
            rosenbrock,
            np.array([-1.2, 1.0]),
            OptimOptions(max_iters=30, f_tol=1e-14),
            trace=lambda *rec: trace.append(rec),
        )
        return r, trace

    r1, t1 = run()
    r2, t2 = run()
    assert np.array_equal(r1.x_final, r2.x_final)
    assert r1.f_final == r2.f_final
    assert t1 == t2


def test_quadratic_terminates_near_minimizer_within_k_plus_2():
    # on strictly convex quadratics with memory >= k the iterate is at the
    # minimizer after k+2 iterations up to tolerance
    rng = np.random.default_rng(3)
    for k in (2, 3, 4, 5):
        for _ in range(5):
            a = rng.standard_normal((k, k))
            q = a @ a.T + k * np.eye(k)
            c = rng.standard_normal(k)
            x_star = np.linalg.solve(q, c)

            def f(x, q=q, c=c):
                return ObjectiveEval(float(0.5 * x @ q @ x - c @ x), q @ x - c)

            opts = OptimOptions(
                memory=max(5, k), max_iters=k + 2, grad_tol=1e-14, f_tol=1e-16, step_tol=1e-14
            )
            r = lbfgs_minimize(f, np.zeros(k), opts)
            rel = np.linalg.norm(r.x_final - x_star) / max(np.linalg.norm(x_star), 1e-30)
            assert rel < 5e-2


def test_eval_count_at_least_iterations():
    r = lbfgs_minimize(quadratic([3.0, -1.0, 2.0]), np.zeros(3))
    assert r.objective_evaluations >= r.iterations
    assert r.f_initial >= r.f_final


def test_nonfinite_start_raises():
    def f(x):
        return ObjectiveEval(float("nan"), np.zeros_like(x))

    with pytest.raises(ValueError):
        lbfgs_minimize(f, np.zeros(2))


def test_line_search_failure_returns_best():
    # gradient deliberately inconsistent with the values: f never decreases
    def f(x):
        return ObjectiveEval(float(np.sum(x**2)) + 1.0, -np.ones_like(x))

    r = lbfgs_minimize(f, np.array([1.0, 1.0]), OptimOptions(max_backtracks=5))
    assert r.converged_reason == "line_search_failure"
    assert np.array_equal(r.x_final, [1.0, 1.0])


def test_trace_records():
    records = []
    lbfgs_minimize(
        quadratic([1.0, 1.0]),
        np.zeros(2),
        trace=lambda it, f, g, step, evals: records.append((it, f, g, step, evals)),
    )
    assert records
    assert records[0][0] == 1
    assert all(len(r) == 5 for r in records)
