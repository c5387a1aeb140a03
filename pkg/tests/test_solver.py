import io
import math

import numpy as np
import pytest

from spiralmga.solver import (EvaluationError, NlpOptions, NlpProblem,
                              NlpResult, NlpStatus, finite_diff_jacobian,
                              solve)

INF = math.inf


def box(*pairs):
    return np.array(pairs, dtype=float)


def test_fd_linear_map_exact():
    A = np.array([[1.0, 2.0, -3.0], [0.5, 0.0, 4.0]])
    J = finite_diff_jacobian(lambda x: A @ x, np.array([0.3, -1.2, 2.0]))
    assert np.allclose(J, A, atol=1e-9)


def test_fd_cubic():
    J = finite_diff_jacobian(lambda x: np.array([x[0] ** 3]), np.array([2.0]))
    assert J[0, 0] == pytest.approx(12.0, abs=1e-6)


def test_fd_against_richardson_oracle():
    def fun(x):
        return np.array([math.sin(x[0]) * x[1] ** 2,
                         math.exp(0.3 * x[0] - x[1])])

    x = np.array([0.7, 1.3])
    J = finite_diff_jacobian(fun, x)

    # Richardson-extrapolated central differences, 8th order
    def richardson(i, j):
        h0 = 1e-2
        vals = []
        for k in range(4):
            h = h0 / 2.0 ** k
            xp = x.copy(); xm = x.copy()
            xp[j] += h; xm[j] -= h
            vals.append((fun(xp)[i] - fun(xm)[i]) / (2 * h))
        for lvl in range(1, 4):
            fac = 4.0 ** lvl
            vals = [(fac * vals[k + 1] - vals[k]) / (fac - 1.0)
                    for k in range(len(vals) - 1)]
        return vals[0]

    for i in range(2):
        for j in range(2):
            assert J[i, j] == pytest.approx(richardson(i, j), rel=1e-5, abs=1e-8)


def test_bound_qp():
    prob = NlpProblem(n=1, bounds=box((1.0, INF)),
                      objective=lambda x: float(x[0] ** 2))
    res = solve(prob, np.array([3.0]))
    assert res.converged
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)
    assert res.f == pytest.approx(1.0, abs=1e-6)


def test_equality_constrained_quadratic():
    # min (x-2)^2 + (y-1)^2 s.t. x + y = 1; the projection of (2, 1) onto
    # the line is (1, 0) with f = 2
    prob = NlpProblem(
        n=2, bounds=box((-INF, INF), (-INF, INF)),
        objective=lambda x: float((x[0] - 2) ** 2 + (x[1] - 1) ** 2),
        eq_constraints=lambda x: np.array([x[0] + x[1] - 1.0]))
    res = solve(prob, np.array([0.0, 0.0]))
    assert res.converged
    assert np.allclose(res.x, [1.0, 0.0], atol=1e-5)
    assert res.f == pytest.approx(2.0, abs=1e-6)
    assert res.max_violation <= 1e-6


def test_constrained_rosenbrock():
    # min (1-x)^2 + 100 (y - x^2)^2  s.t.  x^2 + y^2 <= 2 -> (1, 1)
    prob = NlpProblem(
        n=2, bounds=box((-5.0, 5.0), (-5.0, 5.0)),
        objective=lambda x: float((1 - x[0]) ** 2
                                  + 100.0 * (x[1] - x[0] ** 2) ** 2),
        ineq_constraints=lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 2.0]))
    res = solve(prob, np.array([-1.2, 1.0]))
    assert res.converged
    assert res.iterations <= 200
    assert np.linalg.norm(res.x - np.array([1.0, 1.0])) <= 1e-4


def test_pinned_variables():
    prob = NlpProblem(
        n=3, bounds=box((2.0, 2.0), (-10.0, 10.0), (-10.0, 10.0)),
        objective=lambda x: float((x[0] - 1) ** 2 + x[1] ** 2 + (x[2] + 3) ** 2))
    res = solve(prob, np.array([5.0, 4.0, 4.0]))
    assert res.converged
    assert res.x[0] == 2.0
    assert np.allclose(res.x[1:], [0.0, -3.0], atol=1e-5)


def test_infeasible_returns_least_infeasible():
    # x = 1 and x = -1 cannot both hold; solver must flag infeasibility
    prob = NlpProblem(
        n=1, bounds=box((-5.0, 5.0)),
        objective=lambda x: float(x[0] ** 2),
        eq_constraints=lambda x: np.array([x[0] - 1.0, x[0] + 1.0]))
    res = solve(prob, np.array([2.0]), NlpOptions(max_iter=60))
    assert res.status is NlpStatus.INFEASIBLE
    assert res.max_violation <= 2.0 + 1e-6   # least-infeasible near x ~ 0


def test_deterministic():
    prob = NlpProblem(
        n=2, bounds=box((-5.0, 5.0), (-5.0, 5.0)),
        objective=lambda x: float((1 - x[0]) ** 2
                                  + 100.0 * (x[1] - x[0] ** 2) ** 2),
        ineq_constraints=lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 2.0]))
    r1 = solve(prob, np.array([-1.2, 1.0]))
    r2 = solve(prob, np.array([-1.2, 1.0]))
    assert np.array_equal(r1.x, r2.x)
    assert r1.f == r2.f and r1.iterations == r2.iterations


def test_evaluation_error_at_start():
    prob = NlpProblem(n=1, bounds=box((-5.0, 5.0)),
                      objective=lambda x: float("nan"))
    with pytest.raises(EvaluationError) as err:
        solve(prob, np.array([0.5]))
    assert err.value.x[0] == 0.5


def test_nonfinite_trial_points_are_skipped():
    # objective blows up left of x = 0.1; solution at the bound x >= 0.5
    def obj(x):
        if x[0] < 0.1:
            return float("inf")
        return float((x[0] - 0.2) ** 2)

    prob = NlpProblem(n=1, bounds=box((0.15, 5.0)), objective=obj)
    res = solve(prob, np.array([4.0]))
    assert res.converged
    assert res.x[0] == pytest.approx(0.2, abs=1e-5)


def test_iteration_log_stream():
    log = io.StringIO()
    prob = NlpProblem(
        n=2, bounds=box((-INF, INF), (-INF, INF)),
        objective=lambda x: float((x[0] - 2) ** 2 + (x[1] - 1) ** 2),
        eq_constraints=lambda x: np.array([x[0] + x[1] - 1.0]))
    solve(prob, np.array([0.0, 0.0]), NlpOptions(log_stream=log))
    lines = [ln for ln in log.getvalue().splitlines() if ln]
    assert lines and all(len(ln.split(",")) == 4 for ln in lines)


def test_batched_fused_matches_plain():
    def fused(x):
        return (float((x[0] - 1) ** 2 + (x[1] + 2) ** 2),
                np.array([x[0] - x[1] - 4.0]), np.zeros(0))

    def fused_batch(X):
        F = (X[:, 0] - 1) ** 2 + (X[:, 1] + 2) ** 2
        CEQ = (X[:, 0] - X[:, 1] - 4.0).reshape(-1, 1)
        return F, CEQ, np.zeros((X.shape[0], 0))

    bounds = box((-INF, INF), (-INF, INF))
    r_plain = solve(NlpProblem(n=2, bounds=bounds, fused=fused),
                    np.array([0.0, 0.0]))
    r_batch = solve(NlpProblem(n=2, bounds=bounds, fused=fused,
                               fused_batch=fused_batch), np.array([0.0, 0.0]))
    assert r_plain.converged and r_batch.converged
    # projection of (1, -2) onto x - y = 4
    assert np.allclose(r_plain.x, [1.5, -2.5], atol=1e-5)
    assert np.allclose(r_batch.x, r_plain.x, atol=1e-8)
