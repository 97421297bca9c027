import numpy as np
import pytest
import scipy.optimize

from uavmon import convex
from uavmon.convex import (
    ConvexProgram,
    SmoothFunction,
    SolverSettings,
    Status,
    check_gradient,
    linear,
    phase1_feasible,
    solve,
)


def quad(dim, idx, Q, b, const=0.0, name=""):
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def fn(xs):
        return const + 0.5 * xs @ Q @ xs + b @ xs, Q @ xs + b, Q

    return SmoothFunction(dim, idx, fn, name=name)


def test_scalar_quadratic_with_bound():
    # min x^2  s.t.  x >= 1
    prog = ConvexProgram(
        dim=1,
        objective_terms=[quad(1, [0], [[2.0]], [0.0])],
        constraints=[linear(1, [0], [-1.0], const=1.0)],
    )
    res = solve(prog, [3.0])
    assert res.status is Status.Converged
    assert res.point[0] == pytest.approx(1.0, abs=1e-5)
    assert res.objective == pytest.approx(1.0, abs=1e-5)


def test_sum_with_lower_bounds():
    # min sum(p)  s.t.  p_i >= c_i  ->  optimum sits on the bounds
    c = np.array([0.3, 0.0, 2.5, 1.1])
    n = c.size
    prog = ConvexProgram(
        dim=n,
        objective_terms=[linear(n, range(n), np.ones(n))],
        constraints=[linear(n, [i], [-1.0], const=c[i]) for i in range(n)],
    )
    res = solve(prog, c + 1.0)
    assert res.status is Status.Converged
    assert res.objective == pytest.approx(c.sum(), abs=1e-5)
    assert np.all(res.point >= c - 1e-12)


def test_box_qp_against_scipy():
    rng = np.random.default_rng(0)
    n = 6
    M = rng.normal(size=(n, n))
    Q = M @ M.T + n * np.eye(n)
    b = rng.normal(size=n)
    prog = ConvexProgram(
        dim=n,
        objective_terms=[quad(n, range(n), Q, b)],
        constraints=[linear(n, [i], [s], const=-1.0) for i in range(n) for s in (1.0, -1.0)],
    )
    res = solve(prog, np.zeros(n), SolverSettings(kkt_tol=1e-9))
    ref = scipy.optimize.minimize(
        lambda x: 0.5 * x @ Q @ x + b @ x,
        np.zeros(n),
        jac=lambda x: Q @ x + b,
        bounds=[(-1, 1)] * n,
        method="L-BFGS-B",
        options={"ftol": 1e-15, "gtol": 1e-12},
    )
    assert res.status is Status.Converged
    assert res.objective == pytest.approx(ref.fun, abs=1e-6)
    assert np.allclose(res.point, ref.x, atol=1e-4)


def test_unconstrained_newton():
    prog = ConvexProgram(dim=2, objective_terms=[quad(2, [0, 1], np.diag([2.0, 8.0]), [-2.0, 8.0])])
    res = solve(prog, [5.0, 5.0])
    assert res.status is Status.Converged
    assert np.allclose(res.point, [1.0, -1.0], atol=1e-8)


def test_pins_are_respected():
    # min (x0-3)^2 + (x1-3)^2 with x1 pinned at 0 and x0 <= 2
    prog = ConvexProgram(
        dim=2,
        objective_terms=[quad(2, [0, 1], 2.0 * np.eye(2), [-6.0, -6.0], const=9.0 + 9.0)],
        constraints=[linear(2, [0], [1.0], const=-2.0)],
        pins={1: 0.0},
    )
    res = solve(prog, [0.0, 123.0])
    assert res.point[1] == 0.0
    assert res.point[0] == pytest.approx(2.0, abs=1e-5)
    assert res.objective == pytest.approx(1.0 + 9.0, abs=1e-4)


def test_fully_pinned_constraint_infeasible():
    prog = ConvexProgram(
        dim=2,
        objective_terms=[quad(2, [0, 1], np.eye(2), [0.0, 0.0])],
        constraints=[linear(2, [1], [1.0], const=-0.5)],  # x1 <= 0.5, but pinned to 2
        pins={1: 2.0},
    )
    res = solve(prog, [0.0, 2.0])
    assert res.status is Status.Infeasible


def test_fully_pinned_constraint_satisfied_is_dropped():
    prog = ConvexProgram(
        dim=2,
        objective_terms=[quad(2, [0], [[2.0]], [0.0])],
        constraints=[linear(2, [1], [1.0], const=-0.5)],
        pins={1: 0.25},
    )
    res = solve(prog, [1.0, 0.25])
    assert res.status is Status.Converged
    assert res.point[0] == pytest.approx(0.0, abs=1e-6)


def test_rejects_infeasible_start():
    prog = ConvexProgram(
        dim=1,
        objective_terms=[quad(1, [0], [[2.0]], [0.0])],
        constraints=[linear(1, [0], [-1.0], const=1.0)],  # x >= 1
    )
    with pytest.raises(ValueError):
        solve(prog, [0.0])


def test_phase1_finds_interior_point():
    prog = ConvexProgram(
        dim=2,
        constraints=[
            linear(2, [0], [-1.0], const=1.0),  # x0 >= 1
            linear(2, [0, 1], [1.0, 1.0], const=-4.0),  # x0 + x1 <= 4
            linear(2, [1], [-1.0], const=0.5),  # x1 >= 0.5
        ],
    )
    ok, x, s = phase1_feasible(prog, [0.0, 0.0], margin=1e-6)
    assert ok
    assert x[0] >= 1 + 1e-6 and x[1] >= 0.5 + 1e-6 and x[0] + x[1] <= 4 - 1e-6
    assert s < -1e-6


def test_phase1_returns_feasible_seed_unchanged():
    prog = ConvexProgram(dim=1, constraints=[linear(1, [0], [1.0], const=-1.0)])  # x <= 1
    ok, x, s = phase1_feasible(prog, [-5.0], margin=0.1)
    assert ok and x[0] == -5.0


def test_phase1_detects_empty_set():
    prog = ConvexProgram(
        dim=1,
        constraints=[
            linear(1, [0], [-1.0], const=1.0),  # x >= 1
            linear(1, [0], [1.0], const=1.0),  # x <= -1
        ],
    )
    ok, _, s = phase1_feasible(prog, [0.0], margin=1e-9)
    assert not ok
    assert s >= 0.9  # true minimum of the bound is 1


def test_deterministic_bitwise():
    rng = np.random.default_rng(4)
    n = 5
    M = rng.normal(size=(n, n))
    Q = M @ M.T + np.eye(n)
    b = rng.normal(size=n)
    prog = ConvexProgram(
        dim=n,
        objective_terms=[quad(n, range(n), Q, b)],
        constraints=[linear(n, [i], [-1.0], const=-2.0) for i in range(n)],
    )
    r1 = solve(prog, np.zeros(n))
    r2 = solve(prog, np.zeros(n))
    assert r1.objective == r2.objective
    assert np.array_equal(r1.point, r2.point)


def test_objective_descends_along_barrier_path():
    # with one constraint active at the optimum the outer iterates improve
    prog = ConvexProgram(
        dim=1,
        objective_terms=[linear(1, [0], [1.0])],
        constraints=[linear(1, [0], [-1.0], const=0.0)],  # x >= 0
    )
    loose = solve(prog, [1.0], SolverSettings(max_outer=2))
    tight = solve(prog, [1.0], SolverSettings(kkt_tol=1e-9))
    assert tight.objective <= loose.objective + 1e-12
    assert tight.objective == pytest.approx(0.0, abs=1e-8)


def test_check_gradient_flags_wrong_gradient():
    good = SmoothFunction(1, [0], lambda xs: (xs[0] ** 3, np.array([3 * xs[0] ** 2]), None))
    bad = SmoothFunction(1, [0], lambda xs: (xs[0] ** 3, np.array([2 * xs[0] ** 2]), None))
    assert check_gradient(good, np.array([1.7])) < 1e-7
    assert check_gradient(bad, np.array([1.7])) > 1e-2


def test_smooth_function_validation():
    with pytest.raises(ValueError):
        SmoothFunction(2, [0, 0], lambda xs: (0.0, np.zeros(2), None))
    with pytest.raises(ValueError):
        SmoothFunction(2, [2], lambda xs: (0.0, np.zeros(1), None))
    with pytest.raises(ValueError):
        ConvexProgram(dim=2, pins={5: 0.0})
