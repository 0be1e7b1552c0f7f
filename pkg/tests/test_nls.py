import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brickyard.errors import SingularSystem
from brickyard.nls import ResidualProblem, SolverConfig, check_jacobian, numeric_jacobian, solve


def test_linear_problem():
    p = ResidualProblem()
    p.add_parameter("x", [0.0])
    p.add_residual(["x"], lambda x: x - 3.0, lambda x: [np.eye(1)])
    rep = solve(p)
    assert abs(p.value("x")[0] - 3.0) < 1e-10
    # the damped first step lands at 3 / (1 + mu0); two more reach 1e-10
    assert 1 <= rep.iterations <= 3


def _rosenbrock(x0=(-1.2, 1.0)):
    p = ResidualProblem()
    p.add_parameter("v", list(x0))
    p.add_residual(["v"], lambda v: np.array([1 - v[0], 10 * (v[1] - v[0] ** 2)]),
                   lambda v: [np.array([[-1.0, 0.0], [-20 * v[0], 10.0]])])
    return p


def test_rosenbrock():
    p = _rosenbrock()
    rep = solve(p, SolverConfig(max_iterations=200, param_tol=1e-12, cost_tol=1e-15))
    assert np.allclose(p.value("v"), [1.0, 1.0], atol=1e-6)
    assert all(b <= a for a, b in zip(rep.trace, rep.trace[1:]))


def test_all_frozen_returns_unchanged():
    p = _rosenbrock()
    p.set_frozen("v")
    c0 = p.cost()
    rep = solve(p)
    assert rep.iterations == 0 and rep.final_cost == c0
    assert np.array_equal(p.value("v"), [-1.2, 1.0])


def test_singular_system():
    p = ResidualProblem()
    p.add_parameter("x", [0.0])
    p.add_residual(["x"], lambda x: np.array([np.nan]), lambda x: [np.array([[np.nan]])])
    with pytest.raises(SingularSystem):
        solve(p)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(param_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)


def test_unknown_block():
    p = ResidualProblem()
    with pytest.raises(KeyError):
        p.add_residual(["nope"], lambda x: x)


def test_check_jacobian_linear():
    p = ResidualProblem()
    p.add_parameter("x", [1.0, 2.0])
    a = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
    p.add_residual(["x"], lambda x: a @ x, lambda x: [a])
    assert check_jacobian(p, "x") < 1e-9


def test_numeric_jacobian_matches():
    fn = lambda x: np.array([np.sin(x[0]) * x[1], x[0] ** 2])
    j = numeric_jacobian(fn, [np.array([0.3, 2.0])], 0)
    assert np.allclose(j, [[np.cos(0.3) * 2.0, np.sin(0.3)], [0.6, 0.0]], atol=1e-6)


def _two_block(order, start):
    p = ResidualProblem()
    for name in order:
        p.add_parameter(name, start[name])
    p.add_residual(["a", "b"], lambda a, b: np.array([a[0] + b[0] - 2, a[0] - 2 * b[0], np.sin(a[0]) - 0.1]))
    return p


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_block_order_invariance(a0, b0):
    start = {"a": [a0], "b": [b0]}
    p1, p2 = _two_block("ab", start), _two_block("ba", start)
    r1, r2 = solve(p1), solve(p2)
    assert abs(r1.final_cost - r2.final_cost) < 1e-9


def test_freezing_matches_reduced_problem():
    full = _two_block("ab", {"a": [0.2], "b": [0.7]})
    full.set_frozen("b")
    solve(full)
    red = ResidualProblem()
    red.add_parameter("a", [0.2])
    red.add_residual(["a"], lambda a: np.array([a[0] + 0.7 - 2, a[0] - 1.4, np.sin(a[0]) - 0.1]))
    solve(red)
    assert abs(full.value("a")[0] - red.value("a")[0]) < 1e-12
    assert full.value("b")[0] == 0.7


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_accepted_costs_non_increasing(x, y):
    p = _rosenbrock((x, y))
    rep = solve(p, SolverConfig(max_iterations=50))
    assert all(b <= a for a, b in zip(rep.trace, rep.trace[1:]))
    assert rep.termination in ("param_tol", "cost_tol", "max_iter", "stalled")
