import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apfos import adtape as ad
from apfos import loss as L
from apfos import network as N
from apfos import optim as O
from apfos import problem as P


def quadratic():
    A = np.diag([1.0, 10.0])
    b = np.array([1.0, 1.0])
    fmin = -0.5 * b @ np.linalg.solve(A, b)

    def f(x):
        # shifted so the minimum value is 0
        return 0.5 * x @ A @ x - b @ x - fmin, A @ x - b

    return f


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def test_lbfgs_quadratic_within_20():
    res = O.lbfgs_minimize(quadratic(), np.array([3.0, -2.0]), stop=O.StopRule(0.0, 20))
    assert res.f < 1e-10
    assert res.iterations <= 20


def test_lbfgs_rosenbrock_within_200():
    res = O.lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), stop=O.StopRule(0.0, 200))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)


def test_lbfgs_constant_stops_at_first_iteration():
    res = O.lbfgs_minimize(lambda x: (5.0, np.zeros_like(x)), np.ones(3), stop=O.StopRule(0.0, 100))
    assert res.iterations == 1
    assert res.status == "tol"


def test_lbfgs_trace_monotone_on_nonconvex():
    def f(x):
        return float(np.sum(np.sin(3 * x) + 0.1 * x**2)), 3 * np.cos(3 * x) + 0.2 * x

    res = O.lbfgs_minimize(f, np.linspace(-2, 2, 6), stop=O.StopRule(0.0, 100))
    values = [v for _, v in res.trace]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert [k for k, _ in res.trace] == list(range(1, len(values) + 1))


def test_lbfgs_tol_rule():
    res = O.lbfgs_minimize(quadratic(), np.array([3.0, -2.0]), stop=O.StopRule(1e-3, 1000))
    assert res.status == "tol"
    assert res.iterations < 1000


def test_lbfgs_line_search_failure_is_graceful():
    x0 = np.array([1.0, 1.0])

    def f(x):
        if np.array_equal(x, x0):
            return 1.0, np.array([1.0, 1.0])
        return np.nan, np.full(2, np.nan)

    res = O.lbfgs_minimize(f, x0, stop=O.StopRule(0.0, 10))
    assert res.line_search_failed
    np.testing.assert_array_equal(res.x, x0)


def test_lbfgs_rejects_non_finite_start():
    with pytest.raises(O.NumericalError):
        O.lbfgs_minimize(lambda x: (np.inf, x), np.ones(2))


def test_strong_wolfe_conditions_hold():
    f = quadratic()
    x = np.array([3.0, -2.0])
    f0, g0 = f(x)
    d = -g0
    ok, t, ft, gt, _ = O.strong_wolfe(f, x, 1.0, d, f0, g0)
    assert ok
    assert ft <= f0 + 1e-4 * t * (g0 @ d)
    assert abs(gt @ d) <= 0.9 * abs(g0 @ d)


def test_stop_rule_semantics():
    s = O.StopRule(0.0, 3)
    assert s.keep_going(1, None, None)
    assert s.keep_going(3, 1.0, 0.5)
    assert not s.keep_going(4, 1.0, 0.5)
    assert not s.keep_going(2, 1.0, 1.0)  # exactly flat
    assert not O.StopRule(0.1, 10).keep_going(2, 1.0, 0.95)
    with pytest.raises(ValueError):
        O.StopRule(-1.0, 3)


def test_adam_first_step_closed_form():
    st0 = O.AdamState.zeros(1, lr=0.1)
    new, st1 = O.adam_step(st0, np.array([1.0]), np.array([2.0]))
    assert new[0] == pytest.approx(1 - 0.1 * 2 / (2 + 1e-8), abs=1e-12)
    assert new[0] == pytest.approx(0.9, abs=1e-6)
    assert st1.t == 1


def test_adam_zero_gradient_is_identity():
    x = np.array([0.3, -1.0])
    new, _ = O.adam_step(O.AdamState.zeros(2), x, np.zeros(2))
    np.testing.assert_array_equal(new, x)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=5))
def test_adam_lr_zero_is_identity_and_v_nonnegative(g):
    g = np.asarray(g)
    x = np.arange(len(g), dtype=float)
    state = O.AdamState.zeros(len(g), lr=0.0)
    for _ in range(3):
        new, state = O.adam_step(state, x, g)
        np.testing.assert_array_equal(new, x)
        assert np.all(state.v >= 0)


def test_adam_deterministic_and_length_checked():
    x, g = np.array([1.0, 2.0]), np.array([0.5, -0.1])
    a, _ = O.adam_step(O.AdamState.zeros(2), x, g)
    b, _ = O.adam_step(O.AdamState.zeros(2), x, g)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError, match="length"):
        O.adam_step(O.AdamState.zeros(2), x, np.ones(3))


def tiny_problem():
    inst = P.ProblemInstance.from_case("I", 1, 1e-2)
    data = L.prepare(inst, P.sample(inst, 100, 20, 20, 0))
    sizes = (2, 10, 10, 3)

    def evaluate(theta):
        tape = ad.Tape(theta)
        total, br = L.apfos_loss_2d(N.NetworkModel(sizes, tape.params), data)
        return br.total, tape.backward(total), br.row()

    return evaluate, N.init_params(sizes, 0)


@pytest.mark.parametrize("name", ["lbfgs", "adam"])
def test_train_descends(name):
    evaluate, theta0 = tiny_problem()
    res = O.train(evaluate, theta0, optimizer=name, stop=O.StopRule(0.0, 50))
    assert res.trace[-1]["total"] < res.trace[0]["total"]
    assert res.iterations == 50


def test_train_trace_cadence_and_snapshots():
    evaluate, theta0 = tiny_problem()
    res = O.train(evaluate, theta0, stop=O.StopRule(0.0, 30), log_every=10,
                  snapshots=[0, 7, 30], on_snapshot=lambda k, th: k)
    assert [r["iter"] for r in res.trace] == [0, 10, 20, 30]
    assert res.snapshots == {0: 0, 7: 7, 30: 30}
    assert set(res.trace[0]) == {"iter", "total", *L.TERMS}


def test_train_is_deterministic():
    evaluate, theta0 = tiny_problem()
    a = O.train(evaluate, theta0, stop=O.StopRule(0.0, 20))
    b = O.train(evaluate, theta0, stop=O.StopRule(0.0, 20))
    assert a.trace == b.trace
    assert np.array_equal(a.params, b.params)


def test_train_unknown_optimizer():
    evaluate, theta0 = tiny_problem()
    with pytest.raises(ValueError, match="optimizer"):
        O.train(evaluate, theta0, optimizer="sgd")
