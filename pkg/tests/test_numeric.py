import numpy as np
import pytest

from flatlas.geometry import VectorField
from flatlas.numeric import (
    NumericError,
    SampledSignal,
    bracket_fd_oracle,
    directional_derivative,
    fd_derivative,
    flow_box_integrals,
    integrate,
    newton,
    rk4,
    signal_jets,
)


def test_rk4_fourth_order():
    rhs = lambda t, x: -x
    errs = []
    for dt in (0.1, 0.05):
        x = rk4(rhs, [1.0], 0.0, 1.0, dt)
        errs.append(abs(x[-1, 0] - np.exp(-1.0)))
    assert 14 < errs[0] / errs[1] < 18


def test_integrate_example1_closed_form(ex1):
    # u = (0, 1): x3 = t, x2 = t^2/2, x1 = 1 + t^3/6
    traj = integrate(ex1, [1.0, 0.0, 0.0], lambda t: [0.0, 1.0], (0.0, 1.0), 1e-2)
    assert np.allclose(traj.states[-1], [1 + 1 / 6, 0.5, 1.0], atol=1e-10)
    assert traj.times[-1] == pytest.approx(1.0)


def test_sampled_signal_exact_at_nodes():
    s = SampledSignal(0.0, 0.1, [[0.0], [1.0], [4.0]])
    assert s(0.1)[0] == 1.0
    assert s(0.15)[0] == pytest.approx(2.5)


def test_bracket_oracle_examples(ex1, ex2):
    f0, f2 = ex1.drift, ex1.controls[1]
    est = bracket_fd_oracle(f0, f2, [0.3, -0.2, 0.5])
    assert np.allclose(est, [0, -1, 0], atol=1e-6)
    e1, _, e3 = ex2.controls
    est = bracket_fd_oracle(e1, e3, [1.0, 1.0, 1.0, 1.0])
    assert np.allclose(est, [0, -1, 1, 0], atol=1e-5)


def test_flow_box_integrals_are_invariant():
    f = VectorField.parse(["1", "x3", "x4", "0"], ["x1", "x2", "x3", "x4"])
    h = flow_box_integrals(f, [0.0, 0.0, 0.0, 1.0])
    x = np.array([0.2, 0.1, -0.3, 1.1])
    v = np.array([1.0, x[2], x[3], 0.0])
    assert np.max(np.abs(directional_derivative(h, x, v))) < 1e-5


def test_flow_box_rejects_vanishing_field():
    f = VectorField.parse(["x1", "0"], ["x1", "x2"])
    with pytest.raises(NumericError):
        flow_box_integrals(f, [0.0, 0.0])


def test_fd_derivatives():
    t = np.linspace(0, 1, 1001)
    y = np.sin(t)
    assert np.max(np.abs(fd_derivative(y, t[1] - t[0], 1) - np.cos(t))) < 1e-9
    assert np.max(np.abs(fd_derivative(y, t[1] - t[0], 2) + np.sin(t))) < 1e-6


def test_signal_jets_exact_and_sampled():
    t = np.linspace(0, 1, 201)
    exact = signal_jets(["sin(t)", "t^2"], t, 2)
    assert np.allclose(exact[2][:, 1], 2.0)
    sampled = signal_jets(lambda s: [np.sin(s), s * s], t, 2)
    assert np.max(np.abs(sampled[1] - exact[1])) < 1e-7


def test_newton():
    fun = lambda x: np.array([x[0] ** 2 - 2.0])
    jac = lambda x: np.array([[2 * x[0]]])
    x, res = newton(fun, jac, [1.0])
    assert x[0] == pytest.approx(np.sqrt(2)) and res < 1e-10
    with pytest.raises(NumericError):
        newton(lambda x: np.array([x[0] ** 2 + 1]), lambda x: np.array([[2 * x[0]]]), [0.0])


def test_commuting_fields_give_zero_bracket():
    a = VectorField.parse(["1", "0"], ["x", "y"])
    b = VectorField.parse(["0", "1"], ["x", "y"])
    assert np.max(np.abs(bracket_fd_oracle(a, b, [0.3, 0.4]))) < 1e-6
    assert np.max(np.abs(bracket_fd_oracle(a, b, [0.3, 0.4], richardson=False))) < 1e-6


def test_flow_box_coordinate_field_is_exact(ex1):
    # f2 = d/dx3 with transversal x3 = 0 gives h = (x1, x2)
    h = flow_box_integrals(ex1.controls[1], [0.0, 0.0, 0.0], [[1, 0, 0], [0, 1, 0]])
    assert np.allclose(h([0.3, -0.7, 0.45]), [0.3, -0.7], atol=1e-12)


def test_flow_box_example2_transversal(ex2):
    f1 = ex2.controls[0]
    base = np.array([1.0, 1.0, 1.0, 1.0])
    h = flow_box_integrals(f1, base, [[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = base + rng.uniform(-0.1, 0.1, 4)
        v = np.array([1.0, x[2], x[3], 0.0])
        assert np.max(np.abs(directional_derivative(h, x, v))) < 1e-5
    # the hit point carries the polynomial integrals
    x = base + np.array([0.05, -0.02, 0.03, 0.01])
    y = base + np.concatenate([[0.0], h(x)])
    ints = lambda p: [2 * p[1] * p[3] - p[2] ** 2, p[0] * p[3] - p[2], p[3]]
    assert np.allclose(ints(x), ints(y), atol=1e-9)
