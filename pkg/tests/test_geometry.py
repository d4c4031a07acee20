from fractions import Fraction

import pytest

from flatlas.geometry import (
    ControlAffineSystem,
    Distribution,
    FieldMatrix,
    FrameMismatchError,
    GeometryError,
    VectorField,
    ad_power,
    generic_rank,
    involutive_closure,
    is_involutive,
    lie_bracket,
    rank_at_point,
    system_field_g,
    wronskian_matrix,
)
from flatlas.symbolic import parse_expr, render

import oracles as O


def comps(v):
    return [render(c) for c in v.components]


def test_bracket_examples(ex1, ex2):
    f0, (f1, f2) = ex1.drift, ex1.controls
    assert comps(lie_bracket(f0, f2)) == O.EX1_F0_F2
    assert comps(lie_bracket(f0, f1)) == O.EX1_F0_F1
    assert lie_bracket(f1, f1).is_zero()
    assert comps(ad_power(f0, f2, 2)) == O.EX1_AD2_F0_F2
    assert ad_power(f0, f2, 0) == f2
    e1, e2, e3 = ex2.controls
    assert comps(lie_bracket(e1, e3)) == O.EX2_F1_F3
    assert comps(lie_bracket(e1, e2)) == O.EX2_F1_F2


def test_frame_mismatch():
    a = VectorField.parse(["x"], ["x"])
    b = VectorField.parse(["y"], ["y"])
    with pytest.raises(FrameMismatchError):
        lie_bracket(a, b)


def test_system_field_g(ex1, ex2):
    assert comps(system_field_g(ex1)) == O.EX1_G
    assert comps(system_field_g(ex2)) == O.EX2_G
    assert system_field_g(ex1, [0, 0]) == ex1.drift
    with pytest.raises(GeometryError):
        system_field_g(ex1, [0])


def test_system_validation():
    with pytest.raises(GeometryError):
        ControlAffineSystem.parse(["x1", "x2"], ["u1", "u2"], ["0", "0"], [["1", "0"], ["0", "1"]])
    states = ("x1", "x2")
    leaky = VectorField((parse_expr("u1"), parse_expr("0")), states)
    with pytest.raises(GeometryError):
        ControlAffineSystem(states, ("u1",), leaky, (VectorField.parse(["1", "0"], states),))
    s = ControlAffineSystem.parse(["x1", "x2"], ["u1"], ["0", "0"], [["0", "0"]])
    with pytest.warns(UserWarning, match="not generically independent"):
        assert s.control_independence_warning()


def test_ranks(ex1):
    pt = {"x1": 1, "x2": 0, "x3": 0, "u1": 0, "u2": 0}
    assert rank_at_point(ex1.control_matrix(), pt) == O.EX1_G_RANK_AT_X1_1
    assert rank_at_point(FieldMatrix((VectorField.zero(ex1.states),)), pt) == 0
    assert rank_at_point(wronskian_matrix(ex1, None, 1), pt) == O.EX1_W1_RANK_GENERIC
    assert generic_rank(ex1.control_matrix()) == 2
    on_axis = {**pt, "x1": 0}
    assert rank_at_point(ex1.control_matrix(), on_axis) == 1


def test_rank_with_transcendental_entries():
    v = VectorField.parse(["sin(x)", "cos(x)"], ["x", "y"])
    w = VectorField.parse(["cos(x)", "-sin(x)"], ["x", "y"])
    assert rank_at_point([v, w], {"x": Fraction(1, 3), "y": 0}) == 2
    assert rank_at_point([v, v.scale(parse_expr("2"))], {"x": 1, "y": 0}) == 1


def test_wronskian_k0_is_G(ex2):
    assert wronskian_matrix(ex2, None, 0).columns == tuple(ex2.controls)


def test_involutivity(ex2):
    e1, e2, e3 = ex2.controls
    res = is_involutive(Distribution((e1, e2)))
    assert res.involutive is False
    assert comps(res.witness) == O.EX2_WITNESS
    assert is_involutive(Distribution((e2, e3))).involutive is True
    one_round = involutive_closure(Distribution((e1, e2)), max_steps=1)
    assert one_round.generic_rank == 3
    full = involutive_closure(Distribution((e1, e2)))
    assert full.stabilized and full.generic_rank == 4


def test_involutivity_indeterminate_when_rank_drops(ex1):
    d = Distribution(tuple(ex1.controls))
    res = is_involutive(d, {"x1": 0, "x2": 0, "x3": 0})
    assert res.involutive is None


def test_field_algebra():
    a = VectorField.parse(["x", "y"], ["x", "y"])
    assert (a - a).is_zero()
    assert (a + a) == a.scale(2)
    assert a.lie_derivative(parse_expr("x*y")) == parse_expr("2*x*y")
    assert a.at({"x": 1, "y": 2}) == [1, 2]
    assert a.extend(["x", "y", "z"]).restrict(["x", "y"]) == a
