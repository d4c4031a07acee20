from flatlas.accessibility import (
    check_generic_condition,
    classify_point,
    gamma_accessibility,
    make_point,
    strong_accessibility,
)
from flatlas.geometry import ControlAffineSystem

import oracles as O


def test_generic_condition_example1(ex1):
    gc = check_generic_condition(ex1, make_point(ex1, [1, 0, 0]))
    assert gc.holds and gc.holds_with_k == O.EX1_GENERIC_K
    assert gc.ranks[1] == 2
    gc0 = check_generic_condition(ex1, make_point(ex1, [0, 1, 0]))
    assert not gc0.holds


def test_drift_variant_is_flagged(ex1):
    gc = check_generic_condition(ex1, make_point(ex1, [0, 1, 0]), include_drift=True)
    assert gc.nonstandard_drift_test


def test_classification_example1(ex1):
    pc = classify_point(ex1, make_point(ex1, [1, 0, 0]))
    assert str(pc) == "InOmega0(k=2)"
    pc = classify_point(ex1, make_point(ex1, [0, 1, 0], [1, 0]))
    assert pc.tag == "InOmegaOnly" and pc.k == 1
    pc = classify_point(ex1, make_point(ex1, [0, 0, 0]))
    assert pc.tag == "InOmegaOnly" and pc.k == 2
    assert pc.tower.point_ranks == [1, 2, 3]


def test_negative_control(non_accessible):
    pc = classify_point(non_accessible, make_point(non_accessible, [0, 1]))
    assert pc.tag == O.NEG_TAG
    assert pc.tower.point_ranks == O.NEG_RANKS
    assert pc.tower.stabilized and not pc.in_omega


def test_indeterminate_on_tiny_budget():
    # chain of integrators needs n - 1 bracket levels
    s = ControlAffineSystem.parse(
        ["x1", "x2", "x3", "x4"], ["u1"], ["x2", "x3", "x4", "0"], [["0", "0", "0", "1"]])
    pc = classify_point(s, make_point(s, [0, 0, 0, 0]), budget=1)
    assert pc.tag == "Indeterminate"
    assert classify_point(s, make_point(s, [0, 0, 0, 0])).tag == "InOmegaOnly"


def test_strong_tower_example2(ex2):
    t = strong_accessibility(ex2, make_point(ex2, [1, 1, 1, 1]))
    assert t.point_ranks == [3, 4]


def test_containment_gamma_in_d(ex1, ex2):
    for sys, x in ((ex1, [0, 1, 0]), (ex2, [0, 1, 1, 1])):
        pt = make_point(sys, x)
        g = gamma_accessibility(sys, pt)
        d = strong_accessibility(sys, pt)
        for rg, rd in zip(g.point_ranks, d.point_ranks):
            assert rg <= rd
