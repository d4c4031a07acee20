import random
from fractions import Fraction

import numpy as np
import pytest

from flatlas import linalg
from flatlas.symbolic import evaluate, parse_expr

F = Fraction


def test_rank_basic():
    assert linalg.bareiss_rank([[F(0)] * 3] * 2) == 0
    assert linalg.bareiss_rank([[1, 2], [2, 4]]) == 1
    assert linalg.gauss_rank([[1, 0, 0], [0, 0, 1]]) == 2


def test_rank_matches_numpy_on_random_integer_matrices():
    rng = random.Random(7)
    for _ in range(60):
        r, c = rng.randint(1, 5), rng.randint(1, 5)
        # low rank by construction half the time
        if rng.random() < 0.5:
            k = rng.randint(1, min(r, c))
            a = np.array([[rng.randint(-3, 3) for _ in range(k)] for _ in range(r)])
            b = np.array([[rng.randint(-3, 3) for _ in range(c)] for _ in range(k)])
            m = a @ b
        else:
            m = np.array([[rng.randint(-5, 5) for _ in range(c)] for _ in range(r)])
        rows = [[F(int(v)) for v in row] for row in m]
        assert linalg.bareiss_rank(rows) == np.linalg.matrix_rank(m)
        assert linalg.gauss_rank(rows) == np.linalg.matrix_rank(m)


def test_nullspace_and_solve():
    rows = [[F(1), F(2), F(3)], [F(2), F(4), F(6)]]
    ns = linalg.nullspace(rows, 3)
    assert len(ns) == 2
    for v in ns:
        assert all(sum(a * b for a, b in zip(r, v)) == 0 for r in rows)
    x = linalg.solve([[F(2), F(1)], [F(1), F(3)]], [F(3), F(5)])
    assert x == [F(4, 5), F(7, 5)]


def test_rref_pivots():
    r, piv = linalg.rref([[F(0), F(2), F(4)], [F(1), F(1), F(1)]])
    assert piv == [0, 1]
    assert r[0] == [1, 0, -1]


def test_det_expr():
    m = [[parse_expr("a"), parse_expr("b")], [parse_expr("c"), parse_expr("d")]]
    d = linalg.det_expr(m)
    assert d == parse_expr("a*d - b*c")
    assert evaluate(d, {"a": 1, "b": 2, "c": 3, "d": 4}) == -2


def test_float_rank_handles_irrational_entries():
    import mpmath
    with mpmath.workdps(60):
        r2 = mpmath.sqrt(2)
    assert linalg.float_rank([[r2, 1], [2, r2]]) == 1
    assert linalg.float_rank([[r2, 1], [1, r2]]) == 2
    with pytest.raises(Exception):
        linalg.solve([[F(1), F(1)], [F(1), F(1)]], [F(1), F(2)])
