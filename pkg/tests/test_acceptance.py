"""Acceptance criteria 1-6.

Run with pytest (a summary line per criterion is printed at the end) or
directly: ``python3 tests/test_acceptance.py``.
"""
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles as O  # noqa: E402
from flatlas.accessibility import check_generic_condition, classify_point, make_point  # noqa: E402
from flatlas.flat_degenerate import (  # noqa: E402
    InvolutivityError,
    analyze_degenerate,
    choose_split,
    degenerate_round_trip,
    gamma_a_tower,
)
from flatlas.flat_generic import recover_inputs_symbolic, verify_first_integrals  # noqa: E402
from flatlas.geometry import ControlAffineSystem, lie_bracket  # noqa: E402
from flatlas.symbolic import canonical, parse_expr, render  # noqa: E402
from flatlas.sysfile import load_system  # noqa: E402

import test_properties as props  # noqa: E402


def _sys(name):
    return load_system(name).system()


def _nonzero(rng):
    return Fraction(rng.choice([-5, -4, -3, -2, -1, 1, 2, 3, 4, 5]), rng.randint(1, 4))


def _any(rng):
    return Fraction(rng.randint(-5, 5), rng.randint(1, 4))


def criterion_1():
    ex1 = _sys("example1.sys")
    f0, f2 = ex1.drift, ex1.controls[1]
    assert [render(c) for c in lie_bracket(f0, f2).components] == O.EX1_F0_F2
    rng = random.Random(1)
    for _ in range(10):
        pt = make_point(ex1, [_nonzero(rng), _any(rng), _any(rng)], [_any(rng), _any(rng)])
        gc = check_generic_condition(ex1, pt)
        assert gc.holds and gc.holds_with_k == 2
    for _ in range(10):
        pt = make_point(ex1, [0, _any(rng), _any(rng)], [_any(rng), _any(rng)])
        assert not check_generic_condition(ex1, pt).holds
    assert verify_first_integrals(ex1, 2, O.EX1_PSI, make_point(ex1, [1, 0, 0])).passed
    rec = recover_inputs_symbolic(ex1, 2, O.EX1_PSI)
    # y1 = z1, y2 = z2
    assert canonical(rec.solved["u1"]) == canonical(parse_expr(O.EX1_U1))


def criterion_2():
    ex1 = _sys("example1.sys")
    an = analyze_degenerate(ex1, make_point(ex1, [0, 1, 0], [1, 0]))
    assert an.tower.ranks == O.EX1_DEG_TOWER
    assert an.tower.indices == O.EX1_DEG_INDICES
    assert [render(c) for c in an.flat_output.components] == O.EX1_DEG_OUTPUT
    assert an.verification.verified
    rt = degenerate_round_trip(ex1, an.flat_output, ["0.1*sin(t)"], ["1 + 0.1*t"], (0.0, 1.0),
                               x_guess=[0.0, 1.0, 0.0], dt=1e-3)
    assert rt.z_error < 1e-5


def criterion_3():
    ex2 = _sys("example2.sys")
    f1, f2, f3 = ex2.controls
    for p in O.EX2_PSI_K1:
        assert f1.lie_derivative(parse_expr(p)).is_zero_canonical()
    for p in O.EX2_PSI_K3:
        assert f3.lie_derivative(parse_expr(p)).is_zero_canonical()
    with pytest.raises(InvolutivityError) as info:
        analyze_degenerate(ex2, make_point(ex2, [0, 1, 1, 1], [1, 0, 0]))
    err = info.value
    assert [i + 1 for i in err.pair] == O.EX2_WITNESS_PAIR
    assert err.witness == lie_bracket(f1, f2)


def criterion_4():
    ex3 = _sys("example3.sys")
    rng = random.Random(4)
    for _ in range(5):
        x = [_any(rng), _any(rng), _any(rng), _any(rng), _nonzero(rng), _any(rng)]
        pt = make_point(ex3, x)
        split = choose_split(ex3, pt, a=[1, 2], b=[3])
        assert gamma_a_tower(ex3, split, pt).ranks == O.EX3_DEG_TOWER
    an = analyze_degenerate(ex3, make_point(ex3, [0, 0, 0, 0, 1, 0]))
    assert an.tower.indices == O.EX3_DEG_INDICES
    assert [render(c) for c in an.flat_output.components] == O.EX3_DEG_OUTPUT
    ver = an.verification
    # first and second derivatives of z1, z2 free of u1, u2
    assert {k for k, v in ver.ua_free.items() if v} >= {(1, 1), (1, 2), (2, 1), (2, 2)}
    assert ver.chain_identity and ver.delta_invertible
    rt = degenerate_round_trip(ex3, an.flat_output, ["t + t^2/10", "t^2/2"], ["sin(t)/2"],
                               (0.0, 1.0), x_guess=[0, 0, 0, 0, 1, 0], dt=1e-3)
    assert rt.z_error < 1e-4


def criterion_5():
    props.test_bracket_antisymmetry_bilinearity_jacobi()
    props.test_leibniz_rules()
    props.test_wronskian_equals_kalman_for_linear_systems()
    props.test_tower_rank_matches_kalman_rank()
    props.test_gamma_contained_in_strong_tower()
    props.test_bracket_fd_oracle_matches_symbolic()
    props.test_flow_box_directional_derivative()
    props.test_truncation_order_independence("example1.sys")
    props.test_truncation_order_independence("example3.sys")


def criterion_6():
    neg = ControlAffineSystem.parse(["x1", "x2"], ["u1"], ["0", "x2"], [["1", "0"]], "neg")
    rng = random.Random(6)
    for _ in range(10):
        pt = make_point(neg, [_any(rng), _any(rng)], [_any(rng)])
        assert classify_point(neg, pt).tag == O.NEG_TAG


LIMITS = {1: 5.0, 2: 10.0, 3: 5.0, 4: 20.0, 5: 180.0, 6: 5.0}
CHECKS = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6}


def _timed(n):
    t0 = time.perf_counter()
    CHECKS[n]()
    elapsed = time.perf_counter() - t0
    assert elapsed < LIMITS[n], f"criterion {n} took {elapsed:.1f}s (limit {LIMITS[n]}s)"
    return elapsed


@pytest.mark.parametrize("n", sorted(CHECKS))
def test_criterion(n):
    _timed(n)


if __name__ == "__main__":
    failed = 0
    for n in sorted(CHECKS):
        try:
            dt = _timed(n)
            print(f"criterion {n}: PASS ({dt:.2f}s)")
        except Exception as exc:  # report every criterion, then exit nonzero
            failed += 1
            print(f"criterion {n}: FAIL ({type(exc).__name__}: {exc})")
    raise SystemExit(1 if failed else 0)
