"""Exact linear algebra over the rationals, plus a high-precision fallback."""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import mpmath

from .symbolic import ONE, ZERO, Expr


def _to_integer_rows(rows: Sequence[Sequence[Fraction]]) -> list[list[int]]:
    out = []
    for row in rows:
        den = 1
        for v in row:
            den = math.lcm(den, Fraction(v).denominator)
        out.append([int(Fraction(v) * den) for v in row])
    return out


def bareiss_rank(rows: Sequence[Sequence[Fraction]]) -> int:
    """Rank by fraction-free (Bareiss) elimination.

    Rows are scaled to integers first; every intermediate entry is then a
    minor of the integer matrix, so the divisions below are exact.
    """
    m = _to_integer_rows(rows)
    if not m or not m[0]:
        return 0
    nrows, ncols = len(m), len(m[0])
    r = 0
    prev = 1
    for c in range(ncols):
        if r == nrows:
            break
        piv = next((i for i in range(r, nrows) if m[i][c] != 0), None)
        if piv is None:
            continue
        if piv != r:
            m[r], m[piv] = m[piv], m[r]
        p = m[r][c]
        for i in range(r + 1, nrows):
            a = m[i][c]
            row_i, row_r = m[i], m[r]
            for j in range(c + 1, ncols):
                row_i[j] = (p * row_i[j] - a * row_r[j]) // prev
            row_i[c] = 0
        prev = p
        r += 1
    return r


def gauss_rank(rows: Sequence[Sequence[Fraction]]) -> int:
    """Plain Fraction elimination; kept as an independent check of bareiss_rank."""
    m = [[Fraction(v) for v in row] for row in rows]
    if not m:
        return 0
    r = 0
    for c in range(len(m[0])):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        for i in range(r + 1, len(m)):
            f = m[i][c] / m[r][c]
            if f:
                for j in range(c, len(m[0])):
                    m[i][j] -= f * m[r][j]
        r += 1
        if r == len(m):
            break
    return r


def rref(rows: Sequence[Sequence[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    m = [[Fraction(v) for v in row] for row in rows]
    pivots = []
    r = 0
    ncols = len(m[0]) if m else 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def nullspace(rows: Sequence[Sequence[Fraction]], ncols: int) -> list[list[Fraction]]:
    """Basis of {c : rows @ c = 0}, one vector per free column."""
    if not rows:
        return [[Fraction(int(i == j)) for i in range(ncols)] for j in range(ncols)]
    red, pivots = rref(rows)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for row, pc in zip(red, pivots):
            v[pc] = -row[f]
        basis.append(v)
    return basis


def solve(a: Sequence[Sequence[Fraction]], b: Sequence[Fraction]) -> list[Fraction]:
    """Exact solution of a square nonsingular system."""
    n = len(a)
    aug = [list(map(Fraction, row)) + [Fraction(bi)] for row, bi in zip(a, b)]
    red, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ZeroDivisionError("singular system")
    return [row[n] for row in red]


def _mpf(v):
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def float_rank(rows, dps: int = 50, rtol: float = 1e-30) -> int:
    """Rank of a real matrix given as mpmath-convertible entries.

    Partial pivoting at ``dps`` digits; an entry counts as zero below
    ``rtol`` times the largest magnitude in the matrix.
    """
    with mpmath.workdps(dps):
        m = [[_mpf(v) for v in row] for row in rows]
        if not m or not m[0]:
            return 0
        scale = max((abs(v) for row in m for v in row), default=mpmath.mpf(0))
        if scale == 0:
            return 0
        tol = scale * rtol
        r = 0
        for c in range(len(m[0])):
            piv = max(range(r, len(m)), key=lambda i: abs(m[i][c]), default=None)
            if piv is None or abs(m[piv][c]) <= tol:
                continue
            m[r], m[piv] = m[piv], m[r]
            for i in range(r + 1, len(m)):
                f = m[i][c] / m[r][c]
                for j in range(c, len(m[0])):
                    m[i][j] -= f * m[r][j]
            r += 1
            if r == len(m):
                break
        return r


def det_expr(mat: Sequence[Sequence[Expr]]) -> Expr:
    """Symbolic determinant by Laplace expansion along columns, memoized on
    row subsets.  Intended for the small square matrices used here."""
    n = len(mat)
    if n == 0:
        return ONE
    memo: dict = {}

    def minor(col: int, rows: tuple) -> Expr:
        if col == n:
            return ONE
        key = (col, rows)
        if key in memo:
            return memo[key]
        total = ZERO
        for pos, r in enumerate(rows):
            entry = mat[r][col]
            if entry.is_zero_canonical():
                continue
            sub = minor(col + 1, rows[:pos] + rows[pos + 1:])
            term = entry * sub
            total = total - term if pos % 2 else total + term
        memo[key] = total
        return total

    return minor(0, tuple(range(n)))
