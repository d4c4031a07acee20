"""Accessibility rank conditions and point classification."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .geometry import (
    DEFAULT_SEED,
    ControlAffineSystem,
    Distribution,
    VectorField,
    generic_rank,
    involutive_closure,
    lie_bracket,
    rank_at_point,
    system_field_g,
)

PRUNING_CAVEAT = (
    "tower generators pruned to rank-raising brackets; ranks are exact up to sampling"
)


def make_point(sys: ControlAffineSystem, x: Sequence, u: Sequence | None = None) -> dict:
    """Bind states and controls by position; controls default to zero."""
    if len(x) != sys.n:
        raise ValueError(f"expected {sys.n} state values, got {len(x)}")
    u = [0] * sys.m if u is None else list(u)
    if len(u) != sys.m:
        raise ValueError(f"expected {sys.m} control values, got {len(u)}")
    pt = {name: Fraction(v) for name, v in zip(sys.states, x)}
    pt.update({name: Fraction(v) for name, v in zip(sys.control_names, u)})
    return pt


@dataclass
class GenericCondition:
    holds_with_k: int | None
    ranks: dict = field(default_factory=dict)   # k -> rank of (f_1..f_m, [g, f_k])
    nonstandard_drift_test: bool = False

    @property
    def holds(self) -> bool:
        return self.holds_with_k is not None


def check_generic_condition(sys: ControlAffineSystem, point: Mapping, *,
                            include_drift: bool = False) -> GenericCondition:
    """First k in 1..m with rank(f_1..f_m, [g, f_k]) = n at ``point``.

    ``include_drift`` also tries k = 0 (bracket with f_0) after the control
    indices; that variant is nonstandard and flagged as such.
    """
    g = system_field_g(sys)
    ks = list(range(1, sys.m + 1)) + ([0] if include_drift else [])
    out = GenericCondition(None, nonstandard_drift_test=include_drift)
    for k in ks:
        fk = sys.drift if k == 0 else sys.controls[k - 1]
        cols = list(sys.controls) + [lie_bracket(g, fk)]
        r = rank_at_point(cols, point)
        out.ranks[k] = r
        if r == sys.n and out.holds_with_k is None:
            out.holds_with_k = k
            break
    return out


@dataclass
class Tower:
    levels: list              # generators kept at each level (Distribution per level)
    generic_ranks: list
    point_ranks: list
    k_star: int | None
    stabilized: bool
    exhausted: bool
    n: int
    notes: list = field(default_factory=list)

    @property
    def final_rank(self) -> int:
        return self.point_ranks[-1]

    @property
    def reached_full_rank(self) -> bool:
        return self.k_star is not None

    @property
    def stabilized_below_full(self) -> bool:
        return self.stabilized and self.k_star is None


GammaTower = Tower
DTower = Tower


def _rank_pair(gens, point, seed):
    return generic_rank(gens, seed=seed), rank_at_point(gens, point)


def gamma_accessibility(sys: ControlAffineSystem, point: Mapping, budget: int | None = None,
                        *, seed: int = DEFAULT_SEED) -> Tower:
    """Gamma_{k+1} = Gamma_k + ad_g Gamma_k with u symbolic, ranked at ``point``.

    Only the newest brackets are bracketed again.  The kept generator list
    drops brackets that raise neither the generic nor the at-point rank;
    the frontier is never pruned, so the ranks are those of the full tower.
    """
    budget = 2 * sys.n if budget is None else budget
    if budget < 1:
        raise ValueError("budget must be >= 1")
    g = system_field_g(sys)
    gens = list(sys.controls)
    frontier = list(sys.controls)
    rg, rp = _rank_pair(gens, point, seed)
    tower = Tower([Distribution(tuple(gens))], [rg], [rp], None, False, False, sys.n,
                  [PRUNING_CAVEAT])
    if rp == sys.n:
        tower.k_star, tower.stabilized = 0, True
        return tower
    for level in range(1, budget + 1):
        frontier = [b for b in (lie_bracket(g, c) for c in frontier) if not b.is_zero()]
        grew = False
        for b in frontier:
            g2, p2 = _rank_pair(gens + [b], point, seed)
            if g2 > rg or p2 > rp:
                gens.append(b)
                rg, rp, grew = g2, p2, True
        tower.levels.append(Distribution(tuple(gens)))
        tower.generic_ranks.append(rg)
        tower.point_ranks.append(rp)
        if rp == sys.n:
            tower.k_star, tower.stabilized = level, True
            return tower
        if not frontier:
            tower.stabilized = True
            return tower
        if not grew and rg == rp:
            # constant rank near the point and no growth: the tower is stationary
            tower.stabilized = True
            return tower
    tower.exhausted = True
    tower.notes.append(f"budget of {budget} levels exhausted before stabilization")
    return tower


def strong_accessibility(sys: ControlAffineSystem, point: Mapping, budget: int | None = None,
                         *, seed: int = DEFAULT_SEED, closure_steps: int = 4) -> Tower:
    """D_{k+1} = closure(D_k) + ad_{f0} closure(D_k), D_0 = Gamma_0."""
    budget = 2 * sys.n if budget is None else budget
    if budget < 1:
        raise ValueError("budget must be >= 1")
    f0 = sys.drift
    gens = list(sys.controls)
    done_ad: set = set()
    rg, rp = _rank_pair(gens, point, seed)
    tower = Tower([Distribution(tuple(gens))], [rg], [rp], None, False, False, sys.n,
                  [PRUNING_CAVEAT])
    if rp == sys.n:
        tower.k_star, tower.stabilized = 0, True
        return tower
    for level in range(1, budget + 1):
        clo = involutive_closure(Distribution(tuple(gens)), closure_steps, point=point, seed=seed)
        gens = list(clo.distribution.generators)
        if not clo.stabilized:
            tower.notes.append(f"closure at level {level} hit its step budget")
        rg, rp = _rank_pair(gens, point, seed)
        new = []
        for v in gens:
            if v in done_ad:
                continue
            done_ad.add(v)
            b = lie_bracket(f0, v)
            if b.is_zero():
                continue
            g2, p2 = _rank_pair(gens + new + [b], point, seed)
            if g2 > rg or p2 > rp:
                new.append(b)
                rg, rp = g2, p2
        gens.extend(new)
        tower.levels.append(Distribution(tuple(gens)))
        tower.generic_ranks.append(rg)
        tower.point_ranks.append(rp)
        if rp == sys.n:
            tower.k_star, tower.stabilized = level, True
            return tower
        if not new and clo.stabilized and rg == rp:
            tower.stabilized = True
            return tower
    tower.exhausted = True
    tower.notes.append(f"budget of {budget} levels exhausted before stabilization")
    return tower


@dataclass
class PointClass:
    tag: str                      # InOmega0 | InOmegaOnly | OutsideOmega | Indeterminate
    k: int | None = None
    generic: GenericCondition | None = None
    tower: Tower | None = None

    def __str__(self):
        if self.tag in ("InOmega0", "InOmegaOnly"):
            return f"{self.tag}(k={self.k})"
        return self.tag

    @property
    def in_omega(self) -> bool:
        return self.tag in ("InOmega0", "InOmegaOnly")


def classify_point(sys: ControlAffineSystem, point: Mapping, budget: int | None = None,
                   *, seed: int = DEFAULT_SEED, include_drift: bool = False) -> PointClass:
    gc = check_generic_condition(sys, point, include_drift=include_drift)
    tower = gamma_accessibility(sys, point, budget, seed=seed)
    if gc.holds:
        return PointClass("InOmega0", gc.holds_with_k, gc, tower)
    if tower.reached_full_rank:
        return PointClass("InOmegaOnly", tower.k_star, gc, tower)
    if tower.stabilized:
        return PointClass("OutsideOmega", None, gc, tower)
    return PointClass("Indeterminate", None, gc, tower)


def neighbourhood_constant_rank(gens: Sequence[VectorField], point: Mapping, *,
                                radius=Fraction(1, 100), samples: int = 6,
                                seed: int = DEFAULT_SEED) -> bool:
    """Sampled check that the rank of ``gens`` is the same at and near ``point``."""
    import random

    rng = random.Random(seed)
    r0 = rank_at_point(gens, point)
    names = sorted(point)
    for _ in range(samples):
        q = {n: Fraction(point[n]) + radius * Fraction(rng.randint(-10, 10), 10) for n in names}
        try:
            if rank_at_point(gens, q) != r0:
                return False
        except Exception:
            return False
    return True
