"""Safety predicates as guarded disjunctions of affine constraints.

A constraint reads ``a_x . x0 + a_y . y <= rhs``.  Coefficient vectors may be
shorter than the data they are applied to; missing entries are zero.
Disjuncts sharing a guard form a group; the predicate holds when every group
whose guard is satisfied by ``x0`` has at least one disjunct whose body holds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .network import DimensionError

EPS_FEAS = 1e-6


def _trim(v) -> tuple[float, ...]:
    v = [float(c) for c in v]
    while v and v[-1] == 0.0:
        v.pop()
    return tuple(v)


def _pad(coef: tuple[float, ...], n: int, what: str) -> np.ndarray:
    if len(coef) > n:
        raise DimensionError(f"{what} coefficients reference index {len(coef) - 1}, data has width {n}")
    out = np.zeros(n)
    out[:len(coef)] = coef
    return out


@dataclass(frozen=True)
class AffineConstraint:
    a_x: tuple[float, ...] = ()
    a_y: tuple[float, ...] = ()
    rhs: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a_x", _trim(self.a_x))
        object.__setattr__(self, "a_y", _trim(self.a_y))
        object.__setattr__(self, "rhs", float(self.rhs))
        coefs = self.a_x + self.a_y + (self.rhs,)
        if not all(np.isfinite(c) for c in coefs):
            raise ValueError("constraint coefficients must be finite")
        if not self.a_x and not self.a_y:
            raise ValueError("constraint needs at least one nonzero coefficient")

    def slack(self, x0: np.ndarray, y: np.ndarray) -> float:
        """``a . v - rhs``; positive means violated."""
        value = -self.rhs
        if self.a_x:
            value += float(_pad(self.a_x, len(x0), "a_x") @ x0)
        if self.a_y:
            value += float(_pad(self.a_y, len(y), "a_y") @ y)
        return value

    def to_dict(self, guard: bool = False) -> dict:
        d = {"a_x": list(self.a_x)}
        if not guard:
            d["a_y"] = list(self.a_y)
        d["rhs"] = self.rhs
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AffineConstraint":
        return cls(tuple(d.get("a_x", ())), tuple(d.get("a_y", ())), d["rhs"])


@dataclass(frozen=True)
class Disjunct:
    body: tuple[AffineConstraint, ...]
    guard: tuple[AffineConstraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        object.__setattr__(self, "guard", tuple(self.guard))
        if not self.body:
            raise ValueError("disjunct body must not be empty")
        if any(c.a_y for c in self.guard):
            raise ValueError("guards may only reference inputs")


@dataclass(frozen=True)
class Predicate:
    disjuncts: tuple[Disjunct, ...]
    groups: tuple[tuple[tuple[AffineConstraint, ...], tuple[Disjunct, ...]], ...] = field(
        init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "disjuncts", tuple(self.disjuncts))
        if not self.disjuncts:
            raise ValueError("predicate needs at least one disjunct")
        grouped: dict[tuple, list[Disjunct]] = {}
        for d in self.disjuncts:
            grouped.setdefault(d.guard, []).append(d)
        object.__setattr__(self, "groups", tuple((g, tuple(ds)) for g, ds in grouped.items()))

    @property
    def input_width(self) -> int:
        """Smallest input width the coefficients fit into."""
        cons = [c for d in self.disjuncts for c in d.guard + d.body]
        return max(len(c.a_x) for c in cons)

    @property
    def output_width(self) -> int:
        return max(len(c.a_y) for d in self.disjuncts for c in d.body)

    def active_groups(self, x0) -> list[tuple[Disjunct, ...]]:
        x0 = np.asarray(x0, dtype=float)
        empty_y = np.zeros(0)
        return [ds for guard, ds in self.groups
                if all(c.slack(x0, empty_y) <= EPS_FEAS for c in guard)]

    def to_dict(self) -> dict:
        return {"disjuncts": [
            {"guard": [c.to_dict(guard=True) for c in d.guard],
             "body": [c.to_dict() for c in d.body]} for d in self.disjuncts]}

    @classmethod
    def from_dict(cls, data: dict) -> "Predicate":
        if not isinstance(data, dict) or "disjuncts" not in data:
            raise ValueError("predicate JSON needs a 'disjuncts' list")
        return cls(tuple(
            Disjunct(tuple(AffineConstraint.from_dict(c) for c in d["body"]),
                     tuple(AffineConstraint.from_dict(c) for c in d.get("guard", ())))
            for d in data["disjuncts"]))


def _check_dims(p: Predicate, x0: np.ndarray, y: np.ndarray):
    if x0.ndim != 1 or y.ndim != 1:
        raise DimensionError("x0 and y must be vectors")
    if p.input_width > len(x0) or p.output_width > len(y):
        raise DimensionError(
            f"predicate needs input width >= {p.input_width} and output width >= {p.output_width}, "
            f"got {len(x0)} and {len(y)}")


def _body_slack(d: Disjunct, x0, y) -> float:
    return max(c.slack(x0, y) for c in d.body)


def evaluate(p: Predicate, x0, y, eps: float = EPS_FEAS) -> bool:
    x0 = np.asarray(x0, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_dims(p, x0, y)
    return all(any(_body_slack(d, x0, y) <= eps for d in group)
               for group in p.active_groups(x0))


def violation_degree(p: Predicate, x0, y) -> float:
    """Largest over active groups of the smallest worst-case slack among the group's disjuncts."""
    x0 = np.asarray(x0, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_dims(p, x0, y)
    degree = 0.0
    for group in p.active_groups(x0):
        degree = max(degree, min(max(0.0, _body_slack(d, x0, y)) for d in group))
    return degree


def evaluate_batch(p: Predicate, inputs, outputs) -> np.ndarray:
    inputs = np.atleast_2d(inputs)
    outputs = np.asarray(outputs, dtype=float).reshape(len(inputs), -1)
    return np.array([evaluate(p, x, y) for x, y in zip(inputs, outputs)], dtype=bool)


def degree_batch(p: Predicate, inputs, outputs) -> np.ndarray:
    inputs = np.atleast_2d(inputs)
    outputs = np.asarray(outputs, dtype=float).reshape(len(inputs), -1)
    return np.array([violation_degree(p, x, y) for x, y in zip(inputs, outputs)])


def _unit(index: int, sign: float = 1.0) -> tuple[float, ...]:
    v = [0.0] * (index + 1)
    v[index] = sign
    return tuple(v)


def make_global_bound(y_min, y_max) -> Predicate:
    """``y_min <= y <= y_max`` coordinate-wise; scalars apply to a single output."""
    lo = np.atleast_1d(np.asarray(y_min, dtype=float))
    hi = np.atleast_1d(np.asarray(y_max, dtype=float))
    if lo.shape != hi.shape:
        raise ValueError("y_min and y_max must have the same shape")
    if np.any(lo > hi):
        raise ValueError(f"inverted bounds: y_min {lo} > y_max {hi}")
    body = []
    for k, (a, b) in enumerate(zip(lo, hi)):
        body.append(AffineConstraint(a_y=_unit(k), rhs=b))
        body.append(AffineConstraint(a_y=_unit(k, -1.0), rhs=-a))
    return Predicate((Disjunct(tuple(body)),))


def make_rate_bound(prev_output_index: int, delta_max: float, output_index: int = 0) -> Predicate:
    """``|y[output_index] - x0[prev_output_index]| <= delta_max``."""
    if prev_output_index < 0 or output_index < 0:
        raise IndexError("indices must be nonnegative")
    if not delta_max > 0:
        raise ValueError("delta_max must be positive")
    up = AffineConstraint(_unit(prev_output_index, -1.0), _unit(output_index), delta_max)
    down = AffineConstraint(_unit(prev_output_index), _unit(output_index, -1.0), delta_max)
    return Predicate((Disjunct((up, down)),))


def make_avoid_box(guard_index: int, guard_interval: Sequence[float], y_low: float, y_high: float,
                   output_index: int = 0) -> Predicate:
    """``x0[g] in [a, b]  =>  y <= y_low  or  y >= y_high``."""
    a, b = (float(v) for v in guard_interval)
    if guard_index < 0 or output_index < 0:
        raise IndexError("indices must be nonnegative")
    if not a <= b:
        raise ValueError(f"malformed guard interval [{a}, {b}]")
    if not y_low < y_high:
        raise ValueError(f"malformed avoided output range [{y_low}, {y_high}]")
    guard = (AffineConstraint(a_x=_unit(guard_index), rhs=b),
             AffineConstraint(a_x=_unit(guard_index, -1.0), rhs=-a))
    below = Disjunct((AffineConstraint(a_y=_unit(output_index), rhs=y_low),), guard)
    above = Disjunct((AffineConstraint(a_y=_unit(output_index, -1.0), rhs=-y_high),), guard)
    return Predicate((below, above))


def conjunction(predicates: Iterable[Predicate]) -> Predicate:
    """Conjunction of predicates with disjoint guard groups."""
    disjuncts: list[Disjunct] = []
    for p in predicates:
        disjuncts.extend(p.disjuncts)
    return Predicate(tuple(disjuncts))


def from_spec(spec) -> Predicate:
    """Build a predicate from a JSON object, a constructor shorthand, or a file path.

    Shorthands: ``{"global": {"y_min": .., "y_max": ..}}``,
    ``{"rate": {"index": .., "delta": .., "output_index": 0}}``,
    ``{"avoid_box": {"guard_index": .., "guard_interval": [a, b], "y_low": .., "y_high": ..}}``.
    """
    if isinstance(spec, (str, Path)):
        return from_spec(json.loads(Path(spec).read_text()))
    if "disjuncts" in spec:
        return Predicate.from_dict(spec)
    if "global" in spec:
        g = spec["global"]
        return make_global_bound(g["y_min"], g["y_max"])
    if "rate" in spec:
        r = spec["rate"]
        return make_rate_bound(r["index"], r["delta"], r.get("output_index", 0))
    if "avoid_box" in spec:
        a = spec["avoid_box"]
        return make_avoid_box(a["guard_index"], a["guard_interval"], a["y_low"], a["y_high"],
                              a.get("output_index", 0))
    raise ValueError(f"unrecognised predicate spec with keys {sorted(spec)}")


def save_predicate(p: Predicate, path) -> None:
    Path(path).write_text(json.dumps(p.to_dict(), indent=1) + "\n")


def load_predicate(path) -> Predicate:
    return from_spec(Path(path))
