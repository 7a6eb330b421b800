"""Mixed-integer convex QP container.

    minimize    0.5 x'Hx + q'x + c
    subject to  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub,
                x_j in {0, 1} for binary j

Rows carry a short kind tag ("relu", "output", "predicate", ...) so callers
can check subsets of the constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class MiqpModel:
    names: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    hessian: sp.csr_matrix
    linear: np.ndarray
    constant: float
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    ub_kinds: tuple[str, ...]
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_kinds: tuple[str, ...]
    # free-form encoder metadata (decode map, hints); ignored by the solver
    meta: dict = field(default_factory=dict, compare=False)
    start: np.ndarray | None = None

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.binary)

    @property
    def num_binaries(self) -> int:
        return int(self.binary.sum())

    def index(self, name: str) -> int:
        return self.meta.setdefault("_index", {n: i for i, n in enumerate(self.names)})[name]

    def objective_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.hessian @ x) + self.linear @ x + self.constant)

    def violation(self, x, kinds: Iterable[str] | None = None, bounds: bool = True,
                  integrality: bool = True) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        keep = None if kinds is None else set(kinds)
        worst = 0.0
        if self.b_ub.size:
            r = self.a_ub @ x - self.b_ub
            if keep is not None:
                r = r[[k in keep for k in self.ub_kinds]]
            if r.size:
                worst = max(worst, float(r.max()))
        if self.b_eq.size:
            r = np.abs(self.a_eq @ x - self.b_eq)
            if keep is not None:
                r = r[[k in keep for k in self.eq_kinds]]
            if r.size:
                worst = max(worst, float(r.max()))
        if bounds:
            worst = max(worst, float(np.max(self.lb - x, initial=0.0)),
                        float(np.max(x - self.ub, initial=0.0)))
        if integrality and self.binary.any():
            xb = x[self.binary]
            worst = max(worst, float(np.max(np.minimum(np.abs(xb), np.abs(xb - 1.0)))))
        return worst

    def with_bounds(self, lb=None, ub=None) -> "MiqpModel":
        return _replace(self, lb=self.lb if lb is None else np.asarray(lb, dtype=float),
                        ub=self.ub if ub is None else np.asarray(ub, dtype=float))

    def fix(self, values: dict[int, float]) -> "MiqpModel":
        lb, ub = self.lb.copy(), self.ub.copy()
        for j, v in values.items():
            lb[j] = ub[j] = v
        return self.with_bounds(lb, ub)

    def add_rows(self, rows: Sequence[dict[int, float]], rhs: Sequence[float], kind: str) -> "MiqpModel":
        """Copy with extra ``<=`` rows."""
        data, ri, ci = [], [], []
        for r, row in enumerate(rows):
            for j, v in row.items():
                ri.append(r)
                ci.append(j)
                data.append(v)
        extra = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), self.num_vars))
        return _replace(self, a_ub=sp.vstack([self.a_ub, extra], format="csr"),
                        b_ub=np.concatenate([self.b_ub, np.asarray(rhs, dtype=float)]),
                        ub_kinds=self.ub_kinds + (kind,) * len(rows))

    def without_objective(self) -> "MiqpModel":
        n = self.num_vars
        return _replace(self, hessian=sp.csr_matrix((n, n)), linear=np.zeros(n), constant=0.0)


def _replace(model: MiqpModel, **changes) -> MiqpModel:
    fields = {f: getattr(model, f) for f in model.__dataclass_fields__}
    fields.update(changes)
    fields["meta"] = {k: v for k, v in model.meta.items() if k != "_index"}
    return MiqpModel(**fields)


class ModelBuilder:
    """Incremental construction of a :class:`MiqpModel`."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self._quad: dict[tuple[int, int], float] = {}
        self._lin: dict[int, float] = {}
        self.constant = 0.0
        self._ub_rows: list[tuple[dict[int, float], float, str]] = []
        self._eq_rows: list[tuple[dict[int, float], float, str]] = []

    def add_var(self, name: str, lb: float = -np.inf, ub: float = np.inf, binary: bool = False) -> int:
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(binary)
        return len(self.names) - 1

    def add_le(self, coefs: dict[int, float], rhs: float, kind: str) -> None:
        self._ub_rows.append((coefs, float(rhs), kind))

    def add_ge(self, coefs: dict[int, float], rhs: float, kind: str) -> None:
        self._ub_rows.append(({j: -v for j, v in coefs.items()}, -float(rhs), kind))

    def add_eq(self, coefs: dict[int, float], rhs: float, kind: str) -> None:
        self._eq_rows.append((coefs, float(rhs), kind))

    def add_square(self, j: int, weight: float = 1.0, target: float = 0.0) -> None:
        """Adds ``weight * (x_j - target)^2`` to the objective."""
        self._quad[(j, j)] = self._quad.get((j, j), 0.0) + 2.0 * weight
        self._lin[j] = self._lin.get(j, 0.0) - 2.0 * weight * target
        self.constant += weight * target * target

    def add_linear(self, j: int, coef: float) -> None:
        self._lin[j] = self._lin.get(j, 0.0) + coef

    @staticmethod
    def _matrix(rows, n):
        data, ri, ci = [], [], []
        for r, (coefs, _, _) in enumerate(rows):
            for j, v in coefs.items():
                if v != 0.0:
                    ri.append(r)
                    ci.append(j)
                    data.append(v)
        a = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
        return a, np.array([r[1] for r in rows], dtype=float), tuple(r[2] for r in rows)

    def build(self, meta: dict | None = None, start=None) -> MiqpModel:
        n = len(self.names)
        if self._quad:
            keys = list(self._quad)
            h = sp.csr_matrix(([self._quad[k] for k in keys],
                               ([k[0] for k in keys], [k[1] for k in keys])), shape=(n, n))
        else:
            h = sp.csr_matrix((n, n))
        q = np.zeros(n)
        for j, v in self._lin.items():
            q[j] = v
        a_ub, b_ub, ub_kinds = self._matrix(self._ub_rows, n)
        a_eq, b_eq, eq_kinds = self._matrix(self._eq_rows, n)
        return MiqpModel(tuple(self.names), np.array(self.lb), np.array(self.ub),
                         np.array(self.binary, dtype=bool), h, q, float(self.constant),
                         a_ub, b_ub, ub_kinds, a_eq, b_eq, eq_kinds, meta or {},
                         None if start is None else np.asarray(start, dtype=float))


def _lp_name(name: str) -> str:
    # LP readers reject brackets and a few operators in identifiers
    return "".join(c if c.isalnum() or c in "_." else "_" for c in name)


def _lp_terms(coefs: dict[int, float] | Iterable[tuple[int, float]], names) -> str:
    items = coefs.items() if isinstance(coefs, dict) else coefs
    out = []
    for j, v in items:
        if v == 0.0:
            continue
        sign = "-" if v < 0 else "+"
        out.append(f"{sign} {abs(v):.17g} {names[j]}")
    if not out:
        return "0"
    text = " ".join(out)
    return text[2:] if text.startswith("+ ") else text


def write_lp(model: MiqpModel, path=None) -> str:
    """Serialise ``model`` in CPLEX LP format; returns the text and writes it when ``path`` is set."""
    names = [_lp_name(n) for n in model.names]
    lines = [r"\ generated by nnrepair", "Minimize"]
    obj = _lp_terms({j: v for j, v in enumerate(model.linear)}, names)
    h = sp.coo_matrix(model.hessian)
    quad = []
    for i, j, v in zip(h.row, h.col, h.data):
        if v == 0.0 or i > j:
            continue
        coef = v if i == j else 2.0 * v
        term = f"{names[i]} ^ 2" if i == j else f"{names[i]} * {names[j]}"
        quad.append(f"{'-' if coef < 0 else '+'} {abs(coef):.17g} {term}")
    text = f" obj: {obj}"
    if quad:
        text += " + [ " + " ".join(quad).lstrip("+ ") + " ] / 2"
    if model.constant:
        text += f" {'-' if model.constant < 0 else '+'} {abs(model.constant):.17g}"
    lines.append(text)
    lines.append("Subject To")
    for prefix, a, b, kinds, sense in (("u", model.a_ub, model.b_ub, model.ub_kinds, "<="),
                                       ("e", model.a_eq, model.b_eq, model.eq_kinds, "=")):
        a = sp.csr_matrix(a)
        for r in range(a.shape[0]):
            row = a.indices[a.indptr[r]:a.indptr[r + 1]]
            vals = a.data[a.indptr[r]:a.indptr[r + 1]]
            lines.append(f" {kinds[r]}_{prefix}{r}: {_lp_terms(zip(row, vals), names)} {sense} {b[r]:.17g}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        if model.binary[j] and lo == 0.0 and hi == 1.0:
            continue
        if lo == hi:
            lines.append(f" {name} = {lo:.17g}")
        elif np.isinf(lo) and np.isinf(hi):
            lines.append(f" {name} free")
        else:
            lo_s = "-inf" if np.isinf(lo) else f"{lo:.17g}"
            hi_s = "+inf" if np.isinf(hi) else f"{hi:.17g}"
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
    bins = [names[j] for j in model.binary_indices]
    if bins:
        lines.append("Binaries")
        lines.extend(f" {n}" for n in bins)
    lines.append("End")
    out = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(out)
    return out
