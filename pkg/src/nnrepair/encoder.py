"""MIQP encodings of single-layer repair and of input-box verification.

Repair variables are the chosen layer's weights and bias, a scalar
deviation bound, per-sample node values of the repair layer and every
later layer, the outputs, ReLU indicators, and disjunct selectors.
ReLU nodes whose interval never changes sign are encoded without a binary.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .interval import BoundsTable, compute_bounds_table, propagate_bounds, widen
from .model import MiqpModel, ModelBuilder
from .network import DimensionError, Network, apply_layer_update, forward, hidden_values
from .predicate import EPS_FEAS, Predicate
from .solver.qp import QPNumericalError, qp_solve

EPS_STRICT = 1e-6
MAX_VERIFY_CASES = 64
# relative slack added to LP-derived bounds before widening
LP_MARGIN = 1e-7


@dataclass
class RepairOptions:
    delta_max: float = 1.0
    l1_weight: float = 0.0
    node_subset: Sequence[int] | None = None

    def __post_init__(self):
        if self.delta_max < 0:
            raise ValueError("delta_max must be nonnegative")
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be nonnegative")
        if self.node_subset is not None:
            self.node_subset = sorted({int(j) for j in self.node_subset})


def _relu(b: ModelBuilder, coefs: dict[int, float], const: float, lo: float, hi: float,
          name: str) -> tuple[int, int]:
    """Encode ``x = max(0, coefs . v + const)``; returns (x index, binary index or -1)."""
    if not coefs:
        v = max(0.0, const)
        return b.add_var(name, v, v), -1
    if hi <= 0.0:
        x = b.add_var(name, 0.0, 0.0)
        b.add_le(coefs, -const, "relu")
        return x, -1
    if lo >= 0.0:
        x = b.add_var(name, 0.0, hi)
        row = {x: 1.0}
        for j, v in coefs.items():
            row[j] = row.get(j, 0.0) - v
        b.add_eq(row, const, "relu")
        return x, -1
    x = b.add_var(name, 0.0, hi)
    phi = b.add_var("phi" + name[1:], binary=True)
    neg = {j: -v for j, v in coefs.items()}
    # x >= z
    b.add_ge({x: 1.0, **neg}, const, "relu")
    # x <= z - lo (1 - phi)
    b.add_le({x: 1.0, **neg, phi: -lo}, const - lo, "relu")
    # x <= hi phi
    b.add_le({x: 1.0, phi: -hi}, 0.0, "relu")
    return x, phi


def _max_slack(a_y: np.ndarray, c0: float, y_lo: np.ndarray, y_hi: np.ndarray) -> tuple[float, float]:
    top = c0 + float(np.sum(np.maximum(a_y * y_lo, a_y * y_hi)))
    bottom = c0 + float(np.sum(np.minimum(a_y * y_lo, a_y * y_hi)))
    return bottom, top


def _coef(v: tuple[float, ...], n: int) -> np.ndarray:
    if len(v) > n:
        raise DimensionError(f"predicate coefficient index {len(v) - 1} exceeds width {n}")
    out = np.zeros(n)
    out[:len(v)] = v
    return out


def _encode_predicate(b: ModelBuilder, predicate: Predicate, x0: np.ndarray, y_vars: list[int],
                      y_lo: np.ndarray, y_hi: np.ndarray, tag: str) -> list[tuple[list[int], list]]:
    """Adds Psi(y, x0) for a constant ``x0``; returns selector groups for hints."""
    n_out = len(y_vars)
    selector_groups = []
    for g, group in enumerate(predicate.active_groups(x0)):
        compiled = []  # per disjunct: list of (a_y, rhs', bottom, top)
        for d in group:
            rows = []
            for c in d.body:
                a_y = _coef(c.a_y, n_out)
                c0 = float(_coef(c.a_x, len(x0)) @ x0) - c.rhs
                bottom, top = _max_slack(a_y, c0, y_lo, y_hi)
                rows.append((a_y, -c0, bottom, top))
            compiled.append(rows)
        if any(all(top <= 0.0 for *_, top in rows) for rows in compiled):
            continue  # some disjunct holds everywhere on the output box
        possible = [rows for rows in compiled if all(bottom <= 0.0 for _, _, bottom, _ in rows)]
        if not possible:
            possible = compiled[:1]  # left to the solver to prove infeasible
        if len(possible) == 1:
            for a_y, rhs, _, _ in possible[0]:
                b.add_le({y_vars[k]: a_y[k] for k in np.flatnonzero(a_y)}, rhs, "predicate")
            continue
        sel = [b.add_var(f"z_{tag}_g{g}_d{d}", binary=True) for d in range(len(possible))]
        b.add_ge({s: 1.0 for s in sel}, 1.0, "predicate")
        for s, rows in zip(sel, possible):
            for a_y, rhs, _, top in rows:
                if top <= 0.0:
                    continue
                big_m = float(widen(0.0, top)[1])
                row = {y_vars[k]: a_y[k] for k in np.flatnonzero(a_y)}
                row[s] = big_m
                b.add_le(row, rhs + big_m, "predicate")
        selector_groups.append((sel, possible))
    return selector_groups


def encode_repair(net: Network, layer: int, inputs, targets, predicate: Predicate,
                  opts: RepairOptions | None = None, bounds: BoundsTable | None = None) -> MiqpModel:
    opts = opts or RepairOptions()
    if not 1 <= layer <= net.num_layers:
        raise IndexError(f"repair layer {layer} outside 1..{net.num_layers}")
    x_in = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.asarray(targets, dtype=float).reshape(len(x_in), -1)
    if len(x_in) == 0:
        raise ValueError("at least one repair sample is required")
    if x_in.shape[1] != net.input_dim or t.shape[1] != net.output_dim:
        raise DimensionError(f"samples have widths {x_in.shape[1]}/{t.shape[1]}, "
                             f"network expects {net.input_dim}/{net.output_dim}")
    if bounds is None:
        bounds = compute_bounds_table(net, layer, x_in, opts.delta_max, opts.node_subset)
    if (bounds.layer != layer or bounds.num_samples != len(x_in)
            or not np.isclose(bounds.delta_max, opts.delta_max, rtol=0, atol=0)):
        raise ValueError("bounds table does not match the repair layer, samples or delta_max")
    tbl = bounds.widened()

    w0, b0 = net.layer(layer)
    n_out, n_in = w0.shape
    rows = list(range(n_out)) if opts.node_subset is None else list(opts.node_subset)
    if rows and not 0 <= rows[0] <= rows[-1] < n_out:
        raise IndexError(f"node subset outside 0..{n_out - 1}")
    dm = opts.delta_max

    b = ModelBuilder()
    w_idx = -np.ones((n_out, n_in), dtype=int)
    b_idx = -np.ones(n_out, dtype=int)
    for j in rows:
        for i in range(n_in):
            w_idx[j, i] = b.add_var(f"w_l{layer}_{j}_{i}", w0[j, i] - dm, w0[j, i] + dm)
        b_idx[j] = b.add_var(f"b_l{layer}_{j}", b0[j] - dm, b0[j] + dm)
    delta = b.add_var("delta", 0.0, dm)
    b.add_linear(delta, 1.0)
    theta = [(w_idx[j, i], w0[j, i]) for j in rows for i in range(n_in)] + [(b_idx[j], b0[j]) for j in rows]
    for v, init in theta:
        b.add_le({v: 1.0, delta: -1.0}, init, "deviation")
        b.add_le({v: -1.0, delta: -1.0}, -init, "deviation")
    l1_pairs = []
    if opts.l1_weight > 0:
        for v, init in theta:
            p = b.add_var(f"{b.names[v]}_pos", 0.0, dm)
            m = b.add_var(f"{b.names[v]}_neg", 0.0, dm)
            b.add_eq({v: 1.0, p: -1.0, m: 1.0}, init, "l1")
            b.add_linear(p, opts.l1_weight)
            b.add_linear(m, opts.l1_weight)
            l1_pairs.append((p, m))

    x_prev_all = hidden_values(net, x_in, layer - 1)
    node_vars, phi_vars, y_vars, selectors = [], [], [], []
    for n in range(len(x_in)):
        x_prev = x_prev_all[n]
        exprs = []
        for j in range(n_out):
            if w_idx[j, 0] >= 0:
                coefs = {int(w_idx[j, i]): float(x_prev[i]) for i in range(n_in) if x_prev[i] != 0.0}
                coefs[int(b_idx[j])] = 1.0
                exprs.append((coefs, 0.0))
            else:
                exprs.append(({}, float(w0[j] @ x_prev + b0[j])))
        n_nodes, n_phis = [], []
        for k in range(layer, net.num_layers):
            lo, hi = tbl.bounds(k)
            xs, phis = [], []
            for j, (coefs, const) in enumerate(exprs):
                xv, ph = _relu(b, coefs, const, lo[n, j], hi[n, j], f"x_n{n}_l{k}_{j}")
                xs.append(xv)
                phis.append(ph)
            n_nodes.append(xs)
            n_phis.append(phis)
            w, bias = net.layer(k + 1)
            exprs = [({xs[i]: float(w[j, i]) for i in range(len(xs)) if w[j, i] != 0.0}, float(bias[j]))
                     for j in range(w.shape[0])]
        y_lo, y_hi = tbl.output[0][n], tbl.output[1][n]
        ys = []
        for k, (coefs, const) in enumerate(exprs):
            yv = b.add_var(f"y_n{n}_{k}", y_lo[k], y_hi[k])
            b.add_square(yv, 1.0, t[n, k])
            row = {yv: 1.0}
            for j, v in coefs.items():
                row[j] = row.get(j, 0.0) - v
            b.add_eq(row, const, "output")
            ys.append(yv)
        selectors.append(_encode_predicate(b, predicate, x_in[n], ys, y_lo, y_hi, f"n{n}"))
        node_vars.append(n_nodes)
        phi_vars.append(n_phis)
        y_vars.append(ys)

    meta = {"kind": "repair", "layer": layer, "w_init": w0, "b_init": b0, "w_idx": w_idx,
            "b_idx": b_idx, "delta": delta, "theta": theta, "l1_pairs": l1_pairs, "node_vars": node_vars,
            "phi_vars": phi_vars, "y_vars": y_vars, "selectors": selectors, "inputs": x_in,
            "targets": t, "network": net, "predicate": predicate, "options": opts,
            # the start hint keeps the original activation pattern but only guesses the disjuncts
            "start_free": [v for groups in selectors for sel, _ in groups for v in sel]}
    model = b.build(meta)
    start = assignment_for(model, w0, b0)
    return MiqpModel(**{**{f: getattr(model, f) for f in model.__dataclass_fields__}, "start": start})


def assignment_for(model: MiqpModel, weights, bias) -> np.ndarray:
    """Full variable vector induced by setting the repair layer to ``(weights, bias)``.

    Node values come from the exact forward pass of the updated network;
    selectors pick the disjunct with the smallest worst slack.
    """
    meta = model.meta
    w = np.asarray(weights, dtype=float)
    bias = np.asarray(bias, dtype=float)
    x = np.zeros(model.num_vars)
    w_idx, b_idx = meta["w_idx"], meta["b_idx"]
    mask = w_idx >= 0
    x[w_idx[mask]] = w[mask]
    x[b_idx[b_idx >= 0]] = bias[b_idx >= 0]
    dw = np.abs(w - meta["w_init"])[mask]
    db = np.abs(bias - meta["b_init"])[b_idx >= 0]
    x[meta["delta"]] = max(float(np.max(dw, initial=0.0)), float(np.max(db, initial=0.0)))
    for (p, m), (v, init) in zip(meta["l1_pairs"], meta["theta"]):
        d = x[v] - init
        x[p], x[m] = max(d, 0.0), max(-d, 0.0)
    layer = meta["layer"]
    net = apply_layer_update(meta["network"], layer, w, bias)
    for n, x0 in enumerate(meta["inputs"]):
        act = forward(net, x0)
        for k, (xs, phis) in enumerate(zip(meta["node_vars"][n], meta["phi_vars"][n])):
            vals = act.values[layer + k]
            pre = act.preactivations[layer + k - 1]
            for j, (xv, ph) in enumerate(zip(xs, phis)):
                x[xv] = vals[j]
                if ph >= 0:
                    x[ph] = 1.0 if pre[j] > 0 else 0.0
        y = act.output
        x[meta["y_vars"][n]] = y
        for sel, possible in meta["selectors"][n]:
            worst = [max(float(a_y @ y) - rhs for a_y, rhs, _, _ in rows) for rows in possible]
            x[sel] = 0.0
            x[sel[int(np.argmin(worst))]] = 1.0
    return x


def decode(model: MiqpModel, assignment) -> tuple[np.ndarray, np.ndarray]:
    """Repair-layer weights and bias encoded in ``assignment``."""
    a = np.asarray(assignment, dtype=float)
    if a.shape != (model.num_vars,):
        raise ValueError(f"assignment has shape {a.shape}, model has {model.num_vars} variables")
    meta = model.meta
    w = meta["w_init"].copy()
    bias = meta["b_init"].copy()
    mask = meta["w_idx"] >= 0
    w[mask] = a[meta["w_idx"][mask]]
    bmask = meta["b_idx"] >= 0
    bias[bmask] = a[meta["b_idx"][bmask]]
    return w, bias


def decoded_network(model: MiqpModel, assignment) -> Network:
    w, bias = decode(model, assignment)
    return apply_layer_update(model.meta["network"], model.meta["layer"], w, bias)


def _lp_tighten(b: ModelBuilder, exprs, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shrink interval bounds of unstable nodes with the LP relaxation built so far.

    LP optima are moved outward by a solver-tolerance margin before use, so
    the result still contains every reachable pre-activation.
    """
    lo, hi = lo.copy(), hi.copy()
    relax = b.build()
    for j, (coefs, const) in enumerate(exprs):
        if not coefs or lo[j] >= 0.0 or hi[j] <= 0.0:
            continue
        c = np.zeros(relax.num_vars)
        for v, a in coefs.items():
            c[v] = a
        for sign in (1.0, -1.0):
            try:
                res = qp_solve(None, sign * c, relax.a_ub, relax.b_ub, relax.a_eq, relax.b_eq, relax.lb, relax.ub)
            except QPNumericalError:
                continue
            if not res.ok:
                continue
            val = sign * res.objective + const
            margin = LP_MARGIN * (1.0 + abs(val))
            if sign > 0:
                lo[j] = max(lo[j], val - margin)
            else:
                hi[j] = min(hi[j], val + margin)
    return lo, hi


def negation_cases(predicate: Predicate) -> list[tuple[int, tuple, tuple]]:
    """All ways to violate one guard group: (group index, guard, one body constraint per disjunct)."""
    cases = []
    for g, (guard, ds) in enumerate(predicate.groups):
        for choice in itertools.product(*[d.body for d in ds]):
            cases.append((g, guard, choice))
            if len(cases) > MAX_VERIFY_CASES:
                raise ValueError(f"predicate negation expands to more than {MAX_VERIFY_CASES} cases")
    return cases


def encode_verification(net: Network, box_lo, box_hi, predicate: Predicate,
                        tighten: bool = True) -> list[MiqpModel]:
    """One feasibility model per negation case; a case is feasible iff some ``x0`` in the
    box violates the predicate in that way.

    With ``tighten`` the big-M bounds of hidden layers after the first come
    from LP relaxations instead of plain interval propagation.
    """
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    if lo.shape != (net.input_dim,) or hi.shape != lo.shape:
        raise DimensionError(f"box must have {net.input_dim} coordinates")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("input box must be bounded")
    if np.any(lo > hi):
        raise ValueError("input box has lo > hi")
    cases = negation_cases(predicate)
    b = ModelBuilder()
    x0 = [b.add_var(f"x0_{i}", lo[i], hi[i]) for i in range(len(lo))]
    exprs = [({x0[i]: float(w[j, i]) for i in range(len(x0)) if w[j, i] != 0.0}, float(bias[j]))
             for w, bias in [net.layer(1)] for j in range(w.shape[0])]
    phis = []
    # bounds on the previous layer's outputs, unwidened
    v_lo, v_hi = lo, hi
    for k in range(1, net.num_layers):
        l_lo, l_hi = propagate_bounds(v_lo, v_hi, *net.layer(k))
        if tighten and k > 1:
            l_lo, l_hi = _lp_tighten(b, exprs, l_lo, l_hi)
        v_lo, v_hi = np.maximum(l_lo, 0.0), np.maximum(l_hi, 0.0)
        l_lo, l_hi = widen(l_lo, l_hi)
        xs = []
        for j, (coefs, const) in enumerate(exprs):
            xv, ph = _relu(b, coefs, const, l_lo[j], l_hi[j], f"x_l{k}_{j}")
            xs.append(xv)
            if ph >= 0:
                phis.append(ph)
        w, bias = net.layer(k + 1)
        exprs = [({xs[i]: float(w[j, i]) for i in range(len(xs)) if w[j, i] != 0.0}, float(bias[j]))
                 for j in range(w.shape[0])]
    y_lo, y_hi = widen(*propagate_bounds(v_lo, v_hi, *net.layer(net.num_layers)))
    ys = []
    for k, (coefs, const) in enumerate(exprs):
        yv = b.add_var(f"y_{k}", y_lo[k], y_hi[k])
        row = {yv: 1.0}
        for j, v in coefs.items():
            row[j] = row.get(j, 0.0) - v
        b.add_eq(row, const, "output")
        ys.append(yv)
    base = b.build({"kind": "verification", "x0_vars": x0, "y_vars": ys, "phi_vars": phis})

    models = []
    n_in, n_out = len(x0), len(ys)
    for g, guard, choice in cases:
        rows, rhs = [], []
        for c in guard:
            a_x = _coef(c.a_x, n_in)
            rows.append({x0[i]: a_x[i] for i in np.flatnonzero(a_x)})
            rhs.append(c.rhs + EPS_FEAS)
        m = base.add_rows(rows, rhs, "guard") if rows else base
        rows, rhs = [], []
        for c in choice:
            a_x = _coef(c.a_x, n_in)
            a_y = _coef(c.a_y, n_out)
            row = {x0[i]: -a_x[i] for i in np.flatnonzero(a_x)}
            row.update({ys[k]: -a_y[k] for k in np.flatnonzero(a_y)})
            rows.append(row)
            rhs.append(-(c.rhs + EPS_FEAS + EPS_STRICT))
        m = m.add_rows(rows, rhs, "negation")
        m.meta.update({"case": (g, choice)})
        models.append(m)
    return models


def max_violation_model(case: MiqpModel, start=None) -> MiqpModel:
    """Copy of a verification case that maximizes its smallest negation slack.

    Adds one continuous variable ``t`` with ``t <= slack`` for every
    negation row and minimizes ``-t``.  The feasible set in the original
    variables is unchanged, so any solution is still a witness.
    """
    rows = np.flatnonzero(np.array(case.ub_kinds) == "negation")
    n = case.num_vars
    a_neg = case.a_ub[rows]

    def pad(a):
        return sp.hstack([a, sp.csr_matrix((a.shape[0], 1))], format="csr")

    extra = sp.hstack([a_neg, sp.csr_matrix(np.ones((len(rows), 1)))], format="csr")
    x0 = None
    if start is not None:
        start = np.asarray(start, dtype=float)
        slack = case.b_ub[rows] - a_neg @ start
        x0 = np.append(start, max(float(slack.min(initial=np.inf)), 0.0))
    return MiqpModel(
        names=case.names + ("t_slack",),
        lb=np.append(case.lb, 0.0),
        ub=np.append(case.ub, np.inf),
        binary=np.append(case.binary, False),
        hessian=sp.csr_matrix((n + 1, n + 1)),
        linear=np.append(np.zeros(n), -1.0),
        constant=0.0,
        a_ub=sp.vstack([pad(case.a_ub), extra], format="csr"),
        b_ub=np.concatenate([case.b_ub, case.b_ub[rows]]),
        ub_kinds=case.ub_kinds + ("strongest",) * len(rows),
        a_eq=pad(case.a_eq),
        b_eq=case.b_eq,
        eq_kinds=case.eq_kinds,
        meta={**case.meta, "slack_var": n},
        start=x0,
    )
