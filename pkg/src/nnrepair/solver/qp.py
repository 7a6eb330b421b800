"""Convex QP relaxation kernel (interior point via Clarabel).

Fixed variables (``lb == ub``) are substituted out before the call, rows
left without free variables are checked directly, and the remaining
variable bounds become inequality rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_ROW_TOL = 1e-9


class QPNumericalError(RuntimeError):
    """The kernel stopped without a solution or an infeasibility certificate."""


@dataclass
class QPResult:
    status: str
    x: np.ndarray | None = None
    objective: float = np.inf
    dual_ub: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    primal_residual: float = np.nan
    kkt_residual: float = np.nan
    # for INFEASIBLE: -b'z / |z|_1 of the Farkas ray, positive when certified
    certificate: float = np.nan
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _settings(time_limit: float | None, attempt: int):
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.max_iter = 200 if attempt == 0 else 400
    s.tol_gap_abs = 1e-9
    s.tol_gap_rel = 1e-9
    s.tol_feas = 1e-9
    s.tol_ktratio = 1e-7
    if attempt == 1:
        s.static_regularization_constant = 1e-7
        s.iterative_refinement_max_iter = 50
    elif attempt == 2:
        s.equilibrate_enable = False
        s.presolve_enable = False
    if time_limit is not None:
        s.time_limit = max(float(time_limit), 1e-3)
    return s


def qp_solve(hessian, linear, a_ub=None, b_ub=None, a_eq=None, b_eq=None,
             lb=None, ub=None, constant: float = 0.0, time_limit: float | None = None) -> QPResult:
    """Minimise ``0.5 x'Hx + q'x + c`` over ``A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub``.

    ``hessian`` must be symmetric positive semidefinite.  Raises
    :class:`QPNumericalError` when the interior-point method fails on every
    retry setting.
    """
    q = np.asarray(linear, dtype=float)
    n = q.size
    h = sp.csr_matrix(hessian) if hessian is not None else sp.csr_matrix((n, n))
    a_ub = sp.csr_matrix((0, n)) if a_ub is None else sp.csr_matrix(a_ub)
    a_eq = sp.csr_matrix((0, n)) if a_eq is None else sp.csr_matrix(a_eq)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)

    if np.any(lb > ub + _ROW_TOL):
        return QPResult(INFEASIBLE, certificate=float(np.max(lb - ub)))

    fixed = np.isfinite(lb) & (ub - lb <= 0.0)
    free = np.flatnonzero(~fixed)
    fix_idx = np.flatnonzero(fixed)
    x_fix = lb[fix_idx]

    h_free = h[free][:, free]
    q_r = q[free] + (h[free][:, fix_idx] @ x_fix if fix_idx.size else 0.0)

    aub_r = a_ub[:, free]
    bub_r = b_ub - (a_ub[:, fix_idx] @ x_fix if fix_idx.size else 0.0)
    aeq_r = a_eq[:, free]
    beq_r = b_eq - (a_eq[:, fix_idx] @ x_fix if fix_idx.size else 0.0)
    aub_r.eliminate_zeros()
    aeq_r.eliminate_zeros()

    ub_live = np.diff(aub_r.indptr) > 0
    eq_live = np.diff(aeq_r.indptr) > 0
    dead_ub = bub_r[~ub_live]
    dead_eq = beq_r[~eq_live]
    scale = 1.0 + np.abs(b_ub[~ub_live]) if dead_ub.size else 1.0
    if dead_ub.size and np.any(dead_ub < -_ROW_TOL * scale):
        return QPResult(INFEASIBLE, certificate=float(-dead_ub.min()))
    if dead_eq.size and np.any(np.abs(dead_eq) > _ROW_TOL * (1.0 + np.abs(b_eq[~eq_live]))):
        return QPResult(INFEASIBLE, certificate=float(np.abs(dead_eq).max()))

    lb_f, ub_f = lb[free], ub[free]
    has_ub = np.flatnonzero(np.isfinite(ub_f))
    has_lb = np.flatnonzero(np.isfinite(lb_f))
    nf = free.size
    bound_rows = sp.vstack([
        sp.csr_matrix((np.ones(has_ub.size), (np.arange(has_ub.size), has_ub)), shape=(has_ub.size, nf)),
        sp.csr_matrix((-np.ones(has_lb.size), (np.arange(has_lb.size), has_lb)), shape=(has_lb.size, nf)),
    ])
    a_eq_live = aeq_r[eq_live]
    a_ub_live = aub_r[ub_live]
    a_all = sp.vstack([a_eq_live, a_ub_live, bound_rows], format="csc")
    b_all = np.concatenate([beq_r[eq_live], bub_r[ub_live], ub_f[has_ub], -lb_f[has_lb]])
    m_eq = a_eq_live.shape[0]
    m_in = a_all.shape[0] - m_eq

    x = np.empty(n)
    x[fix_idx] = x_fix
    if nf == 0:
        x_free = np.zeros(0)
        z = np.zeros(0)
        iterations = 0
    else:
        cones = []
        if m_eq:
            cones.append(clarabel.ZeroConeT(m_eq))
        if m_in:
            cones.append(clarabel.NonnegativeConeT(m_in))
        p = sp.triu(h_free, format="csc")
        sol = None
        for attempt in range(3):
            solver = clarabel.DefaultSolver(p, q_r, a_all, b_all, cones, _settings(time_limit, attempt))
            sol = solver.solve()
            status = str(sol.status)
            if status in ("Solved", "AlmostSolved", "PrimalInfeasible", "AlmostPrimalInfeasible",
                          "DualInfeasible", "AlmostDualInfeasible", "MaxTime"):
                break
        status = str(sol.status)
        iterations = int(sol.iterations)
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            z = np.asarray(sol.z)
            cert = -float(b_all @ z) / max(float(np.abs(z).sum()), 1e-300)
            return QPResult(INFEASIBLE, certificate=cert, iterations=iterations)
        if status in ("DualInfeasible", "AlmostDualInfeasible"):
            return QPResult(UNBOUNDED, objective=-np.inf, iterations=iterations)
        if status not in ("Solved", "AlmostSolved"):
            raise QPNumericalError(f"QP kernel stopped with status {status}")
        x_free = np.asarray(sol.x)
        z = np.asarray(sol.z)
    x[free] = x_free

    # residuals on the reduced problem, in the kernel's sign convention
    if nf:
        stat = h_free @ x_free + q_r + a_all.T @ z
        s = b_all - a_all @ x_free
        comp = np.abs(s[m_eq:] * z[m_eq:]) if m_in else np.zeros(1)
        kkt = float(max(np.max(np.abs(stat), initial=0.0), np.max(comp, initial=0.0)))
    else:
        kkt = 0.0
    primal = _primal_residual(x, a_ub, b_ub, a_eq, b_eq, lb, ub)
    obj = float(0.5 * x @ (h @ x) + q @ x + constant)

    dual_ub = np.zeros(b_ub.size)
    dual_eq = np.zeros(b_eq.size)
    if nf:
        dual_eq[np.flatnonzero(eq_live)] = z[:m_eq]
        dual_ub[np.flatnonzero(ub_live)] = z[m_eq:m_eq + a_ub_live.shape[0]]
    return QPResult(OPTIMAL, x, obj, dual_ub, dual_eq, primal, kkt, iterations=iterations)


def _primal_residual(x, a_ub, b_ub, a_eq, b_eq, lb, ub) -> float:
    worst = 0.0
    if b_ub.size:
        worst = max(worst, float(np.max(a_ub @ x - b_ub)))
    if b_eq.size:
        worst = max(worst, float(np.max(np.abs(a_eq @ x - b_eq))))
    worst = max(worst, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
    return max(worst, 0.0)


def solve_relaxation(model, lb=None, ub=None, time_limit: float | None = None) -> QPResult:
    """Continuous relaxation of a :class:`~nnrepair.model.MiqpModel` under the given bounds."""
    return qp_solve(model.hessian, model.linear, model.a_ub, model.b_ub, model.a_eq, model.b_eq,
                    model.lb if lb is None else lb, model.ub if ub is None else ub,
                    model.constant, time_limit=time_limit)
