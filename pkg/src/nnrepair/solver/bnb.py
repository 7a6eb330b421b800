"""Branch-and-bound for mixed-binary convex QPs.

Nodes are explored best-first by relaxation bound (ties by insertion order);
feasibility checks explore depth-first.  Every candidate incumbent is
re-solved with its binaries snapped to {0, 1} before acceptance.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..model import MiqpModel
from .qp import OPTIMAL, UNBOUNDED, QPNumericalError, QPResult, solve_relaxation

log = logging.getLogger(__name__)

# result statuses
OPTIMAL_STATUS = "Optimal"
FEASIBLE_TIME_LIMIT = "FeasibleTimeLimit"
INFEASIBLE = "Infeasible"
INFEASIBLE_OR_UNBOUNDED = "InfeasibleOrUnbounded"
TIME_LIMIT = "TimeLimit"  # limit reached without an incumbent

MOST_FRACTIONAL = "most_fractional"
PSEUDO_COST = "pseudo_cost"


@dataclass
class SolveParams:
    time_limit_s: float = 600.0
    abs_gap: float = 1e-6
    rel_gap: float = 1e-4
    integrality_tol: float = 1e-5
    branching: str = MOST_FRACTIONAL
    deterministic: bool = False
    seed: int = 0
    # hard cap on processed nodes; in deterministic mode it replaces the wall clock
    node_limit: int | None = None
    # rounding heuristic period in nodes (0 disables); always tried while no incumbent exists
    heuristic_period: int = 10
    log_period: int = 50

    def __post_init__(self):
        for name in ("abs_gap", "rel_gap", "integrality_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.branching not in (MOST_FRACTIONAL, PSEUDO_COST):
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be at least 1")
        if self.deterministic and self.node_limit is None:
            self.node_limit = 5000

    @classmethod
    def from_dict(cls, d: dict) -> "SolveParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolveResult:
    status: str
    assignment: np.ndarray | None = None
    objective: float = np.inf
    best_bound: float = -np.inf
    node_count: int = 0
    wall_time_s: float = 0.0
    # (nodes, incumbent, bound) after every processed node
    trace: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.assignment is not None

    @property
    def gap(self) -> float:
        if not np.isfinite(self.objective):
            return np.inf
        return self.objective - self.best_bound

    def to_dict(self, timing: bool = True) -> dict:
        d = {"status": self.status,
             "objective": _num(self.objective),
             "best_bound": _num(self.best_bound),
             "node_count": self.node_count}
        if timing:
            d["wall_time_s"] = self.wall_time_s
        return d


def _num(v: float):
    return float(v) if np.isfinite(v) else None


@dataclass(order=True)
class _Node:
    key: tuple
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    bound: float = field(compare=False)
    depth: int = field(compare=False, default=0)
    # branching record for pseudo-costs: (var, direction, parent objective, fractional part)
    origin: tuple | None = field(compare=False, default=None)


class BranchAndBound:
    """Built-in MIQP engine."""

    name = "bnb"

    def solve(self, model: MiqpModel, params: SolveParams | None = None) -> SolveResult:
        return _Search(model, params or SolveParams(), feasibility=False).run()

    def check_feasibility(self, model: MiqpModel, params: SolveParams | None = None) -> SolveResult:
        return _Search(model.without_objective(), params or SolveParams(), feasibility=True).run()


class _Search:
    def __init__(self, model: MiqpModel, params: SolveParams, feasibility: bool):
        self.model = model
        self.p = params
        self.feasibility = feasibility
        self.bins = model.binary_indices
        self.start_time = time.perf_counter()
        self.deadline = None if params.deterministic else self.start_time + params.time_limit_s
        self.incumbent: np.ndarray | None = None
        self.inc_obj = np.inf
        self.pruned_bound = np.inf
        self.nodes = 0
        self.counter = itertools.count()
        self.incomplete = False
        self.trace: list[tuple[int, float, float]] = []
        self.pc_sum = np.zeros((model.num_vars, 2))
        self.pc_cnt = np.zeros((model.num_vars, 2))

    # -- helpers -----------------------------------------------------------
    def _time_left(self):
        if self.deadline is None:
            return None
        return self.deadline - time.perf_counter()

    def _out_of_budget(self) -> bool:
        if self.p.node_limit is not None and self.nodes >= self.p.node_limit:
            return True
        left = self._time_left()
        return left is not None and left <= 0

    def _relax(self, lb, ub) -> QPResult | None:
        left = self._time_left()
        try:
            return solve_relaxation(self.model, lb, ub, time_limit=left)
        except QPNumericalError as exc:
            log.debug("relaxation failed: %s", exc)
            return None

    def _gap_closed(self, bound: float) -> bool:
        if self.incumbent is None:
            return False
        tol = max(self.p.abs_gap, self.p.rel_gap * abs(self.inc_obj))
        return self.inc_obj - bound <= tol

    def _try_incumbent(self, x: np.ndarray, lb, ub) -> bool:
        """Snap binaries of ``x``, re-solve the continuous QP and keep it if better.

        Returns whether the snapped problem was feasible.
        """
        if self.bins.size == 0:
            candidate = x
            obj = self.model.objective_value(x)
        else:
            vals = np.round(x[self.bins])
            if np.any(vals < lb[self.bins]) or np.any(vals > ub[self.bins]):
                return False
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[self.bins] = vals
            ub2[self.bins] = vals
            res = self._relax(lb2, ub2)
            if res is None or not res.ok:
                return False
            candidate = res.x.copy()
            candidate[self.bins] = vals
            obj = res.objective
        if obj < self.inc_obj:
            self.incumbent = candidate
            self.inc_obj = obj
        return True

    def _fractionality(self, x) -> np.ndarray:
        xb = x[self.bins]
        return np.abs(xb - np.round(xb))

    def _select(self, x, lb, ub, tol: float) -> int | None:
        frac = self._fractionality(x)
        free = lb[self.bins] < ub[self.bins]
        cand = np.flatnonzero((frac > tol) & free)
        if cand.size == 0:
            return None
        if self.p.branching == PSEUDO_COST:
            score = np.empty(cand.size)
            known = True
            for k, c in enumerate(cand):
                j = self.bins[c]
                f = x[j] - np.floor(x[j])
                if self.pc_cnt[j].min() == 0:
                    known = False
                    break
                down = self.pc_sum[j, 0] / self.pc_cnt[j, 0] * f
                up = self.pc_sum[j, 1] / self.pc_cnt[j, 1] * (1 - f)
                score[k] = max(down, 1e-6) * max(up, 1e-6)
            if known:
                return int(self.bins[cand[int(np.argmax(score))]])
        # most fractional: distance to 0.5 smallest, lowest index on ties
        dist = np.abs(x[self.bins[cand]] - 0.5)
        best = np.flatnonzero(dist <= dist.min() + 1e-12)
        return int(self.bins[cand[best[0]]])

    def _record(self, bound):
        # any earlier valid lower bound stays valid, so report the running maximum
        if self.trace:
            bound = max(bound, self.trace[-1][2])
        bound = min(bound, self.inc_obj)
        self.trace.append((self.nodes, self.inc_obj, bound))
        if self.p.log_period and self.nodes % self.p.log_period == 0:
            self._log(bound)

    def _log(self, bound):
        gap = self.inc_obj - bound if np.isfinite(self.inc_obj) else np.inf
        log.info("BnB n=%d inc=%.10g bnd=%.10g gap=%.3g", self.nodes, self.inc_obj, bound, gap)

    # -- main loop ---------------------------------------------------------
    def run(self) -> SolveResult:
        m = self.model
        root = _Node((-np.inf, next(self.counter)), m.lb.copy(), m.ub.copy(), -np.inf)
        open_nodes: list[_Node] = [root]

        if m.start is not None and self.bins.size:
            if not self._try_incumbent(m.start, m.lb, m.ub):
                self._dive_from_start()
            if self.feasibility and self.incumbent is not None:
                return self._finish([], done=True)

        return self._run_tree(open_nodes)

    def _run_tree(self, open_nodes=None) -> SolveResult:
        m = self.model
        if open_nodes is None:
            open_nodes = [_Node((-np.inf, next(self.counter)), m.lb.copy(), m.ub.copy(), -np.inf)]
        status_unbounded = False
        while open_nodes:
            if self._out_of_budget():
                break
            if self.feasibility:
                node = open_nodes.pop()
            else:
                node = heapq.heappop(open_nodes)
            if self.incumbent is not None and node.bound >= self.inc_obj - self.p.abs_gap:
                self.pruned_bound = min(self.pruned_bound, node.bound)
                continue
            self.nodes += 1
            res = self._relax(node.lb, node.ub)
            if res is None:
                self._branch_blind(node, open_nodes)
                self._record(self._global_bound(open_nodes))
                continue
            if res.status == UNBOUNDED:
                status_unbounded = True
                break
            if res.status != OPTIMAL:
                self._record(self._global_bound(open_nodes))
                continue
            bound = max(res.objective, node.bound)
            self._update_pseudocost(node, res.objective)
            if self.incumbent is not None and bound >= self.inc_obj - self.p.abs_gap:
                self.pruned_bound = min(self.pruned_bound, bound)
                self._record(self._global_bound(open_nodes))
                continue
            x = res.x
            j = self._select(x, node.lb, node.ub, self.p.integrality_tol)
            if j is None:
                if self._try_incumbent(x, node.lb, node.ub):
                    if self.feasibility and self.incumbent is not None:
                        break
                    # subtree optimum equals this relaxation up to the snap
                    self.pruned_bound = min(self.pruned_bound, bound)
                    self._record(self._global_bound(open_nodes))
                    continue
                # snapping within tolerance failed: keep branching on inexact binaries
                j = self._select(x, node.lb, node.ub, 0.0)
                if j is None:
                    self.incomplete = True
                    self._record(self._global_bound(open_nodes))
                    continue
            else:
                period = self.p.heuristic_period
                if self.incumbent is None or (period and self.nodes % period == 1):
                    self._try_incumbent(x, node.lb, node.ub)
                    if self.feasibility and self.incumbent is not None:
                        break
            frac = x[j] - np.floor(x[j])
            children = []
            for direction in (0, 1):
                lb, ub = node.lb.copy(), node.ub.copy()
                lb[j] = ub[j] = float(direction)
                children.append(_Node((bound, next(self.counter)), lb, ub, bound, node.depth + 1,
                                      (j, direction, res.objective, frac)))
            if self.feasibility:
                # explore the side the relaxation leans to first
                first = 1 if frac >= 0.5 else 0
                open_nodes.extend(c for c in children if c.origin[1] != first)
                open_nodes.extend(c for c in children if c.origin[1] == first)
            else:
                for c in children:
                    heapq.heappush(open_nodes, c)
            if self._gap_closed(self._global_bound(open_nodes)):
                self._record(self._global_bound(open_nodes))
                break
            self._record(self._global_bound(open_nodes))

        if status_unbounded:
            return SolveResult(INFEASIBLE_OR_UNBOUNDED, node_count=self.nodes,
                               wall_time_s=time.perf_counter() - self.start_time, trace=self.trace)
        return self._finish(open_nodes, done=not open_nodes or self._gap_closed(self._global_bound(open_nodes))
                            or (self.feasibility and self.incumbent is not None))

    def _dive_from_start(self) -> None:
        """Solve the restriction that freezes every binary the hint is sure about.

        ``meta["start_free"]`` names binaries the hint only guesses (e.g.
        disjunct selectors).  The restricted problem gets at most half of
        the remaining node and time budget.
        """
        m = self.model
        free = set(int(j) for j in m.meta.get("start_free", ()))
        if not free:
            return
        frozen = {int(j): float(np.round(m.start[j])) for j in self.bins if int(j) not in free}
        if any(not m.lb[j] <= v <= m.ub[j] for j, v in frozen.items()):
            return
        limit = None if self.p.node_limit is None else max((self.p.node_limit - self.nodes) // 2, 1)
        sub = _Search(m.fix(frozen), SolveParams(**{**self.p.__dict__, "node_limit": limit}),
                      self.feasibility)
        if self.deadline is not None:
            sub.deadline = time.perf_counter() + 0.5 * max(self._time_left(), 0.0)
        res = sub._run_tree()
        self.nodes += sub.nodes
        if res.has_solution:
            obj = m.objective_value(res.assignment)
            log.info("restricted start problem gave incumbent %.10g after %d nodes", obj, sub.nodes)
            if obj < self.inc_obj:
                self.incumbent = res.assignment
                self.inc_obj = obj

    def _branch_blind(self, node: _Node, open_nodes):
        free = [j for j in self.bins if node.lb[j] < node.ub[j]]
        if not free:
            self.incomplete = True
            return
        j = int(free[0])
        for direction in (1, 0) if self.feasibility else (0, 1):
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[j] = ub[j] = float(direction)
            child = _Node((node.bound, next(self.counter)), lb, ub, node.bound, node.depth + 1)
            if self.feasibility:
                open_nodes.append(child)
            else:
                heapq.heappush(open_nodes, child)

    def _update_pseudocost(self, node: _Node, obj: float):
        if node.origin is None:
            return
        j, direction, parent_obj, frac = node.origin
        change = frac if direction == 0 else 1.0 - frac
        if change > 1e-9 and np.isfinite(parent_obj):
            self.pc_sum[j, direction] += max(obj - parent_obj, 0.0) / change
            self.pc_cnt[j, direction] += 1

    def _global_bound(self, open_nodes) -> float:
        if self.feasibility:
            return -np.inf if open_nodes else (0.0 if self.incumbent is not None else np.inf)
        b = min((n.bound for n in open_nodes), default=np.inf)
        return min(b, self.pruned_bound, self.inc_obj)

    def _finish(self, open_nodes, done: bool) -> SolveResult:
        elapsed = time.perf_counter() - self.start_time
        bound = self._global_bound(open_nodes)
        if self.trace and not self.feasibility:
            bound = min(max(bound, self.trace[-1][2]), self.inc_obj)
        if self.incomplete and not open_nodes:
            done = self.incumbent is not None and self.feasibility
        if self.incumbent is not None:
            status = OPTIMAL_STATUS if done else FEASIBLE_TIME_LIMIT
            if status == OPTIMAL_STATUS and not self.feasibility:
                bound = min(bound, self.inc_obj)
            res = SolveResult(status, self.incumbent, self.inc_obj, bound, self.nodes, elapsed, self.trace)
        elif done and not self.incomplete:
            res = SolveResult(INFEASIBLE, None, np.inf, np.inf, self.nodes, elapsed, self.trace)
        else:
            res = SolveResult(TIME_LIMIT, None, np.inf, bound, self.nodes, elapsed, self.trace)
        self._log(res.best_bound)
        return res
