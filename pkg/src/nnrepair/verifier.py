"""Input-box verification and the repair/verify loop."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import RepairOptions, encode_verification, max_violation_model
from .network import Network, predict
from .predicate import Predicate, evaluate, evaluate_batch
from .repair import RepairInfeasibleError, repair_network
from .solver import INFEASIBLE, SolveParams, get_backend

log = logging.getLogger(__name__)

SAFE = "Safe"
UNSAFE = "Unsafe"
UNKNOWN = "Unknown"

# witnesses closer than this count as one point
WITNESS_ATOL = 1e-6


@dataclass(frozen=True)
class InputBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, len(self.lo)))

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "InputBox":
        return cls(d["lo"], d["hi"])

    @classmethod
    def load(cls, path) -> "InputBox":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class VerifyOutcome:
    verdict: str
    witnesses: list[np.ndarray] = field(default_factory=list)
    cases_checked: int = 0

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "cases_checked": self.cases_checked,
                "witnesses": [w.tolist() for w in self.witnesses]}


def _no_good(phis, pattern) -> tuple[dict[int, float], float]:
    """``<=`` row excluding the binary pattern ``pattern`` on ``phis``."""
    # sum_{on}(1 - phi) + sum_{off} phi >= 1
    row = {j: (1.0 if v > 0.5 else -1.0) for j, v in zip(phis, pattern)}
    ones = sum(1 for v in pattern if v > 0.5)
    return row, ones - 1.0


def _strongest(engine, model, feasible, params: SolveParams, nodes: int) -> np.ndarray:
    """Push a feasible case assignment towards the largest violation within a node budget."""
    if nodes <= 0:
        return feasible
    strong = max_violation_model(model, feasible)
    budget = SolveParams(**{**params.__dict__, "node_limit": nodes})
    res = engine.solve(strong, budget)
    return res.assignment[:model.num_vars] if res.has_solution else feasible


def verify(net: Network, box: InputBox, predicate: Predicate, params: SolveParams | None = None,
           extra_witnesses: int = 5, backend=None, strongest_nodes: int = 200) -> VerifyOutcome:
    """Check ``predicate`` on every input of ``box``.

    Feasibility of each negation case decides the verdict.  Witnesses are
    then moved towards the most violating point of their case (at most
    ``strongest_nodes`` extra nodes each), which makes them better repair
    samples for the loop.
    """
    params = params or SolveParams()
    engine = get_backend(backend)
    cases = encode_verification(net, box.lo, box.hi, predicate)
    witnesses: list[np.ndarray] = []
    unknown = False
    for model in cases:
        x0_vars = model.meta["x0_vars"]
        phis = model.meta["phi_vars"]
        found = 0
        current = model
        for attempt in range(1 + extra_witnesses):
            res = engine.check_feasibility(current, params)
            if res.status == INFEASIBLE:
                break
            if not res.has_solution:
                if found == 0:
                    unknown = True
                break
            point = _strongest(engine, current, res.assignment, params, strongest_nodes)
            x0 = np.clip(point[x0_vars], box.lo, box.hi)
            if not evaluate(predicate, x0, predict(net, x0)):
                # region boundaries can yield the same point under several patterns
                if not any(np.allclose(x0, w, rtol=0.0, atol=WITNESS_ATOL) for w in witnesses):
                    witnesses.append(x0)
                found += 1
            elif found == 0 and attempt == 0:
                log.warning("verifier candidate %s does not violate the predicate on exact evaluation", x0)
            if not phis:
                break
            row, rhs = _no_good(phis, np.round(point[phis]))
            current = current.add_rows([row], [rhs], "no_good")
        if found == 0 and res.has_solution:
            unknown = True
    witnesses = sorted(witnesses, key=lambda w: tuple(w))
    if witnesses:
        verdict = UNSAFE
    elif unknown:
        verdict = UNKNOWN
    else:
        verdict = SAFE
    return VerifyOutcome(verdict, witnesses, len(cases))


@dataclass
class LoopConfig:
    layer: int
    options: RepairOptions = field(default_factory=RepairOptions)
    params: SolveParams = field(default_factory=SolveParams)
    verify_params: SolveParams | None = None
    max_iterations: int = 20
    witness_batch: int = 5


@dataclass
class LoopResult:
    network: Network
    iterations: int
    verdict: str
    history: list[dict]
    inputs: np.ndarray
    targets: np.ndarray


def repair_loop(net: Network, box: InputBox, predicate: Predicate, config: LoopConfig,
                inputs=None, targets=None, backend=None) -> LoopResult:
    """Alternate repair and verification until the box is verified safe.

    With initial samples the loop starts by repairing them; without, it
    starts by asking the verifier for witnesses.  Witnesses join the repair
    set with the original network's outputs as targets; the set only grows.
    """
    vparams = config.verify_params or config.params
    xs = (np.zeros((0, net.input_dim)) if inputs is None
          else np.atleast_2d(np.asarray(inputs, dtype=float)))
    if targets is None:
        ts = predict(net, xs).reshape(len(xs), -1) if len(xs) else np.zeros((0, net.output_dim))
    else:
        ts = np.asarray(targets, dtype=float).reshape(len(xs), -1)
    current = net
    history: list[dict] = []
    iteration = 0
    # samples the network already satisfies need no repair before the first verification
    pending = len(xs) > 0 and not bool(np.all(evaluate_batch(predicate, xs, predict(net, xs).reshape(len(xs), -1))))
    if not pending:
        outcome = verify(current, box, predicate, vparams, config.witness_batch - 1, backend)
        history.append({"iteration": 0, "verdict": outcome.verdict, "witnesses": len(outcome.witnesses)})
        pending = outcome.verdict == UNSAFE
        if pending:
            xs, ts = _add_witnesses(net, xs, ts, outcome.witnesses)
    while pending and iteration < config.max_iterations:
        iteration += 1
        result = repair_network(current, config.layer, xs, ts, predicate, config.options, config.params, backend)
        if not result.feasible:
            raise RepairInfeasibleError(
                f"repair at iteration {iteration} ended with status {result.status} "
                f"on {len(xs)} samples", iteration, len(xs), predicate, result.status)
        current = result.network
        outcome = verify(current, box, predicate, vparams, config.witness_batch - 1, backend)
        history.append({"iteration": iteration, "verdict": outcome.verdict,
                        "witnesses": len(outcome.witnesses), "samples": len(xs),
                        "status": result.status, "objective": result.solve.objective})
        log.info("repair loop iteration %d: %s with %d samples", iteration, outcome.verdict, len(xs))
        pending = outcome.verdict == UNSAFE
        if pending:
            xs, ts = _add_witnesses(net, xs, ts, outcome.witnesses)
    return LoopResult(current, iteration, outcome.verdict, history, xs, ts)


def _add_witnesses(original: Network, xs, ts, witnesses):
    # targets come from the original network, never from an intermediate repair
    new = np.array(witnesses)
    return np.vstack([xs, new]), np.vstack([ts, predict(original, new).reshape(len(new), -1)])
