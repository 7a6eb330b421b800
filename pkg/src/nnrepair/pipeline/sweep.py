"""Random partial-node repair trials."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..encoder import RepairOptions
from ..metrics import evaluate_repair
from ..network import Network, predict
from ..predicate import Predicate
from ..repair import repair_network
from ..solver import SolveParams

log = logging.getLogger(__name__)


@dataclass
class TrialResult:
    trial: int
    nodes: list[int]
    status: str
    feasible: bool
    objective: float | None = None
    mae: float | None = None
    changed_weights: int | None = None
    repair_efficacy_pct: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def random_subset(width: int, k: int, rng: np.random.Generator) -> list[int]:
    if not 1 <= k <= width:
        raise ValueError(f"subset size {k} outside 1..{width}")
    return sorted(int(j) for j in rng.choice(width, size=k, replace=False))


def parse_subset(text: str, width: int) -> list[int]:
    """``random:k:seed`` or a comma-separated list of node indices (0-based)."""
    if text.startswith("random:"):
        try:
            _, k, seed = text.split(":")
            return random_subset(width, int(k), np.random.default_rng(int(seed)))
        except ValueError as e:
            raise ValueError(f"bad node subset {text!r}: expected random:k:seed ({e})") from None
    nodes = sorted({int(v) for v in text.split(",") if v.strip()})
    if not nodes or nodes[0] < 0 or nodes[-1] >= width:
        raise ValueError(f"node subset {text!r} must name nodes in 0..{width - 1}")
    return nodes


def changed_weights(a: Network, b: Network, layer: int, tol: float = 1e-9) -> int:
    wa, ba = a.layer(layer)
    wb, bb = b.layer(layer)
    return int(np.sum(np.abs(wa - wb) > tol) + np.sum(np.abs(ba - bb) > tol))


def run_trial(trial: int, net: Network, layer: int, inputs, targets, predicate: Predicate,
              options: RepairOptions, params: SolveParams, nodes) -> TrialResult:
    opts = replace(options, node_subset=None if nodes is None else list(nodes))
    shown = list(range(net.layer(layer)[0].shape[0])) if nodes is None else list(opts.node_subset)
    try:
        res = repair_network(net, layer, inputs, targets, predicate, opts, params)
    except Exception as e:  # recorded, the sweep goes on
        log.warning("trial %d failed: %s", trial, e)
        return TrialResult(trial, shown, "Error", False, error=f"{type(e).__name__}: {e}")
    if not res.feasible:
        return TrialResult(trial, shown, res.status, False)
    rep = evaluate_repair(net, res.network, inputs, predicate)
    return TrialResult(
        trial, shown, res.status, True,
        objective=float(res.solve.objective),
        mae=float(np.mean(np.abs(predict(res.network, inputs) - predict(net, inputs)))),
        changed_weights=changed_weights(net, res.network, layer),
        repair_efficacy_pct=rep.repair_efficacy_pct,
    )


def _run(args):
    return run_trial(*args)


def sweep_partial(net: Network, layer: int, inputs, targets, predicate: Predicate, k: int,
                  trials: int, options: RepairOptions, params: SolveParams, seed: int = 0,
                  jobs: int = 1, include_full: bool = True) -> dict:
    """Repair ``trials`` random ``k``-node subsets of ``layer``; optionally the full layer too."""
    width = net.layer(layer)[0].shape[0]
    rng = np.random.default_rng(seed)
    subsets = [random_subset(width, k, rng) for _ in range(trials)]
    work = [(i, net, layer, inputs, targets, predicate, options, params, s) for i, s in enumerate(subsets)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run, work))
    else:
        results = [_run(w) for w in work]
    full = None
    if include_full:
        full = run_trial(-1, net, layer, inputs, targets, predicate, options, params, None)
    feasible = [r.objective for r in results if r.feasible]
    return {
        "layer": layer, "k": k, "trials": trials, "seed": seed,
        "results": [r.to_dict() for r in results],
        "num_feasible": len(feasible),
        "best_objective": min(feasible) if feasible else None,
        "full": None if full is None else full.to_dict(),
    }
