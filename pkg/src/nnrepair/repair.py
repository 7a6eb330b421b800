"""Single-layer repair: bounds, encoding, solve, decode."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .encoder import RepairOptions, decoded_network, encode_repair
from .interval import compute_bounds_table
from .model import MiqpModel
from .network import Network
from .predicate import Predicate
from .solver import SolveParams, SolveResult, get_backend

log = logging.getLogger(__name__)


class RepairInfeasibleError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None, num_samples: int | None = None,
                 predicate: Predicate | None = None, status: str | None = None):
        super().__init__(message)
        self.status = status
        self.iteration = iteration
        self.num_samples = num_samples
        self.predicate = predicate


@dataclass
class RepairResult:
    solve: SolveResult
    model: MiqpModel
    network: Network | None
    runtime_s: float

    @property
    def status(self) -> str:
        return self.solve.status

    @property
    def feasible(self) -> bool:
        return self.network is not None


def repair_network(net: Network, layer: int, inputs, targets, predicate: Predicate,
                   options: RepairOptions | None = None, params: SolveParams | None = None,
                   backend=None) -> RepairResult:
    """Modify layer ``layer`` so ``predicate`` holds on every sample, staying close to ``targets``."""
    options = options or RepairOptions()
    params = params or SolveParams()
    t0 = time.perf_counter()
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    bounds = compute_bounds_table(net, layer, inputs, options.delta_max, options.node_subset)
    model = encode_repair(net, layer, inputs, targets, predicate, options, bounds)
    log.info("repair model: layer %d, %d samples, %d variables, %d binaries, %d+%d rows",
             layer, len(inputs), model.num_vars, model.num_binaries, len(model.b_ub), len(model.b_eq))
    result = get_backend(backend).solve(model, params)
    repaired = decoded_network(model, result.assignment) if result.has_solution else None
    return RepairResult(result, model, repaired, time.perf_counter() - t0)
