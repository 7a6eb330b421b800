"""Single-layer repair of ReLU networks by mixed-integer quadratic programming."""
from .encoder import RepairOptions, decode, decoded_network, encode_repair, encode_verification
from .interval import BoundsTable, WeightBox, compute_bounds_table
from .metrics import RepairReport, evaluate_repair
from .model import MiqpModel, ModelBuilder, write_lp
from .network import Network, forward, load_network, predict, save_network
from .predicate import (Predicate, evaluate, from_spec, make_avoid_box, make_global_bound,
                        make_rate_bound, violation_degree)
from .repair import RepairInfeasibleError, RepairResult, repair_network
from .solver import BranchAndBound, SolveParams, SolveResult
from .verifier import InputBox, LoopConfig, repair_loop, verify

__all__ = [
    "BoundsTable", "BranchAndBound", "InputBox", "LoopConfig", "MiqpModel", "ModelBuilder", "Network",
    "Predicate", "RepairInfeasibleError", "RepairOptions", "RepairReport", "RepairResult", "SolveParams",
    "SolveResult", "WeightBox", "compute_bounds_table", "decode", "decoded_network", "encode_repair",
    "encode_verification", "evaluate", "evaluate_repair", "forward", "from_spec", "load_network",
    "make_avoid_box", "make_global_bound", "make_rate_bound", "predict", "repair_loop", "repair_network",
    "save_network", "verify", "violation_degree", "write_lp",
]
