"""Command-line entry point: ``nnrepair <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ..encoder import RepairOptions
from ..metrics import evaluate_repair
from ..network import NetworkError, load_network, predict, save_network
from ..predicate import evaluate_batch, from_spec, save_predicate
from ..repair import RepairInfeasibleError, repair_network
from ..solver import FEASIBLE_TIME_LIMIT, INFEASIBLE, INFEASIBLE_OR_UNBOUNDED, OPTIMAL_STATUS, SolveParams
from ..verifier import SAFE, UNSAFE, InputBox, LoopConfig, repair_loop, verify
from .config import ConfigError, RunConfig
from .data import GaitConfig, gait_predicates, gait_splits, load_dataset, save_dataset
from .sweep import parse_subset, sweep_partial
from .train import DivergenceError, FitConfig, fit_toy_network

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_UNKNOWN = 3

log = logging.getLogger("nnrepair")


def exit_code_for(status: str) -> int:
    if status in (OPTIMAL_STATUS, FEASIBLE_TIME_LIMIT):
        return EXIT_OK
    if status in (INFEASIBLE, INFEASIBLE_OR_UNBOUNDED):
        return EXIT_INFEASIBLE
    return EXIT_UNKNOWN


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _attach_log(out_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(out_dir / "solver.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("nnrepair")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    return handler


def _detach_log(handler: logging.Handler) -> None:
    logging.getLogger("nnrepair").removeHandler(handler)
    handler.close()


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# -- commands ---------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = GaitConfig(dt=args.dt, num_repair=args.num_repair, num_test=args.num_test,
                     num_train=args.num_train)
    splits = gait_splits(cfg, args.seed)
    for name, ds in splits.items():
        save_dataset(ds, out / f"{name}.json")
    arch = [cfg.input_dim, *_ints(args.hidden), 1]
    fit = fit_toy_network(splits["train"], arch, args.seed,
                          FitConfig(iterations=args.iterations, step_size=args.step_size))
    save_network(fit.network, out / "network.json")
    preds = gait_predicates(cfg)
    repair = splits["repair"]
    outputs = predict(fit.network, repair.inputs).reshape(len(repair), -1)
    summary = {"train_mse": fit.train_mse, "input_dim": cfg.input_dim, "architecture": arch,
               "repair_violations": {}}
    for name, spec in preds.items():
        p = from_spec(spec)
        save_predicate(p, out / f"predicate_{name}.json")
        bad = int(np.sum(~evaluate_batch(p, repair.inputs, outputs)))
        summary["repair_violations"][name] = bad
        _write_json(out / f"config_{name}.json", {
            "network": "network.json", "repair_data": "repair.json", "test_data": "test.json",
            "predicate": f"predicate_{name}.json", "layer": len(arch) - 2,
            "delta_max": 0.1, "solver": {"time_limit_s": 300}, "out_dir": f"run_{name}"})
    _write_json(out / "summary.json", summary)
    if summary["repair_violations"]["global"] == 0:
        print("error: repair split has no violation of the strict global bound", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_fit(args) -> int:
    data = load_dataset(args.data)
    arch = [data.input_dim, *_ints(args.hidden), data.targets.shape[1]]
    fit = fit_toy_network(data, arch, args.seed, FitConfig(iterations=args.iterations,
                                                           step_size=args.step_size))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_network(fit.network, out)
    print(json.dumps({"train_mse": fit.train_mse, "architecture": arch}))
    return EXIT_OK


def _solve_params(cfg: RunConfig, args) -> SolveParams:
    over = {"seed": args.seed, "time_limit_s": args.time_limit, "node_limit": args.node_limit}
    if args.deterministic:
        over["deterministic"] = True
    return cfg.solve_params(**over)


def _load_run(args):
    cfg = RunConfig.load(args.config)
    for key in ("layer", "delta_max", "node_subset", "verify_box"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if args.out_dir is not None:
        cfg.out_dir = Path(args.out_dir)
    net = load_network(cfg.network_path)
    if not 1 <= cfg.layer <= net.num_layers:
        raise ConfigError(f"layer {cfg.layer} outside 1..{net.num_layers}")
    predicate = from_spec(cfg.predicate)
    repair = load_dataset(cfg.repair_path)
    test = load_dataset(cfg.test_path) if cfg.test_path else None
    width = net.layer(cfg.layer)[0].shape[0]
    subset = cfg.node_subset
    if isinstance(subset, str):
        subset = parse_subset(subset, width)
    options = RepairOptions(cfg.delta_max, cfg.l1_weight, subset)
    return cfg, net, predicate, repair, test, options


def cmd_repair(args) -> int:
    cfg, net, predicate, repair, test, options = _load_run(args)
    params = _solve_params(cfg, args)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    handler = _attach_log(out)
    t0 = time.perf_counter()
    try:
        loop = None
        if cfg.verify_box is not None:
            box = (InputBox.load(cfg.verify_box) if isinstance(cfg.verify_box, (str, Path))
                   else InputBox.from_dict(cfg.verify_box))
            try:
                loop = repair_loop(net, box, predicate,
                                   LoopConfig(cfg.layer, options, params, max_iterations=cfg.max_iterations),
                                   repair.inputs, repair.targets)
            except RepairInfeasibleError as e:
                log.error("%s", e)
                status, repaired = e.status or INFEASIBLE, None
            else:
                repaired = loop.network
                status = OPTIMAL_STATUS if loop.verdict == SAFE else "Unknown"
            solve = {"status": status}
        else:
            res = repair_network(net, cfg.layer, repair.inputs, repair.targets, predicate, options, params)
            status, repaired = res.status, res.network
            solve = res.solve.to_dict(timing=not params.deterministic)
    finally:
        _detach_log(handler)
    runtime = None if params.deterministic else time.perf_counter() - t0
    code = exit_code_for(status)
    report = {"status": status, "exit_code": code, "layer": cfg.layer,
              "node_subset": options.node_subset, "delta_max": options.delta_max,
              "solver": solve, "runtime_s": runtime}
    if loop is not None:
        report["loop"] = {"iterations": loop.iterations, "verdict": loop.verdict,
                          "samples": len(loop.inputs)}
    if repaired is not None:
        save_network(repaired, out / "repaired_network.json")
        rs = evaluate_repair(net, repaired, repair.inputs, predicate, targets=repair.targets,
                             solver_status=status)
        report["repair_set"] = rs.to_dict()
        if test is not None:
            ts = evaluate_repair(net, repaired, test.inputs, predicate, repair_inputs=repair.inputs,
                                 targets=test.targets, solver_status=status)
            report["test_set"] = ts.to_dict()
            ts.write_points_csv(out / "violation_points.csv")
    _write_json(out / "report.json", report)
    print(f"{status}: report written to {out / 'report.json'}")
    return code


def cmd_verify(args) -> int:
    net = load_network(args.network)
    predicate = from_spec(args.predicate if not Path(args.predicate).exists() else Path(args.predicate))
    box = InputBox.load(args.box)
    params = SolveParams(time_limit_s=args.time_limit or 600.0, deterministic=args.deterministic,
                         seed=args.seed or 0, node_limit=args.node_limit)
    outcome = verify(net, box, predicate, params)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "verify.json", outcome.to_dict())
    print(json.dumps(outcome.to_dict()))
    return {SAFE: EXIT_OK, UNSAFE: EXIT_INFEASIBLE}.get(outcome.verdict, EXIT_UNKNOWN)


def cmd_eval(args) -> int:
    original = load_network(args.original)
    repaired = load_network(args.repaired)
    predicate = from_spec(args.predicate if not Path(args.predicate).exists() else Path(args.predicate))
    test = load_dataset(args.data)
    ref = load_dataset(args.repair_data).inputs if args.repair_data else None
    rep = evaluate_repair(original, repaired, test.inputs, predicate, repair_inputs=ref, targets=test.targets)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    rep.to_json(out / "eval_report.json")
    if ref is not None:
        rep.write_points_csv(out / "violation_points.csv")
    print(rep.to_json(), end="")
    return EXIT_OK


def cmd_sweep_partial(args) -> int:
    cfg, net, predicate, repair, _test, options = _load_run(args)
    params = _solve_params(cfg, args)
    summary = sweep_partial(net, cfg.layer, repair.inputs, repair.targets, predicate, args.k, args.trials,
                            options, params, seed=args.seed or 0, jobs=args.jobs,
                            include_full=not args.no_full)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "sweep.json", summary)
    lines = ["trial,status,objective,mae,changed_weights,repair_efficacy_pct"]
    for r in summary["results"]:
        lines.append(",".join("" if r[k] is None else str(r[k]) for k in
                              ("trial", "status", "objective", "mae", "changed_weights", "repair_efficacy_pct")))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true",
                   help="node-count limits instead of wall clock; reports omit timings")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--time-limit", type=float, default=None, help="solver time limit in seconds")
    p.add_argument("--node-limit", type=int, default=None,
                   help="branch-and-bound node budget (the only limit in deterministic mode)")
    p.add_argument("--out-dir", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnrepair", description="Single-layer MIQP repair of ReLU networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthetic gait splits plus a fitted network")
    _shared(p)
    p.add_argument("--kind", default="gait", choices=["gait"])
    p.add_argument("--dt", type=int, default=10)
    p.add_argument("--num-train", type=int, default=1500)
    p.add_argument("--num-repair", type=int, default=150)
    p.add_argument("--num-test", type=int, default=2000)
    p.add_argument("--hidden", default="32,32,32")
    p.add_argument("--iterations", type=int, default=3000)
    p.add_argument("--step-size", type=float, default=3e-3)
    p.set_defaults(func=cmd_gen_data, seed=0, out_dir="data")

    p = sub.add_parser("fit", help="fit a toy network to a dataset")
    _shared(p)
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", default="32,32,32")
    p.add_argument("--iterations", type=int, default=3000)
    p.add_argument("--step-size", type=float, default=3e-3)
    p.add_argument("--out", default="network.json")
    p.set_defaults(func=cmd_fit, seed=0)

    p = sub.add_parser("repair", help="repair one layer as described by --config")
    _shared(p)
    p.add_argument("--layer", type=int)
    p.add_argument("--delta-max", type=float)
    p.add_argument("--node-subset", help="random:k:seed or comma-separated node indices")
    p.add_argument("--verify-box", help="input box JSON; enables the repair/verify loop")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("verify", help="check a predicate over an input box")
    _shared(p)
    p.add_argument("--network", required=True)
    p.add_argument("--predicate", required=True, help="predicate JSON file")
    p.add_argument("--box", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="compare a repaired network against the original")
    _shared(p)
    p.add_argument("--original", required=True)
    p.add_argument("--repaired", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--predicate", required=True)
    p.add_argument("--repair-data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-partial", help="random partial-node repair trials")
    _shared(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--layer", type=int)
    p.add_argument("--delta-max", type=float)
    p.add_argument("--no-full", action="store_true", help="skip the full-layer reference repair")
    p.set_defaults(func=cmd_sweep_partial)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # usage errors share the config exit code; 2 is reserved for Infeasible
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    if args.command in ("repair", "sweep-partial") and not args.config:
        print(f"error: {args.command} requires --config", file=sys.stderr)
        return EXIT_CONFIG
    console = logging.StreamHandler()
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(console)
    try:
        return args.func(args)
    except (ConfigError, NetworkError, ValueError, KeyError, OSError, DivergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        logging.getLogger().removeHandler(console)


if __name__ == "__main__":
    sys.exit(main())
