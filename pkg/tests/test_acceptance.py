"""End-to-end acceptance checks, one test per criterion.

Every test appends a PASS/FAIL line to the acceptance summary printed at
the end of the pytest run, then asserts.  Reports built for the
determinism check are cached per module so each expensive run happens
twice, not three times.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from nnrepair.encoder import RepairOptions, encode_repair
from nnrepair.interval import compute_bounds_table
from nnrepair.network import apply_layer_update, dumps_network, forward, predict
from nnrepair.pipeline.cli import main
from nnrepair.pipeline.sweep import sweep_partial
from nnrepair.predicate import EPS_FEAS, evaluate, evaluate_batch, make_global_bound
from nnrepair.repair import repair_network
from nnrepair.solver import OPTIMAL_STATUS, SolveParams, get_backend, qp_solve
from nnrepair.verifier import SAFE, InputBox, LoopConfig, repair_loop

from conftest import ACCEPTANCE_LINES, make_net
from instances import KINDS, LOOP_BOX, loop_fixture, random_miqp, repair_instance, small_repair_model
from oracles import enumerate_miqp, naive_forward, naive_layers, oracle_assignment

pytestmark = pytest.mark.slow

GAIT_CLASSES = ("global", "rate", "avoid_box")


def record(number: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# -- criterion 1: every feasible repair satisfies every repair sample -------

def _c1_instances():
    # 7 seeds x 3 classes; widths and sample counts drawn inside repair_instance
    for seed in range(7):
        for kind in KINDS:
            yield seed, kind, 1 + seed % 3


C1_PARAMS = SolveParams(deterministic=True, seed=1, node_limit=100)


def _run_c1() -> tuple[dict, float]:
    t0 = time.perf_counter()
    rows = []
    for seed, kind, layer in _c1_instances():
        net, x, t, pred = repair_instance(seed, kind)
        res = repair_network(net, layer, x, t, pred, RepairOptions(delta_max=0.5), C1_PARAMS)
        row = {"seed": seed, "kind": kind, "layer": layer, "widths": net.widths, "samples": len(x),
               "status": res.status, "objective": res.solve.objective if res.feasible else None,
               "nodes": res.solve.node_count}
        if res.feasible:
            outs = [naive_forward(res.network.layers, xi) for xi in x]
            row["satisfied"] = sum(evaluate(pred, xi, yi, eps=EPS_FEAS) for xi, yi in zip(x, outs))
            row["network"] = dumps_network(res.network)
        rows.append(row)
    return {"instances": rows}, time.perf_counter() - t0


@pytest.fixture(scope="module")
def c1_report():
    return _run_c1()


def test_criterion_1_feasible_repairs_satisfy_all_samples(c1_report):
    report, elapsed = c1_report
    rows = report["instances"]
    feasible = [r for r in rows if r["status"] in (OPTIMAL_STATUS, "FeasibleTimeLimit")]
    bad = [r for r in feasible if r["satisfied"] != r["samples"]]
    kinds = {r["kind"] for r in feasible}
    ok = len(rows) >= 20 and not bad and kinds == set(KINDS) and elapsed < 300
    record(1, ok, f"{len(rows)} instances, {len(feasible)} feasible across {sorted(kinds)}, "
                  f"{len(bad)} with unsatisfied samples, {elapsed:.0f}s (< 300s)")
    assert ok


# -- criterion 2: interval bounds contain every realizable value ------------

def test_criterion_2_interval_soundness():
    t0 = time.perf_counter()
    outside = 0
    checked = 0
    for trial in range(50):
        rng = np.random.default_rng(1000 + trial)
        widths = [int(rng.integers(2, 5)), *rng.integers(3, 9, size=int(rng.integers(1, 4))).tolist(),
                  int(rng.integers(1, 3))]
        net = make_net(widths, seed=trial)
        layer = int(rng.integers(1, net.num_layers + 1))
        dm = float(rng.uniform(0.01, 1.0))
        x0 = rng.normal(size=widths[0]) * 2
        tbl = compute_bounds_table(net, layer, x0[None, :], dm)
        w, b = net.layer(layer)
        for _ in range(1000):
            pert = apply_layer_update(net, layer, w + rng.uniform(-dm, dm, w.shape),
                                      b + rng.uniform(-dm, dm, b.shape))
            for k, z in enumerate(forward(pert, x0).preactivations[layer - 1:]):
                lo, hi = tbl.bounds(layer + k)
                outside += int(np.sum(z < lo[0]) + np.sum(z > hi[0]))
                checked += z.size
    elapsed = time.perf_counter() - t0
    ok = outside == 0 and elapsed < 60
    record(2, ok, f"{outside} of {checked} node values outside their bounds over 50 x 1000 draws, "
                  f"{elapsed:.0f}s (< 60s)")
    assert ok


# -- criterion 3: the encoding reproduces the forward pass ------------------

def test_criterion_3_encoding_consistency():
    t0 = time.perf_counter()
    worst_rows = 0.0
    worst_values = 0.0
    # a bound the initial network satisfies, so every row must hold at the initial weights
    loose = make_global_bound(-1e6, 1e6)
    for i in range(20):
        layer = 1 + i % 3
        net, x, t, _ = repair_instance(100 + i, "global", widths=[2, 6, 5, 1], num_samples=8)
        m = encode_repair(net, layer, x, t, loose, RepairOptions(0.3))
        w0, b0 = net.layer(layer)
        point = oracle_assignment(m, w0, b0)
        worst_rows = max(worst_rows, m.violation(point))
        fixed = {int(v): point[v] for v, _ in m.meta["theta"]}
        fixed.update({int(j): point[j] for j in m.binary_indices})
        pinned = m.fix(fixed).without_objective()
        res = qp_solve(None, pinned.linear, pinned.a_ub, pinned.b_ub, pinned.a_eq, pinned.b_eq,
                       pinned.lb, pinned.ub)
        for n, xi in enumerate(x):
            pres, posts = naive_layers(net.layers, xi)
            for k, xs in enumerate(m.meta["node_vars"][n]):
                worst_values = max(worst_values, float(np.max(np.abs(res.x[xs] - posts[layer - 1 + k]))))
            worst_values = max(worst_values, float(np.max(np.abs(res.x[m.meta["y_vars"][n]] - posts[-1]))))
    elapsed = time.perf_counter() - t0
    ok = worst_rows <= 1e-9 and worst_values <= 1e-8 and elapsed < 60
    record(3, ok, f"20 instances, max row violation {worst_rows:.1e}, "
                  f"max value error {worst_values:.1e} (<= 1e-8), {elapsed:.0f}s (< 60s)")
    assert ok


# -- criterion 4: branch and bound agrees with enumeration ------------------

C4_PARAMS = SolveParams(deterministic=True, seed=1, node_limit=200_000)


def _c4_models():
    models = [random_miqp(seed) for seed in range(20)]
    models += [small_repair_model(seed) for seed in range(10)]
    return models


def _run_c4(models) -> dict:
    rows = []
    for i, m in enumerate(models):
        res = get_backend().solve(m, C4_PARAMS)
        rows.append({"model": i, "binaries": m.num_binaries, "status": res.status,
                     "objective": res.objective, "nodes": res.node_count})
    return {"models": rows}


@pytest.fixture(scope="module")
def c4_report():
    models = _c4_models()
    t0 = time.perf_counter()
    report = _run_c4(models)
    return models, report, time.perf_counter() - t0


def test_criterion_4_solver_matches_enumeration(c4_report):
    models, report, solve_time = c4_report
    t0 = time.perf_counter()
    worst = 0.0
    mismatched = 0
    for m, row in zip(models, report["models"]):
        best, _ = enumerate_miqp(m)
        if np.isinf(best):
            same = row["status"] == "Infeasible"
        else:
            same = row["status"] == OPTIMAL_STATUS and abs(row["objective"] - best) <= 1e-5
            worst = max(worst, abs(row["objective"] - best))
        mismatched += not same
    elapsed = solve_time + time.perf_counter() - t0
    repair_models = sum(1 for m in models if m.meta.get("kind") != "random")
    max_bins = max(m.num_binaries for m in models)
    ok = (len(models) == 30 and repair_models == 10 and max_bins <= 12 and mismatched == 0
          and elapsed < 600)
    record(4, ok, f"{len(models)} MIQPs ({repair_models} repair encodings, <= {max_bins} binaries), "
                  f"{mismatched} mismatches, max gap {worst:.1e} (<= 1e-5), {elapsed:.0f}s (< 600s)")
    assert ok


# -- criterion 5: the repair/verify loop ends safe --------------------------

def test_criterion_5_verifier_loop():
    t0 = time.perf_counter()
    net, pred = loop_fixture()
    box = InputBox(*LOOP_BOX)
    cfg = LoopConfig(layer=3, options=RepairOptions(delta_max=0.5),
                     params=SolveParams(deterministic=True, node_limit=300),
                     verify_params=SolveParams(deterministic=True, node_limit=20000))
    res = repair_loop(net, box, pred, cfg)
    xs = box.sample(100_000, np.random.default_rng(7))
    before = int(np.sum(~evaluate_batch(pred, xs, predict(net, xs).reshape(-1, 1))))
    after = int(np.sum(~evaluate_batch(pred, xs, predict(res.network, xs).reshape(-1, 1))))
    elapsed = time.perf_counter() - t0
    ok = res.verdict == SAFE and res.iterations <= 20 and before > 0 and after == 0 and elapsed < 600
    record(5, ok, f"verdict {res.verdict} after {res.iterations} iterations (<= 20), "
                  f"sampled violations {before} -> {after} of 100000, {elapsed:.0f}s (< 600s)")
    assert ok


# -- criterion 6: synthetic gait repairs -----------------------------------

GAIT_FLAGS = ["--deterministic", "--seed", "1", "--layer", "3", "--node-limit", "50"]


def _gait_run(data: Path, name: str, out: Path) -> tuple[int, float]:
    t0 = time.perf_counter()
    code = main(["repair", "--config", str(data / f"config_{name}.json"), *GAIT_FLAGS, "--out-dir", str(out)])
    return code, time.perf_counter() - t0


@pytest.fixture(scope="module")
def gait_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("gait")
    data = root / "data"
    assert main(["gen-data", "--seed", "1", "--out-dir", str(data)]) == 0
    runs = {name: _gait_run(data, name, root / f"run_{name}") for name in GAIT_CLASSES}
    return root, data, runs


def _closest_quartile_median(csv: Path) -> float:
    pts = np.loadtxt(csv, delimiter=",", skiprows=1)
    cut = np.quantile(pts[:, 0], 0.25)
    return float(np.median(pts[pts[:, 0] <= cut, 1]))


def test_criterion_6_gait_reproduction(gait_runs):
    root, data, runs = gait_runs
    summary = json.loads((data / "summary.json").read_text())
    details = []
    ok = summary["architecture"] == [50, 32, 32, 32, 1]
    for name in GAIT_CLASSES:
        code, elapsed = runs[name]
        report = json.loads((root / f"run_{name}" / "report.json").read_text())
        re_pct = report["repair_set"]["repair_efficacy_pct"]
        ib = report["test_set"]["introduced_bugs_pct"]
        med = _closest_quartile_median(root / f"run_{name}" / "violation_points.csv")
        good = (code == 0 and report["test_set"]["num_samples"] == 2000 and report["repair_set"]["num_samples"] == 150
                and summary["repair_violations"][name] > 0 and re_pct == 100.0 and ib <= 5.0
                and med == 0.0 and elapsed < 1800)
        ok = ok and good
        details.append(f"{name}: {report['status']} RE {re_pct} IB {ib:.2f}% median {med} {elapsed:.0f}s")
    record(6, ok, "; ".join(details))
    assert ok


# -- criterion 7: partial-node sweep ---------------------------------------

def test_criterion_7_partial_sweep():
    net, x, t, pred = repair_instance(2, "global", [2, 4, 4, 1], 8)
    det = SolveParams(deterministic=True, node_limit=2000)
    full_width = sweep_partial(net, 2, x, t, pred, 4, 2, RepairOptions(0.5), det, seed=2)
    full = full_width["full"]
    match = full["status"] == OPTIMAL_STATUS and all(
        r["status"] == OPTIMAL_STATUS and abs(r["objective"] - full["objective"]) <= det.abs_gap
        for r in full_width["results"])
    per_trial = 60.0
    t0 = time.perf_counter()
    sweep = sweep_partial(net, 2, x, t, pred, 2, 10, RepairOptions(0.5), SolveParams(time_limit_s=per_trial),
                          seed=2, include_full=False)
    elapsed = time.perf_counter() - t0
    statuses = [r["status"] for r in sweep["results"]]
    infeasible = statuses.count("Infeasible")
    restriction = sweep["best_objective"] is None or sweep["best_objective"] >= full["objective"] - det.abs_gap
    ok = match and len(statuses) == 10 and infeasible > 0 and restriction and elapsed < 10 * per_trial
    record(7, ok, f"k = width matches full objective {full['objective']:.6g}: {match}; "
                  f"10 trials with k = 2: {infeasible} infeasible recorded, {sweep['num_feasible']} feasible, "
                  f"best partial >= full - abs_gap: {restriction}, {elapsed:.0f}s")
    assert ok


# -- criterion 8: deterministic runs are byte-identical --------------------

def test_criterion_8_determinism(c1_report, c4_report, gait_runs):
    first_c1 = json.dumps(c1_report[0], sort_keys=True).encode()
    second_c1 = json.dumps(_run_c1()[0], sort_keys=True).encode()
    models, first_c4, _ = c4_report
    same_c4 = json.dumps(first_c4, sort_keys=True).encode() == json.dumps(_run_c4(models), sort_keys=True).encode()
    root, data, _ = gait_runs
    gait_same = []
    for name in GAIT_CLASSES:
        code, _ = _gait_run(data, name, root / f"again_{name}")
        a = (root / f"run_{name}" / "report.json").read_bytes()
        b = (root / f"again_{name}" / "report.json").read_bytes()
        gait_same.append(code == 0 and a == b)
    ok = first_c1 == second_c1 and same_c4 and all(gait_same)
    record(8, ok, f"criterion 1 reports identical: {first_c1 == second_c1}; criterion 4: {same_c4}; "
                  f"criterion 6 report.json per class: {gait_same}")
    assert ok
