import numpy as np
import pytest

from nnrepair.encoder import RepairOptions
from nnrepair.network import predict
from nnrepair.predicate import evaluate, evaluate_batch, make_global_bound
from nnrepair.repair import RepairInfeasibleError
from nnrepair.solver import SolveParams
from nnrepair.verifier import SAFE, UNSAFE, InputBox, LoopConfig, repair_loop, verify

from conftest import make_net
from instances import loop_fixture, make_predicate
from oracles import grid_max

DET = SolveParams(deterministic=True, node_limit=20000)
BOX = InputBox([-1.0, -1.0], [1.0, 1.0])


def sampled_violations(net, predicate, box, n=100_000, seed=1):
    xs = box.sample(n, np.random.default_rng(seed))
    return int(np.sum(~evaluate_batch(predicate, xs, predict(net, xs).reshape(n, -1))))


def test_input_box_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        InputBox([0.0], [-1.0])
    with pytest.raises(ValueError):
        InputBox([0.0, np.inf], [1.0, 1.0])
    with pytest.raises(ValueError):
        InputBox([0.0], [1.0, 2.0])
    path = tmp_path / "box.json"
    path.write_text('{"lo": [0, 1], "hi": [2, 3]}')
    box = InputBox.load(path)
    assert InputBox.from_dict(box.to_dict()).to_dict() == {"lo": [0.0, 1.0], "hi": [2.0, 3.0]}


def test_identity_safe(identity_net):
    out = verify(identity_net, InputBox([0.0], [1.0]), make_global_bound(-2.0, 2.0), DET)
    assert out.verdict == SAFE and out.witnesses == [] and out.cases_checked == 2


def test_identity_unsafe(identity_net):
    p = make_global_bound(-2.0, 0.5)
    out = verify(identity_net, InputBox([0.0], [1.0]), p, DET)
    assert out.verdict == UNSAFE
    x_star, _ = grid_max(lambda v: float(predict(identity_net, np.array([v]))[0]), 0.0, 1.0, 1e-3)
    for w in out.witnesses:
        assert w[0] > 0.5 and not evaluate(p, w, predict(identity_net, w))
    # the strongest witness sits where the grid oracle finds the largest output
    assert max(w[0] for w in out.witnesses) == pytest.approx(x_star, abs=1e-3)


@pytest.mark.parametrize("seed", range(4))
def test_avoid_box_agrees_with_sampling(seed):
    net = make_net([2, 4, 4, 1], seed)
    xs = BOX.sample(400, np.random.default_rng(seed))
    p = make_predicate("avoid", net, xs)
    out = verify(net, BOX, p, DET)
    bad = sampled_violations(net, p, BOX)
    if bad:
        assert out.verdict == UNSAFE
    if out.verdict == SAFE:
        assert bad == 0
    for w in out.witnesses:
        assert not evaluate(p, w, predict(net, w))


@pytest.mark.parametrize("seed", range(3))
def test_safe_bound_verifies(seed):
    net = make_net([2, 4, 4, 1], seed)
    y = predict(net, BOX.sample(20000, np.random.default_rng(0))).ravel()
    # comfortably above anything reachable: interval bound of the output
    p = make_global_bound(-1e3, float(np.abs(y).max()) * 10 + 10)
    assert verify(net, BOX, p, DET).verdict == SAFE


def test_loop_on_safe_network_does_nothing(identity_net):
    cfg = LoopConfig(layer=2, params=DET)
    res = repair_loop(identity_net, InputBox([0.0], [1.0]), make_global_bound(-2.0, 2.0), cfg)
    assert res.iterations == 0 and res.verdict == SAFE and res.network is identity_net


def test_loop_reaches_safe_network():
    net, p = loop_fixture()
    assert sampled_violations(net, p, BOX) > 0
    cfg = LoopConfig(layer=3, options=RepairOptions(delta_max=0.5),
                     params=SolveParams(deterministic=True, node_limit=300), verify_params=DET)
    res = repair_loop(net, BOX, p, cfg)
    assert res.verdict == SAFE and 1 <= res.iterations <= 20
    assert sampled_violations(res.network, p, BOX) == 0
    # the repair set only grows and keeps the original outputs as targets
    sizes = [h["samples"] for h in res.history if "samples" in h]
    assert sizes == sorted(sizes)
    np.testing.assert_allclose(res.targets, predict(net, res.inputs).reshape(-1, 1))


def test_loop_with_initial_samples_repairs_first():
    net, p = loop_fixture()
    xs = BOX.sample(30, np.random.default_rng(3))
    assert not evaluate_batch(p, xs, predict(net, xs).reshape(-1, 1)).all()
    cfg = LoopConfig(layer=3, options=RepairOptions(delta_max=0.5),
                     params=SolveParams(deterministic=True, node_limit=300), verify_params=DET,
                     max_iterations=1)
    res = repair_loop(net, BOX, p, cfg, inputs=xs)
    assert res.history[0]["iteration"] == 1 and res.iterations == 1
    assert evaluate_batch(p, xs, predict(res.network, xs).reshape(-1, 1)).all()


def test_loop_zero_delta_is_infeasible_at_first_iteration():
    net, p = loop_fixture()
    cfg = LoopConfig(layer=3, options=RepairOptions(delta_max=0.0), params=DET)
    with pytest.raises(RepairInfeasibleError) as info:
        repair_loop(net, BOX, p, cfg)
    assert info.value.iteration == 1 and info.value.num_samples >= 1 and info.value.predicate is p
