import numpy as np
import pytest
from hypothesis import given, strategies as st

from nnrepair.interval import (BoundsTable, Interval, WeightBox, box_bounds, compute_bounds_table,
                               propagate_bounds, repair_layer_bounds, widen)
from nnrepair.network import DimensionError, apply_layer_update, forward

from conftest import make_net


def realized_preactivations(net, layer, x0):
    """Pre-activations of layers ``layer..L+1`` from an exact forward pass."""
    return forward(net, x0).preactivations[layer - 1:]


def sample_box(box: WeightBox, rng):
    w = rng.uniform(box.w_lo, box.w_hi)
    b = rng.uniform(box.b_lo, box.b_hi)
    return w, b


def test_interval_invariants():
    assert 0.5 in Interval(0.0, 1.0)
    assert Interval(1.0, 3.0).width == 2.0
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(0.0, np.inf)


def test_weight_box_contains_centre_and_respects_subset():
    w = np.arange(6.0).reshape(2, 3)
    b = np.array([1.0, -1.0])
    box = WeightBox.around(w, b, 0.5)
    assert box.contains(w, b) and not box.contains(w + 0.6, b)
    part = WeightBox.around(w, b, 0.5, rows=[1])
    np.testing.assert_array_equal(part.w_lo[0], w[0])
    np.testing.assert_array_equal(part.w_hi[1], w[1] + 0.5)
    with pytest.raises(ValueError):
        WeightBox.around(w, b, -0.1)


def test_repair_layer_bounds_degenerate_box_is_exact():
    rng = np.random.default_rng(0)
    w, b = rng.normal(size=(4, 3)), rng.normal(size=4)
    x = rng.normal(size=3)
    lo, hi = repair_layer_bounds(x, WeightBox.around(w, b, 0.0))
    np.testing.assert_allclose(lo, w @ x + b, atol=1e-14)
    np.testing.assert_allclose(hi, w @ x + b, atol=1e-14)


def test_repair_layer_bounds_corner_example():
    # weights in ([0,1], [-1,0]), bias [0,0], x = (1, -1): corners give max 2 at (1,-1), min 0 at (0,0)
    box = WeightBox(np.array([[0.0, -1.0]]), np.array([[1.0, 0.0]]), np.zeros(1), np.zeros(1))
    lo, hi = repair_layer_bounds(np.array([1.0, -1.0]), box)
    corners = [w1 * 1.0 + w2 * -1.0 for w1 in (0.0, 1.0) for w2 in (-1.0, 0.0)]
    assert (lo[0], hi[0]) == (min(corners), max(corners)) == (0.0, 2.0)


def test_repair_layer_bounds_monte_carlo():
    rng = np.random.default_rng(1)
    w, b = rng.normal(size=(4, 5)), rng.normal(size=4)
    x = rng.normal(size=5)
    box = WeightBox.around(w, b, 0.3)
    lo, hi = repair_layer_bounds(x, box)
    for _ in range(1000):
        wd, bd = sample_box(box, rng)
        v = wd @ x + bd
        assert np.all(lo - 1e-12 <= v) and np.all(v <= hi + 1e-12)


def test_repair_layer_bounds_dimension_error():
    box = WeightBox.around(np.ones((2, 3)), np.ones(2), 0.1)
    with pytest.raises(DimensionError):
        repair_layer_bounds(np.ones(4), box)


def test_propagate_bounds_examples():
    lo, hi = propagate_bounds(np.array([0.0, 0.0]), np.array([1.0, 2.0]), np.array([[1.0, -1.0]]), np.zeros(1))
    corners = [a - c for a in (0.0, 1.0) for c in (0.0, 2.0)]
    assert (lo[0], hi[0]) == (min(corners), max(corners)) == (-2.0, 1.0)
    x = np.array([0.3, -0.2])
    w, b = np.array([[2.0, 1.0], [-1.0, 0.5]]), np.array([0.1, 0.2])
    lo, hi = propagate_bounds(x, x, w, b)
    np.testing.assert_allclose(lo, w @ x + b)
    np.testing.assert_allclose(hi, w @ x + b)


def test_propagate_bounds_monte_carlo_and_errors():
    rng = np.random.default_rng(2)
    w, b = rng.normal(size=(6, 4)), rng.normal(size=6)
    x_lo = rng.normal(size=4)
    x_hi = x_lo + rng.uniform(0, 2, size=4)
    lo, hi = propagate_bounds(x_lo, x_hi, w, b)
    for x in rng.uniform(x_lo, x_hi, size=(1000, 4)):
        v = w @ x + b
        assert np.all(lo - 1e-12 <= v) and np.all(v <= hi + 1e-12)
    with pytest.raises(ValueError):
        propagate_bounds(x_hi, x_lo, w, b)
    with pytest.raises(DimensionError):
        propagate_bounds(x_lo, x_hi, w[:, :3], b)


def test_bounds_table_zero_delta_is_forward_pass():
    net = make_net([3, 4, 4, 2], seed=4)
    xs = np.random.default_rng(3).normal(size=(5, 3))
    for layer in (1, 2, 3):
        tbl = compute_bounds_table(net, layer, xs, 0.0)
        for n, x in enumerate(xs):
            pre = realized_preactivations(net, layer, x)
            for k, z in enumerate(pre):
                lo, hi = tbl.bounds(layer + k)
                np.testing.assert_allclose(lo[n], z, atol=1e-12)
                np.testing.assert_allclose(hi[n], z, atol=1e-12)


def test_bounds_table_monte_carlo_fixture():
    net = make_net([2, 4, 4, 1], seed=11)
    xs = np.random.default_rng(5).normal(size=(5, 2))
    layer, dm = 1, 0.1
    tbl = compute_bounds_table(net, layer, xs, dm)
    w, b = net.layer(layer)
    rng = np.random.default_rng(6)
    for _ in range(200):
        pert = apply_layer_update(net, layer, w + rng.uniform(-dm, dm, w.shape), b + rng.uniform(-dm, dm, b.shape))
        for n, x in enumerate(xs):
            for k, z in enumerate(realized_preactivations(pert, layer, x)):
                lo, hi = tbl.bounds(layer + k)
                assert np.all(lo[n] - 1e-12 <= z) and np.all(z <= hi[n] + 1e-12)


def test_bounds_table_nesting_and_original_inside():
    net = make_net([3, 5, 5, 1], seed=8)
    xs = np.random.default_rng(9).normal(size=(6, 3))
    small = compute_bounds_table(net, 2, xs, 0.1)
    big = compute_bounds_table(net, 2, xs, 0.2)
    assert big.contains(small) and not small.contains(big)
    for n, x in enumerate(xs):
        for k, z in enumerate(realized_preactivations(net, 2, x)):
            lo, hi = small.bounds(2 + k)
            assert np.all(lo[n] <= z + 1e-12) and np.all(z <= hi[n] + 1e-12)


def test_bounds_table_output_layer_and_errors():
    net = make_net([2, 3, 1])
    tbl = compute_bounds_table(net, 2, np.zeros((1, 2)), 0.5)
    assert len(tbl.lo) == 1 and tbl.output[0].shape == (1, 1)
    with pytest.raises(IndexError):
        compute_bounds_table(net, 3, np.zeros((1, 2)), 0.5)
    with pytest.raises(ValueError):
        compute_bounds_table(net, 1, np.zeros((1, 2)), -1.0)
    with pytest.raises(DimensionError):
        compute_bounds_table(net, 1, np.zeros((1, 3)), 0.1)


def test_bounds_table_node_subset_fixes_other_rows():
    net = make_net([2, 4, 1], seed=2)
    xs = np.random.default_rng(0).normal(size=(3, 2))
    tbl = compute_bounds_table(net, 1, xs, 0.5, node_subset=[1, 3])
    lo, hi = tbl.bounds(1)
    np.testing.assert_allclose(lo[:, [0, 2]], hi[:, [0, 2]], atol=1e-12)
    assert np.all(hi[:, [1, 3]] > lo[:, [1, 3]])


def test_widen():
    lo, hi = widen(np.array([-1e6, 0.0]), np.array([1e6, 0.0]))
    np.testing.assert_allclose(lo, [-1e6 - 1e-6 - 1e-3, -1e-6])
    np.testing.assert_allclose(hi, [1e6 + 1e-6 + 1e-3, 1e-6])
    tbl = BoundsTable(1, 0.0, (np.zeros((1, 1)),), (np.ones((1, 1)),))
    assert tbl.widened().contains(tbl)


def test_box_bounds_contains_samples():
    net = make_net([2, 6, 6, 1], seed=12)
    lo, hi = np.array([-1.0, 0.0]), np.array([1.0, 2.0])
    los, his = box_bounds(net, lo, hi)
    for x in np.random.default_rng(1).uniform(lo, hi, size=(2000, 2)):
        for k, z in enumerate(forward(net, x).preactivations):
            assert np.all(los[k] - 1e-12 <= z) and np.all(z <= his[k] + 1e-12)


@given(st.integers(0, 100_000), st.floats(0.0, 1.0), st.integers(1, 3))
def test_soundness_property(seed, dm, layer):
    net = make_net([3, 4, 5, 2], seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=(1, 3)) * 2
    tbl = compute_bounds_table(net, layer, x, dm).widened()
    w, b = net.layer(layer)
    for _ in range(20):
        pert = apply_layer_update(net, layer, w + rng.uniform(-dm, dm, w.shape), b + rng.uniform(-dm, dm, b.shape))
        for k, z in enumerate(realized_preactivations(pert, layer, x[0])):
            lo, hi = tbl.bounds(layer + k)
            assert np.all(lo[0] <= z) and np.all(z <= hi[0])
