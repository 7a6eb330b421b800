"""Interval arithmetic for big-M coefficients.

At the repair layer the weights are interval valued (a box of half-width
``delta_max`` around the originals) and the layer input is a known per-sample
vector.  Every later layer has fixed weights and interval inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import DimensionError, Network, hidden_values

# widening applied before intervals become big-M coefficients
ABS_SLACK = 1e-6
REL_SLACK = 1e-9


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class WeightBox:
    """Per-entry intervals for one layer's weights and bias."""

    w_lo: np.ndarray
    w_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray

    @classmethod
    def around(cls, weights, bias, delta_max: float, rows: Sequence[int] | None = None) -> "WeightBox":
        """Box of half-width ``delta_max`` around ``(weights, bias)``.

        With ``rows`` given only those nodes' incoming parameters get a
        non-degenerate interval; all other rows are fixed.
        """
        if delta_max < 0:
            raise ValueError("delta_max must be nonnegative")
        w = np.asarray(weights, dtype=float)
        b = np.asarray(bias, dtype=float)
        half_w = np.full_like(w, delta_max)
        half_b = np.full_like(b, delta_max)
        if rows is not None:
            mask = np.zeros(w.shape[0], dtype=bool)
            mask[list(rows)] = True
            half_w[~mask] = 0.0
            half_b[~mask] = 0.0
        return cls(w - half_w, w + half_w, b - half_b, b + half_b)

    def contains(self, weights, bias) -> bool:
        w = np.asarray(weights)
        b = np.asarray(bias)
        return bool(np.all((self.w_lo <= w) & (w <= self.w_hi))
                    and np.all((self.b_lo <= b) & (b <= self.b_hi)))


def repair_layer_bounds(x_prev, box: WeightBox) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of ``W x_prev + b`` over all ``(W, b)`` in ``box``.

    ``x_prev`` may be one vector or a batch (N, n_in); the result has the
    matching leading shape.
    """
    x = np.asarray(x_prev, dtype=float)
    if x.shape[-1] != box.w_lo.shape[1]:
        raise DimensionError(f"x_prev width {x.shape[-1]} does not match box inputs {box.w_lo.shape[1]}")
    pos = np.maximum(x, 0.0)
    neg = np.minimum(x, 0.0)
    hi = pos @ box.w_hi.T + neg @ box.w_lo.T + box.b_hi
    lo = pos @ box.w_lo.T + neg @ box.w_hi.T + box.b_lo
    return lo, hi


def propagate_bounds(x_lo, x_hi, weights, bias) -> tuple[np.ndarray, np.ndarray]:
    """Interval image of ``W x + b`` for ``x`` in ``[x_lo, x_hi]`` (batched on the leading axis)."""
    x_lo = np.asarray(x_lo, dtype=float)
    x_hi = np.asarray(x_hi, dtype=float)
    w = np.asarray(weights, dtype=float)
    b = np.asarray(bias, dtype=float)
    if x_lo.shape != x_hi.shape or x_lo.shape[-1] != w.shape[1] or w.shape[0] != b.shape[0]:
        raise DimensionError("bounds, weights and bias have inconsistent shapes")
    if np.any(x_lo > x_hi):
        raise ValueError("input bounds have lo > hi")
    w_pos = np.maximum(w, 0.0)
    w_neg = np.minimum(w, 0.0)
    hi = x_hi @ w_pos.T + x_lo @ w_neg.T + b
    lo = x_lo @ w_pos.T + x_hi @ w_neg.T + b
    return lo, hi


def widen(lo, hi, abs_slack: float = ABS_SLACK, rel_slack: float = REL_SLACK):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return (lo - (abs_slack + rel_slack * np.abs(lo)),
            hi + (abs_slack + rel_slack * np.abs(hi)))


@dataclass(frozen=True)
class BoundsTable:
    """Pre-activation bounds per sample for layers ``layer .. L + 1``.

    ``lo[k]`` / ``hi[k]`` have shape (N, width of layer ``layer + k``); the
    last entry holds the output intervals.
    """

    layer: int
    delta_max: float
    lo: tuple[np.ndarray, ...]
    hi: tuple[np.ndarray, ...]

    @property
    def num_samples(self) -> int:
        return self.lo[0].shape[0]

    def bounds(self, layer: int) -> tuple[np.ndarray, np.ndarray]:
        k = layer - self.layer
        if not 0 <= k < len(self.lo):
            raise IndexError(f"table covers layers {self.layer}..{self.layer + len(self.lo) - 1}")
        return self.lo[k], self.hi[k]

    @property
    def output(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo[-1], self.hi[-1]

    def widened(self) -> "BoundsTable":
        pairs = [widen(lo, hi) for lo, hi in zip(self.lo, self.hi)]
        return BoundsTable(self.layer, self.delta_max,
                           tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def contains(self, other: "BoundsTable") -> bool:
        return all(np.all(lo <= olo) and np.all(ohi <= hi)
                   for lo, hi, olo, ohi in zip(self.lo, self.hi, other.lo, other.hi))


def compute_bounds_table(net: Network, layer: int, inputs, delta_max: float,
                         node_subset: Sequence[int] | None = None) -> BoundsTable:
    if not 1 <= layer <= net.num_layers:
        raise IndexError(f"repair layer {layer} outside 1..{net.num_layers}")
    if delta_max < 0:
        raise ValueError("delta_max must be nonnegative")
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"inputs have width {x.shape[1]}, network expects {net.input_dim}")
    x_prev = hidden_values(net, x, layer - 1)
    w, b = net.layer(layer)
    lo, hi = repair_layer_bounds(x_prev, WeightBox.around(w, b, delta_max, node_subset))
    los, his = [lo], [hi]
    for k in range(layer + 1, net.num_layers + 1):
        w, b = net.layer(k)
        lo, hi = propagate_bounds(np.maximum(lo, 0.0), np.maximum(hi, 0.0), w, b)
        los.append(lo)
        his.append(hi)
    return BoundsTable(layer, float(delta_max), tuple(los), tuple(his))


def box_bounds(net: Network, lo, hi) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activation bounds of every layer for inputs in the box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    los, his = [], []
    for k, (w, b) in enumerate(net.layers):
        if k > 0:
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        lo, hi = propagate_bounds(lo, hi, w, b)
        los.append(lo)
        his.append(hi)
    return los, his
