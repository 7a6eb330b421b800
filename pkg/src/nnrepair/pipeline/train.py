"""Full-batch Adam fitter for small ReLU networks."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..network import DimensionError, Network, predict, random_network
from .data import Dataset

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 3000
    step_size: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class FitResult:
    network: Network
    train_mse: float
    history: list[float]


def _grads(params, x, t):
    acts = [x]
    h = x
    n = len(params)
    for i, (w, b) in enumerate(params):
        z = h @ w.T + b
        h = np.maximum(z, 0.0) if i < n - 1 else z
        acts.append(h)
    err = acts[-1] - t
    loss = float(np.mean(np.sum(err * err, axis=1)))
    g = 2.0 * err / len(x)
    out = [None] * n
    for i in range(n - 1, -1, -1):
        w, _ = params[i]
        out[i] = (g.T @ acts[i], g.sum(axis=0))
        if i:
            g = (g @ w) * (acts[i] > 0)
    return loss, out


def fit_toy_network(data: Dataset, arch: Sequence[int], seed: int,
                    config: FitConfig | None = None) -> FitResult:
    """Fit ``arch`` (full widths, input first) to ``data`` by least squares.

    The fitter knows nothing about constraints; its only job is to produce
    a plausible network whose violations can then be repaired.
    """
    config = config or FitConfig()
    arch = list(arch)
    if len(arch) < 2:
        raise DimensionError("architecture needs at least input and output widths")
    if arch[0] != data.input_dim or arch[-1] != data.targets.shape[1]:
        raise DimensionError(f"architecture {arch} does not match dataset widths "
                             f"({data.input_dim} in, {data.targets.shape[1]} out)")
    rng = np.random.default_rng(seed)
    # standardise inputs internally, then fold the scaling into the first layer
    mu = data.inputs.mean(axis=0)
    sd = data.inputs.std(axis=0)
    sd[sd < 1e-12] = 1.0
    x = (data.inputs - mu) / sd
    t = data.targets
    params = [(w.copy(), b.copy()) for w, b in random_network(arch, rng).layers]
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    history = []
    c = config
    for it in range(1, c.iterations + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            # divergence is reported below rather than as floating-point warnings
            loss, grads = _grads(params, x, t)
        if not np.isfinite(loss):
            raise DivergenceError(f"training loss became {loss} at iteration {it}; "
                                  f"lower the step size (currently {c.step_size})")
        history.append(loss)
        for i, (gw, gb) in enumerate(grads):
            new = []
            for k, g in enumerate((gw, gb)):
                mk = c.beta1 * m[i][k] + (1 - c.beta1) * g
                vk = c.beta2 * v[i][k] + (1 - c.beta2) * g * g
                m[i] = (mk, m[i][1]) if k == 0 else (m[i][0], mk)
                v[i] = (vk, v[i][1]) if k == 0 else (v[i][0], vk)
                mhat = mk / (1 - c.beta1 ** it)
                vhat = vk / (1 - c.beta2 ** it)
                new.append(params[i][k] - c.step_size * mhat / (np.sqrt(vhat) + c.eps))
            params[i] = (new[0], new[1])
        if it % 500 == 0:
            log.info("fit iteration %d: mse %.6g", it, loss / t.shape[1])
    w1, b1 = params[0]
    params[0] = (w1 / sd, b1 - (w1 / sd) @ mu)
    net = Network(params)
    final = float(np.mean((predict(net, data.inputs).reshape(t.shape) - t) ** 2))
    if not np.isfinite(final):
        raise DivergenceError(f"fitted network produces non-finite outputs; lower the step size "
                              f"(currently {c.step_size})")
    return FitResult(net, final, history)
