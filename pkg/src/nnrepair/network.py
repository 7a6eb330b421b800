"""Fully connected ReLU networks: representation, JSON I/O and forward evaluation.

Layers are indexed from 1 to ``L + 1`` where ``L`` is the number of hidden
layers; layer ``L + 1`` is the affine output layer.  ``weights[i][j]`` connects
input ``j`` to output node ``i``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class NetworkError(ValueError):
    """Base class for malformed networks and network files."""


class DimensionError(NetworkError):
    pass


class NonFiniteError(NetworkError):
    pass


class SchemaError(NetworkError):
    pass


@dataclass(frozen=True)
class Activations:
    """Node values of one forward pass.

    ``values[0]`` is the input, ``values[l]`` the post-ReLU values of hidden
    layer ``l``.  ``preactivations[l - 1]`` is the affine image of layer ``l``
    (the last entry equals ``output``).
    """

    values: tuple[np.ndarray, ...]
    preactivations: tuple[np.ndarray, ...]
    output: np.ndarray

    @property
    def pattern(self) -> tuple[np.ndarray, ...]:
        return tuple(z > 0 for z in self.preactivations[:-1])


class Network:
    """Immutable feed-forward ReLU network (identity on the output layer)."""

    def __init__(self, layers: Sequence[tuple[np.ndarray, np.ndarray]]):
        if len(layers) == 0:
            raise DimensionError("network needs at least one layer")
        checked = []
        for k, (w, b) in enumerate(layers, start=1):
            w = np.array(w, dtype=float)
            b = np.array(b, dtype=float)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DimensionError(f"layer {k}: weights {w.shape} do not match bias {b.shape}")
            if checked and checked[-1][0].shape[0] != w.shape[1]:
                raise DimensionError(
                    f"layer {k} expects {w.shape[1]} inputs but layer {k - 1} has "
                    f"{checked[-1][0].shape[0]} nodes")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteError(f"layer {k} contains non-finite values")
            w.setflags(write=False)
            b.setflags(write=False)
            checked.append((w, b))
        self._layers = tuple(checked)

    @property
    def layers(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        return self._layers

    @property
    def num_layers(self) -> int:
        """Number of affine layers, ``L + 1``."""
        return len(self._layers)

    @property
    def num_hidden(self) -> int:
        return len(self._layers) - 1

    @property
    def input_dim(self) -> int:
        return self._layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self._layers[-1][0].shape[0]

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w, _ in self._layers]

    def layer(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        if not 1 <= index <= self.num_layers:
            raise IndexError(f"layer index {index} outside 1..{self.num_layers}")
        return self._layers[index - 1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network) or self.widths != other.widths:
            return False
        return all(np.array_equal(w1, w2) and np.array_equal(b1, b2)
                   for (w1, b1), (w2, b2) in zip(self._layers, other._layers))

    def __repr__(self) -> str:
        return f"Network(widths={self.widths})"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return predict(self, x)

    def to_dict(self) -> dict:
        return {"layers": [{"weights": w.tolist(), "bias": b.tolist()} for w, b in self._layers]}

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        if not isinstance(data, dict) or not isinstance(data.get("layers"), list):
            raise SchemaError("expected an object with a 'layers' list")
        layers = []
        for k, entry in enumerate(data["layers"], start=1):
            if not isinstance(entry, dict) or "weights" not in entry or "bias" not in entry:
                raise SchemaError(f"layer {k} needs 'weights' and 'bias'")
            w, b = entry["weights"], entry["bias"]
            if (not isinstance(w, list) or not w or not all(isinstance(r, list) for r in w)
                    or not isinstance(b, list)):
                raise SchemaError(f"layer {k}: weights must be a list of rows, bias a list")
            if len({len(r) for r in w}) != 1:
                raise DimensionError(f"layer {k}: ragged weight matrix")
            try:
                w_arr = np.array(w, dtype=float)
                b_arr = np.array(b, dtype=float)
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"layer {k}: non-numeric entry ({exc})") from None
            layers.append((w_arr, b_arr))
        return cls(layers)


def forward(net: Network, x0: np.ndarray) -> Activations:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (net.input_dim,):
        raise DimensionError(f"input has shape {x0.shape}, network expects ({net.input_dim},)")
    values = [x0]
    pre = []
    x = x0
    for k, (w, b) in enumerate(net.layers):
        z = w @ x + b
        pre.append(z)
        if k < net.num_hidden:
            x = np.maximum(z, 0.0)
            values.append(x)
    return Activations(tuple(values), tuple(pre), pre[-1])


def predict(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Batched forward pass; ``inputs`` has shape (N, input_dim) or (input_dim,)."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"inputs have width {x.shape[1]}, network expects {net.input_dim}")
    for k, (w, b) in enumerate(net.layers):
        x = x @ w.T + b
        if k < net.num_hidden:
            x = np.maximum(x, 0.0)
    return x[0] if single else x


def hidden_values(net: Network, inputs: np.ndarray, upto: int) -> np.ndarray:
    """Post-activation values of layer ``upto`` (0 = the inputs) for a batch."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    for w, b in net.layers[:upto]:
        x = np.maximum(x @ w.T + b, 0.0)
    return x


def apply_layer_update(net: Network, layer_index: int, new_weights, new_bias) -> Network:
    w_old, b_old = net.layer(layer_index)
    new_weights = np.asarray(new_weights, dtype=float)
    new_bias = np.asarray(new_bias, dtype=float)
    if new_weights.shape != w_old.shape or new_bias.shape != b_old.shape:
        raise DimensionError(
            f"layer {layer_index} expects weights {w_old.shape} and bias {b_old.shape}, "
            f"got {new_weights.shape} and {new_bias.shape}")
    layers = list(net.layers)
    layers[layer_index - 1] = (new_weights, new_bias)
    return Network(layers)


def _dump_float(v: float) -> str:
    return format(v, ".17g")


def dumps_network(net: Network) -> str:
    # 17 significant digits make the text round trip bit-exact.
    parts = []
    for w, b in net.layers:
        rows = ",".join("[" + ",".join(_dump_float(v) for v in row) + "]" for row in w)
        bias = ",".join(_dump_float(v) for v in b)
        parts.append('{"weights":[' + rows + '],"bias":[' + bias + ']}')
    return '{"layers":[' + ",\n".join(parts) + "]}\n"


def save_network(net: Network, path) -> None:
    Path(path).write_text(dumps_network(net))


def load_network(path) -> Network:
    text = Path(path).read_text()
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return Network.from_dict(data)


def _reject_constant(name: str):
    raise NonFiniteError(f"non-finite value {name!r} in network file")


def random_network(widths: Sequence[int], rng: np.random.Generator, scale: float = 1.0) -> Network:
    """He-style random initialisation, used by fixtures and the toy trainer."""
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        w = rng.normal(0.0, scale * np.sqrt(2.0 / n_in), size=(n_out, n_in))
        b = rng.normal(0.0, 0.1 * scale, size=n_out)
        layers.append((w, b))
    return Network(layers)
