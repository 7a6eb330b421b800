"""Datasets and the synthetic gait generator."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..network import NonFiniteError, SchemaError

RAW_FEATURES = ("thigh", "thigh_rate", "shank", "shank_rate", "ankle_prev")
NUM_RAW = len(RAW_FEATURES)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        t = np.asarray(self.targets, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        if len(x) != len(t):
            raise SchemaError(f"{len(x)} inputs but {len(t)} targets")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise NonFiniteError("dataset contains non-finite values")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", t)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def to_dict(self) -> dict:
        return {"inputs": self.inputs.tolist(), "targets": self.targets.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        try:
            return cls(d["inputs"], d["targets"])
        except KeyError as e:
            raise SchemaError(f"dataset JSON missing key {e}") from None


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(ds.to_dict()) + "\n")


def load_dataset(path) -> Dataset:
    return Dataset.from_dict(json.loads(Path(path).read_text()))


def window_index(dt: int, step: int, feature: int) -> int:
    """Column of raw ``feature`` at window position ``step`` (0 = oldest) in a flattened input."""
    return step * NUM_RAW + feature


@dataclass(frozen=True)
class GaitConfig:
    dt: int = 10
    num_trajectories: int = 12
    steps: int = 400
    num_train: int = 1500
    num_repair: int = 150
    num_test: int = 2000
    noise: float = 0.05

    @property
    def input_dim(self) -> int:
        return self.dt * NUM_RAW

    @property
    def guard_index(self) -> int:
        """Current thigh angle."""
        return window_index(self.dt, self.dt - 1, 0)

    @property
    def prev_index(self) -> int:
        """Previous ankle command."""
        return window_index(self.dt, self.dt - 1, 4)


def _trajectory(cfg: GaitConfig, rng: np.random.Generator) -> np.ndarray:
    """Raw signals (steps, 5) and ankle target for one walking bout."""
    n = cfg.steps + 1
    period = rng.uniform(45.0, 60.0)
    drift = np.cumsum(rng.normal(0.0, 0.004, n))
    phase = 2 * np.pi * np.arange(n) / period + rng.uniform(0, 2 * np.pi) + drift
    amp = rng.uniform(0.85, 1.15)
    thigh = amp * (20 * np.sin(phase) + 5 * np.sin(2 * phase + 0.4))
    shank = amp * (25 * np.sin(phase - 0.9) + 8 * np.sin(2 * phase - 0.3))
    ankle = amp * (10 * np.sin(phase - 1.6) + 5 * np.sin(2 * phase + 0.7) + 2 * np.sin(3 * phase))
    ankle = ankle + rng.normal(0.0, cfg.noise, n)
    thigh_rate = np.gradient(thigh)
    shank_rate = np.gradient(shank)
    ankle_prev = np.concatenate([[ankle[0]], ankle[:-1]])
    raw = np.stack([thigh, thigh_rate, shank, shank_rate, ankle_prev], axis=1)
    return raw, ankle


def _windows(raw: np.ndarray, ankle: np.ndarray, dt: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(dt, len(raw))
    x = np.stack([raw[t - dt + 1:t + 1].reshape(-1) for t in idx])
    return x, ankle[idx]


def gait_splits(cfg: GaitConfig, seed: int) -> dict[str, Dataset]:
    """Train/repair/test splits drawn from disjoint shuffled windows."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(cfg.num_trajectories):
        raw, ankle = _trajectory(cfg, rng)
        x, y = _windows(raw, ankle, cfg.dt)
        xs.append(x)
        ys.append(y)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    need = cfg.num_train + cfg.num_repair + cfg.num_test
    if need > len(x):
        raise ValueError(f"requested {need} samples but trajectories provide {len(x)}")
    order = rng.permutation(len(x))
    a, b = cfg.num_train, cfg.num_train + cfg.num_repair
    parts = {"train": order[:a], "repair": order[a:b], "test": order[b:need]}
    return {k: Dataset(x[v], y[v]) for k, v in parts.items()}


def gait_predicates(cfg: GaitConfig) -> dict[str, dict]:
    """Bundled constraint classes, as predicate shorthand dictionaries."""
    return {
        "global": {"global": {"y_min": -13.0, "y_max": 13.0}},
        "rate": {"rate": {"index": cfg.prev_index, "delta": 2.0}},
        "avoid_box": {"avoid_box": {"guard_index": cfg.guard_index, "guard_interval": [5.0, 12.0],
                                    "y_low": 2.0, "y_high": 6.0}},
    }
