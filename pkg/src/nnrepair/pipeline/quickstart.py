"""Builder for the bundled quickstart example (2 inputs, one hidden layer of 8 ReLUs)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..network import predict, save_network
from ..predicate import make_global_bound, save_predicate
from .data import Dataset, save_dataset
from .train import FitConfig, fit_toy_network

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs" / "quickstart"


def _surface(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x[:, 0]) * np.cos(1.5 * x[:, 1]) + 0.3 * x[:, 1]


def build_quickstart(out_dir, seed: int = 0, num_repair: int = 20, num_test: int = 400) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    train_x = rng.uniform(-1, 1, (400, 2))
    net = fit_toy_network(Dataset(train_x, _surface(train_x)), [2, 8, 1], seed,
                          FitConfig(iterations=2000, step_size=1e-2)).network
    repair_x = rng.uniform(-1, 1, (num_repair, 2))
    test_x = rng.uniform(-1, 1, (num_test, 2))
    save_network(net, out / "network.json")
    save_dataset(Dataset(repair_x, predict(net, repair_x)), out / "repair.json")
    save_dataset(Dataset(test_x, _surface(test_x)), out / "test.json")
    y_max = float(np.round(np.quantile(predict(net, repair_x), 0.8), 2))
    save_predicate(make_global_bound(-10.0, y_max), out / "predicate.json")
    config = {"network": "network.json", "repair_data": "repair.json", "test_data": "test.json",
              "predicate": "predicate.json", "layer": 1, "delta_max": 0.3,
              "solver": {"time_limit_s": 60, "node_limit": 500}, "out_dir": "out"}
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return config
