"""Run configuration for CLI repairs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..network import SchemaError
from ..solver import SolveParams


class ConfigError(ValueError):
    pass


def _path(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


@dataclass
class RunConfig:
    network_path: Path
    repair_path: Path
    predicate: object
    layer: int
    test_path: Path | None = None
    node_subset: object = None
    delta_max: float = 1.0
    l1_weight: float = 0.0
    solver: dict = field(default_factory=dict)
    verify_box: object = None
    out_dir: Path = Path("out")
    max_iterations: int = 20

    def solve_params(self, **overrides) -> SolveParams:
        d = dict(self.solver)
        d.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return SolveParams.from_dict(d)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad solver settings: {e}") from None

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "RunConfig":
        unknown = set(d) - {"network", "repair_data", "test_data", "predicate", "layer", "node_subset",
                            "delta_max", "l1_weight", "solver", "verify_box", "out_dir", "max_iterations"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("network", "repair_data", "predicate", "layer"):
            if key not in d:
                raise ConfigError(f"config is missing required key {key!r}")
        pred = d["predicate"]
        if isinstance(pred, str):
            pred = _path(base, pred)
        box = d.get("verify_box")
        if isinstance(box, str):
            box = _path(base, box)
        cfg = cls(
            network_path=_path(base, d["network"]),
            repair_path=_path(base, d["repair_data"]),
            test_path=_path(base, d.get("test_data")),
            predicate=pred,
            layer=int(d["layer"]),
            node_subset=d.get("node_subset"),
            delta_max=float(d.get("delta_max", 1.0)),
            l1_weight=float(d.get("l1_weight", 0.0)),
            solver=dict(d.get("solver", {})),
            verify_box=box,
            out_dir=_path(base, d.get("out_dir", "out")),
            max_iterations=int(d.get("max_iterations", 20)),
        )
        for p in (cfg.network_path, cfg.repair_path, cfg.test_path):
            if p is not None and not p.exists():
                raise ConfigError(f"referenced file does not exist: {p}")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(data, dict):
            raise SchemaError("config must be a JSON object")
        return cls.from_dict(data, path.parent)
