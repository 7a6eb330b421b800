"""Repair evaluation: MAE, repair efficacy, introduced bugs, violation degree vs distance."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .network import DimensionError, Network, predict
from .predicate import Predicate, degree_batch, evaluate_batch


@dataclass
class RepairReport:
    mae: float
    repair_efficacy_pct: float | None
    introduced_bugs_pct: float | None
    num_samples: int
    num_violations_original: int
    num_violations_repaired: int
    mae_to_targets: float | None = None
    solver_status: str | None = None
    runtime_s: float | None = None
    violation_points: list[tuple[float, float]] = field(default_factory=list, repr=False)

    def to_dict(self, points: bool = False) -> dict:
        d = asdict(self)
        if not points:
            d.pop("violation_points")
        return d

    def to_json(self, path=None, points: bool = False) -> str:
        text = json.dumps(self.to_dict(points), indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def write_points_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["l2_distance", "violation_degree"])
            for dist, deg in self.violation_points:
                w.writerow([repr(float(dist)), repr(float(deg))])


def _pct(num: int, den: int) -> float | None:
    return None if den == 0 else 100.0 * num / den


def nearest_distances(points, reference) -> np.ndarray:
    """L2 distance from each row of ``points`` to its nearest row of ``reference``."""
    tree = cKDTree(np.atleast_2d(reference))
    dist, _ = tree.query(np.atleast_2d(points))
    return np.asarray(dist, dtype=float)


def evaluate_repair(original: Network, repaired: Network, inputs, predicate: Predicate,
                    repair_inputs=None, targets=None, solver_status: str | None = None,
                    runtime_s: float | None = None) -> RepairReport:
    if original.widths != repaired.widths:
        raise DimensionError("original and repaired networks differ in architecture")
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if len(x) == 0:
        raise ValueError("test set is empty")
    y_orig = predict(original, x).reshape(len(x), -1)
    y_rep = predict(repaired, x).reshape(len(x), -1)
    ok_orig = evaluate_batch(predicate, x, y_orig)
    ok_rep = evaluate_batch(predicate, x, y_rep)
    fixed = int(np.sum(~ok_orig & ok_rep))
    broken = int(np.sum(ok_orig & ~ok_rep))
    mae = float(np.mean(np.abs(y_rep - y_orig)))
    mae_t = None
    if targets is not None:
        t = np.asarray(targets, dtype=float).reshape(y_rep.shape)
        mae_t = float(np.mean(np.abs(y_rep - t)))
    points = []
    if repair_inputs is not None and len(repair_inputs):
        dist = nearest_distances(x, repair_inputs)
        deg = degree_batch(predicate, x, y_rep)
        points = [(float(a), float(b)) for a, b in zip(dist, deg)]
    return RepairReport(
        mae=mae,
        repair_efficacy_pct=_pct(fixed, int(np.sum(~ok_orig))),
        introduced_bugs_pct=_pct(broken, int(np.sum(ok_orig))),
        num_samples=len(x),
        num_violations_original=int(np.sum(~ok_orig)),
        num_violations_repaired=int(np.sum(~ok_rep)),
        mae_to_targets=mae_t,
        solver_status=solver_status,
        runtime_s=runtime_s,
        violation_points=points,
    )


def closest_quartile_median(points) -> float:
    """Median violation degree among the quarter of points closest to the repair set."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return float("nan")
    order = np.argsort(pts[:, 0], kind="stable")
    k = max(1, len(pts) // 4)
    return float(np.median(pts[order[:k], 1]))
