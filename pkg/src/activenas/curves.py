"""Learning-curve arithmetic: AUC, relative gain, multi-seed aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class LearningCurve:
    """Zero-one test error as a function of labels used, one run."""

    m: np.ndarray
    error: np.ndarray
    strategy: str = ""
    arch_mode: str = ""
    seed: int | None = None
    name: str = ""

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        self.error = np.asarray(self.error, dtype=np.float64)
        if self.m.ndim != 1 or self.m.shape != self.error.shape or self.m.size < 1:
            raise DataError("curve needs matching 1-D m and error arrays")
        if np.any(np.diff(self.m) <= 0):
            raise DataError("labels-used values must be strictly increasing")
        if np.any((self.error < 0) | (self.error > 1)):
            raise DataError("errors must lie in [0, 1]")


def auc(curve: LearningCurve, m_max: float) -> float:
    """Trapezoidal area under error vs labels-used over [first m, m_max].

    m_max may fall between measured points; the boundary value is linearly
    interpolated.
    """
    if curve.m.size < 2:
        raise DataError("need at least 2 curve points for an area")
    if not curve.m[0] <= m_max <= curve.m[-1]:
        raise DataError(
            f"m_max {m_max} outside measured range [{curve.m[0]}, {curve.m[-1]}]"
        )
    inside = curve.m < m_max
    xs = np.append(curve.m[inside], m_max)
    ys = np.append(curve.error[inside], np.interp(m_max, curve.m, curve.error))
    return float(_trapezoid(ys, xs))


def auc_gain(passive: LearningCurve, active: LearningCurve, m: float) -> float:
    """Relative area reduction of the active curve versus its passive twin.

    Positive means the active learner needed less area (was better) up to m.
    """
    base = auc(passive, m)
    if base == 0.0:
        raise DataError("passive curve has zero area; gain undefined")
    return (base - auc(active, m)) / base


@dataclass
class AggregateCurve:
    """Pointwise mean and standard-error band over same-grid repetitions."""

    m: np.ndarray
    mean_error: np.ndarray
    sem: np.ndarray
    n_runs: int
    curves: list = field(default_factory=list, repr=False)

    @property
    def degenerate(self) -> bool:
        """True when a single run made the SEM undefined (reported as 0)."""
        return self.n_runs < 2

    def mean_curve(self, **meta) -> LearningCurve:
        return LearningCurve(self.m.copy(), self.mean_error.copy(), **meta)


def aggregate(curves) -> AggregateCurve:
    curves = list(curves)
    if not curves:
        raise DataError("nothing to aggregate")
    grid = curves[0].m
    for c in curves[1:]:
        if not np.array_equal(c.m, grid):
            raise DataError(
                f"label grids differ: {grid.tolist()} vs {c.m.tolist()}"
            )
    errors = np.stack([c.error for c in curves])
    mean = errors.mean(axis=0)
    if len(curves) >= 2:
        sem = errors.std(axis=0, ddof=1) / np.sqrt(len(curves))
    else:
        sem = np.zeros_like(mean)
    return AggregateCurve(grid.copy(), mean, sem, len(curves), curves)


def load_rounds(path) -> list[dict]:
    """Parse a rounds.csv into typed row dicts."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: no data rows")
    out = []
    for row in rows:
        try:
            out.append(
                {
                    "round": int(row["round"]),
                    "labels_used": int(row["labels_used"]),
                    "arch_i": int(row["arch_i"]),
                    "arch_j": int(row["arch_j"]),
                    "depth": int(row["depth"]),
                    "params": int(row["params"]),
                    "val_risk": float(row["val_risk"]),
                    "test_error": float(row["test_error"]),
                    "wall_time_s": float(row["wall_time_s"]),
                }
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed row {row!r}: {exc}") from exc
    return out


def curve_from_run_dir(run_dir) -> LearningCurve:
    """Build a curve from one run directory (rounds.csv plus run.json metadata)."""
    run_dir = Path(run_dir)
    rounds_path = run_dir / "rounds.csv"
    if not rounds_path.exists():
        raise DataError(f"{run_dir}: no rounds.csv")
    rows = load_rounds(rounds_path)
    meta = {}
    meta_path = run_dir / "run.json"
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
    return LearningCurve(
        m=[r["labels_used"] for r in rows],
        error=[r["test_error"] for r in rows],
        strategy=str(meta.get("strategy", "")),
        arch_mode=str(meta.get("arch_mode", "")),
        seed=meta.get("seed"),
        name=run_dir.name,
    )
