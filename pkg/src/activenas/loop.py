"""Incremental architecture search inside a pool-based active learning loop.

Each round: search the neighborhood of the previous architecture on a
stratified split of the labeled set (candidates trained briefly), retrain
the winner from scratch on everything labeled, measure test error, then
query the next batch of labels.  All randomness derives from the run seed.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset, OracleView, stratified_split
from .errors import ConfigError, DataError
from .nets import NetworkSpec, instantiate, parameter_count, save_model
from .queries import STRATEGIES, QueryRequest, execute_query
from .space import ArchPoint, BlockSpec, SearchGrid, depth, neighbors
from .train import TrainConfig, premature, train

# purpose tags for per-use seed derivation; every random draw in a run is
# keyed by (run seed, purpose, round, ...) so traces replay exactly
_SEED_INITIAL = 1
_SEED_SEARCH = 2
_SEED_FINAL = 3
_SEED_QUERY = 4


def derive_seed(base, *tags) -> int:
    seq = np.random.SeedSequence([int(base)] + [int(t) for t in tags])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass
class PoolState:
    """Labeled / unlabeled index bookkeeping over one pool dataset."""

    dataset: Dataset
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    round: int = 0

    def __post_init__(self):
        self.labeled_idx = np.sort(np.asarray(self.labeled_idx, dtype=np.int64))
        self.unlabeled_idx = np.sort(np.asarray(self.unlabeled_idx, dtype=np.int64))
        self._universe = np.sort(
            np.concatenate([self.labeled_idx, self.unlabeled_idx])
        )
        self._check()

    def _check(self):
        if np.intersect1d(self.labeled_idx, self.unlabeled_idx).size:
            raise DataError("labeled and unlabeled index sets overlap")
        union = np.sort(np.concatenate([self.labeled_idx, self.unlabeled_idx]))
        if union.size != self._universe.size or not np.array_equal(union, self._universe):
            raise DataError("pool membership changed: union of index sets drifted")

    @property
    def n_pool(self) -> int:
        return self._universe.size

    def add_labeled(self, indices):
        """Move newly queried indices from unlabeled to labeled; bumps round."""
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size != np.asarray(indices).size:
            raise DataError("queried indices contain duplicates")
        if np.setdiff1d(idx, self.unlabeled_idx).size:
            raise DataError("queried index not in the unlabeled pool")
        self.labeled_idx = np.sort(np.concatenate([self.labeled_idx, idx]))
        self.unlabeled_idx = np.setdiff1d(self.unlabeled_idx, idx)
        self.round += 1
        self._check()


@dataclass(frozen=True)
class RunConfig:
    """Everything that defines one active run besides the data itself."""

    k: int
    budget: int
    strategy: str = "softmax-response"
    batch_schedule: tuple = ((0, 25),)
    t_inas: int = 1
    val_fraction: float = 0.2
    train_cfg: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=60))
    candidate_train_cfg: TrainConfig | None = None
    strategy_params: dict = field(default_factory=dict)
    arch_mode: str = "search"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.budget < self.k:
            raise ConfigError(f"budget {self.budget} below seed size {self.k}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.arch_mode not in ("search", "fixed"):
            raise ConfigError(f"arch_mode must be 'search' or 'fixed', got {self.arch_mode!r}")
        if self.t_inas < 1:
            raise ConfigError(f"t_inas must be >= 1, got {self.t_inas}")
        schedule = tuple((int(m), int(b)) for m, b in self.batch_schedule)
        if not schedule:
            raise ConfigError("batch_schedule must not be empty")
        thresholds = [m for m, _ in schedule]
        if thresholds != sorted(set(thresholds)):
            raise ConfigError("batch_schedule thresholds must be strictly increasing")
        if any(b < 1 for _, b in schedule):
            raise ConfigError("batch sizes must be >= 1")
        if thresholds[0] > self.k:
            raise ConfigError(
                f"no batch size defined at seed size {self.k} "
                f"(first threshold is {thresholds[0]})"
            )
        object.__setattr__(self, "batch_schedule", schedule)

    @property
    def candidate_cfg(self) -> TrainConfig:
        if self.candidate_train_cfg is not None:
            return self.candidate_train_cfg
        return premature(self.train_cfg)

    def batch_size_at(self, labeled_count: int) -> int:
        size = None
        for threshold, b in self.batch_schedule:
            if threshold <= labeled_count:
                size = b
        return size


@dataclass
class RoundRecord:
    round: int
    labels_used: int
    arch: ArchPoint
    candidate_val_risks: dict
    val_risk: float
    test_error: float
    wall_time_s: float
    depth: int
    params: int
    epochs_trained: int
    search_iterations: int
    expansion_steps: int


@dataclass(frozen=True)
class SearchResult:
    arch: ArchPoint
    risks: dict
    iterations: int
    epochs_trained: int
    expansion_steps: int


@dataclass(frozen=True)
class Backend:
    """Injection point for model construction and fitting (stubbed in tests)."""

    build: object
    fit: object


def default_backend() -> Backend:
    return Backend(build=instantiate, fit=train)


def _epochs_of(model, cfg: TrainConfig) -> int:
    history = getattr(model, "train_history", None)
    if history:
        return len(history)
    return cfg.epochs


def split_train_val(s_idx, labels, val_fraction, seed):
    """Stratified split of the labeled set into train and validation parts.

    |validation| = round(val_fraction * |S|), at least one sample per class
    on each side; same seed, same split.
    """
    s_idx = np.asarray(s_idx, dtype=np.int64)
    labels = np.asarray(labels)
    if labels.shape != s_idx.shape:
        raise DataError("labels must align one-to-one with the labeled indices")
    val_count = int(round(val_fraction * s_idx.size))
    train_pos, val_pos = stratified_split(labels, val_count, seed)
    return s_idx[train_pos], s_idx[val_pos]


def inas_search(x, y, a_prev, grid, cfg: RunConfig, make_spec, backend, seed) -> SearchResult:
    """One round of incremental search around a_prev.

    Splits the labeled data once, then for up to t_inas iterations trains a
    fresh briefly-trained model per candidate (the current point plus its
    legal expansions) and keeps the validation argmin; stops early at a
    fixed point.  Ties prefer smaller depth, then fewer stacks.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    positions = np.arange(y.size)
    train_pos, val_pos = split_train_val(
        positions, y, cfg.val_fraction, derive_seed(seed, 0)
    )
    x_tr, y_tr = x[train_pos], y[train_pos]
    x_val, y_val = x[val_pos], y[val_pos]

    block = grid.block
    arch = a_prev
    risks = {}
    epochs = 0
    steps = 0
    iterations = 0
    for it in range(1, cfg.t_inas + 1):
        iterations = it
        candidates = sorted(
            neighbors(grid, arch), key=lambda c: (depth(c, block), c.j, c.i)
        )
        risks = {}
        for cand in candidates:
            model = backend.build(
                make_spec(cand), derive_seed(seed, 1, it, cand.i, cand.j)
            )
            cand_cfg = replace(
                cfg.candidate_cfg, seed=derive_seed(seed, 2, it, cand.i, cand.j)
            )
            backend.fit(model, x_tr, y_tr, cand_cfg)
            epochs += _epochs_of(model, cand_cfg)
            risks[cand] = model.evaluate(x_val, y_val)
        best = min(candidates, key=lambda c: (risks[c], depth(c, block), c.j))
        if best == arch:
            break
        arch = best
        steps += 1
    return SearchResult(arch, risks, iterations, epochs, steps)


def run_active(
    pool: PoolState,
    oracle: OracleView,
    test: Dataset,
    a0: ArchPoint,
    grid: SearchGrid,
    cfg: RunConfig,
    dropout_rate: float = 0.1,
    backend: Backend | None = None,
    checkpoint_dir=None,
):
    """Full active run: seed, then (search, retrain, evaluate, query) rounds.

    Labels are read exclusively through the oracle; the pool dataset's own
    label column is never touched, so a faulting oracle proves discipline.
    Returns (round records, final model).
    """
    backend = backend or default_backend()
    if a0 not in grid:
        raise ConfigError(f"start architecture {a0} outside the grid")
    if pool.labeled_idx.size:
        raise ConfigError("run_active expects a fresh pool with nothing labeled")
    if cfg.budget > pool.n_pool:
        raise ConfigError(f"budget {cfg.budget} exceeds pool of {pool.n_pool}")

    x_all = pool.dataset.features
    n_classes = pool.dataset.n_classes
    input_shape = x_all.shape[1:]
    block = grid.block

    def make_spec(arch):
        return NetworkSpec(arch, block, input_shape, n_classes, dropout_rate)

    rng = np.random.default_rng(derive_seed(cfg.seed, _SEED_INITIAL))
    first = rng.permutation(pool.unlabeled_idx)[: cfg.k]
    oracle.query(first)
    pool.add_labeled(first)

    records = []
    a_prev = a0
    model = None
    while True:
        t = pool.round
        tic = time.perf_counter()
        s_idx = pool.labeled_idx
        y_s = oracle.read(s_idx)

        if cfg.arch_mode == "search":
            result = inas_search(
                x_all[s_idx], y_s, a_prev, grid, cfg, make_spec, backend,
                derive_seed(cfg.seed, _SEED_SEARCH, t),
            )
            a_t = result.arch
            risks = result.risks
            val_risk = risks[a_t]
            cand_epochs = result.epochs_trained
            iterations = result.iterations
            exp_steps = result.expansion_steps
        else:
            a_t = a_prev
            risks = {}
            val_risk = float("nan")
            cand_epochs = 0
            iterations = 0
            exp_steps = 0

        assert depth(a_t, block) >= depth(a_prev, block), "architecture shrank"
        assert exp_steps <= cfg.t_inas, "more expansion steps than allowed"

        spec = make_spec(a_t)
        model = backend.build(spec, derive_seed(cfg.seed, _SEED_FINAL, t, 0))
        fit_cfg = replace(cfg.train_cfg, seed=derive_seed(cfg.seed, _SEED_FINAL, t, 1))
        backend.fit(model, x_all[s_idx], y_s, fit_cfg)
        test_error = model.evaluate(test.features, test.labels)

        records.append(
            RoundRecord(
                round=t,
                labels_used=int(s_idx.size),
                arch=a_t,
                candidate_val_risks=risks,
                val_risk=float(val_risk),
                test_error=float(test_error),
                wall_time_s=time.perf_counter() - tic,
                depth=depth(a_t, block),
                params=parameter_count(spec),
                epochs_trained=cand_epochs + _epochs_of(model, fit_cfg),
                search_iterations=iterations,
                expansion_steps=exp_steps,
            )
        )
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_model(model, path / f"round_{t:03d}.bin")

        a_prev = a_t
        if s_idx.size >= cfg.budget or pool.unlabeled_idx.size == 0:
            break

        b = min(
            cfg.batch_size_at(s_idx.size),
            cfg.budget - s_idx.size,
            pool.unlabeled_idx.size,
        )
        request = QueryRequest(
            model=model,
            labeled_idx=pool.labeled_idx,
            unlabeled_idx=pool.unlabeled_idx,
            batch=int(b),
            strategy=cfg.strategy,
            strategy_params=cfg.strategy_params,
            seed=derive_seed(cfg.seed, _SEED_QUERY, t),
        )
        queried = execute_query(request, x_all)
        oracle.query(queried)
        pool.add_labeled(queried)

    return records, model


ROUNDS_HEADER = (
    "round,labels_used,arch_i,arch_j,depth,params,val_risk,test_error,wall_time_s"
)


def save_run(records, out_dir, run_info: dict, final_model=None):
    """Write rounds.csv, run.json, and optionally the final checkpoint."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rounds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROUNDS_HEADER.split(","))
        for r in records:
            writer.writerow(
                [
                    r.round,
                    r.labels_used,
                    r.arch.i,
                    r.arch.j,
                    r.depth,
                    r.params,
                    r.val_risk,
                    r.test_error,
                    r.wall_time_s,
                ]
            )
    info = dict(run_info)
    final = records[-1]
    info["final_arch"] = {"i": final.arch.i, "j": final.arch.j}
    info["rounds"] = len(records)
    info["final_test_error"] = final.test_error
    with open(out / "run.json", "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if final_model is not None:
        save_model(final_model, out / "model_final.bin")
    return out
