"""Query strategies for pool-based labeling: uncertainty, coverage, random.

All selection rules are deterministic given their inputs and seed; ties are
always broken toward the smaller index so runs are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

STRATEGIES = ("softmax-response", "mc-dropout", "coreset", "random")

DEFAULT_MC_PASSES = 16


def softmax_response_scores(probs) -> np.ndarray:
    """Uncertainty as 1 - max class probability, per row."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise DataError(f"expected a 2-D probability matrix, got shape {probs.shape}")
    if np.any(probs < -1e-9) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-5):
        raise DataError("rows must be probability distributions summing to 1")
    return 1.0 - probs.max(axis=1)


def mc_dropout_scores(pass_stack) -> np.ndarray:
    """Uncertainty of the mean predictive distribution across dropout passes."""
    stack = np.asarray(pass_stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise DataError(f"expected a (t, n, c) stack with t >= 1, got shape {stack.shape}")
    return softmax_response_scores(stack.mean(axis=0))


def select_top_uncertain(scores, b: int, seed=None) -> np.ndarray:
    """Indices of the b largest scores, descending, ties toward smaller index.

    seed is accepted for interface symmetry with the stochastic strategies;
    selection itself is deterministic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if b > scores.size:
        raise DataError(f"cannot select {b} of {scores.size} points")
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:b]


def coreset_select(labeled_emb, unlabeled_emb, b: int) -> np.ndarray:
    """Greedy k-center in embedding space; returns row indices into unlabeled.

    Repeats b times: pick the unlabeled point with the largest squared
    Euclidean distance to its nearest covered point (labeled plus already
    selected), ties toward smaller index.  With no labeled points the first
    pick is row 0.
    """
    labeled = np.asarray(labeled_emb, dtype=np.float64)
    pool = np.asarray(unlabeled_emb, dtype=np.float64)
    if pool.ndim != 2:
        raise DataError(f"unlabeled embeddings must be 2-D, got shape {pool.shape}")
    if labeled.size == 0:
        labeled = labeled.reshape(0, pool.shape[1])
    if labeled.ndim != 2 or labeled.shape[1] != pool.shape[1]:
        raise DataError(
            f"embedding dimensions disagree: {labeled.shape} vs {pool.shape}"
        )
    if b > pool.shape[0]:
        raise DataError(f"cannot select {b} of {pool.shape[0]} points")

    min_d = np.full(pool.shape[0], np.inf)
    for point in labeled:
        np.minimum(min_d, ((pool - point) ** 2).sum(axis=1), out=min_d)

    chosen = []
    for _ in range(b):
        pick = 0 if np.all(np.isinf(min_d)) else int(np.argmax(min_d))
        chosen.append(pick)
        np.minimum(min_d, ((pool - pool[pick]) ** 2).sum(axis=1), out=min_d)
    return np.array(chosen, dtype=np.int64)


def random_query(unlabeled_idx, b: int, seed) -> np.ndarray:
    """Uniform sample of b indices without replacement, deterministic by seed."""
    unlabeled = np.asarray(unlabeled_idx)
    if b > unlabeled.size:
        raise DataError(f"cannot query {b} of {unlabeled.size} unlabeled points")
    rng = np.random.default_rng(seed)
    return rng.choice(unlabeled, size=b, replace=False)


@dataclass(frozen=True)
class QueryRequest:
    """One batch query: which strategy, over which pool split, how many."""

    model: object
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    batch: int
    strategy: str
    strategy_params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; known: {STRATEGIES}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        labeled = set(np.asarray(self.labeled_idx).tolist())
        unlabeled = set(np.asarray(self.unlabeled_idx).tolist())
        if labeled & unlabeled:
            raise ConfigError("labeled and unlabeled index sets overlap")
        if self.batch > len(unlabeled):
            raise ConfigError(
                f"batch {self.batch} exceeds unlabeled pool of {len(unlabeled)}"
            )


def execute_query(request: QueryRequest, features) -> np.ndarray:
    """Run the strategy and return the queried dataset indices (b of them)."""
    unlabeled = np.asarray(request.unlabeled_idx)
    b = request.batch
    if request.strategy == "random":
        return random_query(unlabeled, b, request.seed)
    if request.strategy == "softmax-response":
        probs = request.model.predict_proba(features[unlabeled])
        local = select_top_uncertain(softmax_response_scores(probs), b)
    elif request.strategy == "mc-dropout":
        t_passes = request.strategy_params.get("t_passes", DEFAULT_MC_PASSES)
        stack = request.model.predict_proba_mc(
            features[unlabeled], t_passes, seed=request.seed
        )
        local = select_top_uncertain(mc_dropout_scores(stack), b)
    else:  # coreset
        labeled = np.asarray(request.labeled_idx)
        labeled_emb = request.model.embed(features[labeled])
        unlabeled_emb = request.model.embed(features[unlabeled])
        local = coreset_select(labeled_emb, unlabeled_emb, b)
    return unlabeled[local]
