"""Ranking a general-domain pool by in-domain relevance.

Four methods produce a total order over pool sentence ids:

* cosine: similarity to the mean in-domain embedding (query vector),
* classifier: a logistic model trained on the in-domain seed set as
  positives and pool sentences sampled as negatives, optionally biased
  away from the top of a cosine pre-ranking,
* moore_lewis: cross-entropy difference between in-domain and general
  n-gram language models (lower is better),
* random: a seeded uniform permutation baseline.

Ties always break toward the smaller sentence id so rankings are
reproducible bit-for-bit.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import SentenceRecord
from .embeddings import EmbeddingMatrix
from .ngram import NgramModel, moore_lewis_score

ASCENDING_METHODS = {"moore_lewis"}


@dataclass
class SelectionRanking:
    method: str
    entries: list[tuple[int, float]]  # (sentence id, score), best first

    def ids(self) -> list[int]:
        return [sid for sid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class ClassifierModel:
    weights: np.ndarray  # (dim,)
    bias: float
    epochs: int
    lr: float
    seed: int
    positive_ids: list[int] = field(default_factory=list)
    negative_ids: list[int] = field(default_factory=list)

    def scores(self, m: EmbeddingMatrix) -> np.ndarray:
        if m.dim != self.weights.shape[0]:
            raise ValueError(f"matrix dim {m.dim} != classifier dim "
                             f"{self.weights.shape[0]}")
        return m.data.astype(np.float64) @ self.weights + self.bias


def _sorted_entries(ids: Sequence[int], scores: Sequence[float],
                    method: str) -> list[tuple[int, float]]:
    ascending = method in ASCENDING_METHODS
    key = (lambda e: (e[1], e[0])) if ascending else (lambda e: (-e[1], e[0]))
    return sorted(zip(ids, scores), key=key)


def rank_cosine(in_domain: EmbeddingMatrix, pool: EmbeddingMatrix) -> SelectionRanking:
    """Rank pool rows by cosine similarity to the mean in-domain vector.

    Zero-norm pool rows score -1 (below every real similarity).
    """
    if in_domain.count == 0:
        raise ValueError("in-domain matrix is empty")
    if in_domain.dim != pool.dim:
        raise ValueError(f"dim mismatch: in-domain {in_domain.dim}, pool {pool.dim}")
    query = in_domain.data.astype(np.float64).mean(axis=0)
    qnorm = np.linalg.norm(query)
    if qnorm == 0:
        raise ValueError("in-domain query vector has zero norm")
    x = pool.data.astype(np.float64)
    norms = np.linalg.norm(x, axis=1)
    scores = np.full(pool.count, -1.0)
    nz = norms > 0
    scores[nz] = (x[nz] @ query) / (norms[nz] * qnorm)
    return SelectionRanking("cosine", _sorted_entries(pool.ids, scores, "cosine"))


def sample_negatives_preranked(ranking: SelectionRanking, n: int, seed: int) -> set[int]:
    """Sample n ids uniformly from the bottom two-thirds of a ranking.

    Eligible positions are those strictly below the top third
    (position > ceil(len/3), 1-indexed). Deterministic for a given seed.
    """
    cutoff = math.ceil(len(ranking.entries) / 3)
    eligible = [sid for sid, _ in ranking.entries[cutoff:]]
    if n > len(eligible):
        raise ValueError(f"requested {n} negatives but only {len(eligible)} "
                         f"ids are below the pre-ranking threshold")
    rng = random.Random(seed)
    return set(rng.sample(eligible, n))


def sample_uniform(ids: Sequence[int], n: int, seed: int) -> set[int]:
    """Unbiased baseline sampler used for the pre-ranking ablation."""
    if n > len(ids):
        raise ValueError(f"requested {n} of {len(ids)} ids")
    rng = random.Random(seed)
    return set(rng.sample(list(ids), n))


def train_pu_classifier(pos: EmbeddingMatrix, neg: EmbeddingMatrix,
                        epochs: int = 20, lr: float = 0.1, seed: int = 0,
                        l2: float = 1e-4) -> ClassifierModel:
    """Train a logistic linear classifier on positive vs. sampled-negative rows.

    Features are standardized with the combined training set's per-coordinate
    mean and variance (variance floored at 1e-8); full-batch gradient descent
    on the L2-penalized logistic loss. The standardization is folded into the
    returned weights so scoring works on raw embeddings.
    """
    if pos.count == 0 or neg.count == 0:
        raise ValueError("need non-empty positive and negative sets")
    if pos.dim != neg.dim:
        raise ValueError(f"dim mismatch: pos {pos.dim}, neg {neg.dim}")

    x = np.vstack([pos.data, neg.data]).astype(np.float64)
    y = np.concatenate([np.ones(pos.count), -np.ones(neg.count)])
    mean = x.mean(axis=0)
    var = np.maximum(x.var(axis=0), 1e-8)
    std = np.sqrt(var)
    z = (x - mean) / std

    w = np.zeros(z.shape[1])
    b = 0.0
    n = z.shape[0]
    for _ in range(epochs):
        margins = y * (z @ w + b)
        # d/dm log(1+exp(-m)) = -sigmoid(-m)
        coef = -y * _sigmoid(-margins)
        grad_w = z.T @ coef / n + 2 * l2 * w
        grad_b = coef.sum() / n
        w -= lr * grad_w
        b -= lr * grad_b

    w_raw = w / std
    b_raw = b - float(w_raw @ mean)
    return ClassifierModel(weights=w_raw, bias=b_raw, epochs=epochs, lr=lr,
                           seed=seed, positive_ids=list(pos.ids),
                           negative_ids=list(neg.ids))


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def rank_classifier(c: ClassifierModel, pool: EmbeddingMatrix) -> SelectionRanking:
    """Rank by the raw (pre-sigmoid) linear score, best first."""
    scores = c.scores(pool)
    return SelectionRanking("classifier",
                            _sorted_entries(pool.ids, scores, "classifier"))


def select_positive(c: ClassifierModel, pool: EmbeddingMatrix) -> set[int]:
    """Ids classified in-domain: sigmoid(score) >= 0.5, i.e. linear score >= 0."""
    scores = c.scores(pool)
    return {sid for sid, s in zip(pool.ids, scores) if s >= 0.0}


def rank_moore_lewis(lm_in: NgramModel, lm_gen: NgramModel,
                     pool_texts: Sequence[SentenceRecord]) -> SelectionRanking:
    """Rank by cross-entropy difference, most in-domain (lowest score) first."""
    ids = [r.id for r in pool_texts]
    scores = [moore_lewis_score(lm_in, lm_gen, r.text) for r in pool_texts]
    return SelectionRanking("moore_lewis",
                            _sorted_entries(ids, scores, "moore_lewis"))


def rank_random(pool_ids: Sequence[int], seed: int) -> SelectionRanking:
    """Seeded uniform permutation of the pool ids."""
    rng = random.Random(seed)
    scores = [rng.random() for _ in pool_ids]
    return SelectionRanking("random", _sorted_entries(pool_ids, scores, "random"))


def select_top_k(r: SelectionRanking, k: int) -> set[int]:
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return {sid for sid, _ in r.entries[:k]}


def write_ranking_tsv(r: SelectionRanking, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("rank\tid\tscore\tmethod\n")
        for rank, (sid, score) in enumerate(r.entries, start=1):
            f.write(f"{rank}\t{sid}\t{score:.10g}\t{r.method}\n")


def write_selection(ids: set[int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sid in sorted(ids):
            f.write(f"{sid}\n")


def read_selection(path: str | Path) -> set[int]:
    with open(path, encoding="utf-8") as f:
        return {int(line) for line in f.read().splitlines() if line.strip()}
