"""Full-covariance Gaussian mixture clustering and purity evaluation.

EM runs from a k-means initialization (k-means++ seeding plus a short Lloyd
refinement, both driven by one seed) and stops once the per-sample mean
log-likelihood improves by less than ``tol`` or ``max_iter`` is reached.
Covariances get 1e-6 added to their diagonals at every M-step so 50-dim
fits on a few thousand points stay positive-definite.

Purity assigns each cluster its majority true domain and scores the
resulting labeling as accuracy. Outliers are the rows whose assigned
cluster carries a different majority domain than their own.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .corpus import SentenceRecord
from .embeddings import EmbeddingMatrix, write_embeddings, read_embeddings

COV_FLOOR = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GmmModel:
    k: int
    weights: np.ndarray              # (k,)
    means: np.ndarray                # (k, dim)
    covariances: np.ndarray          # (k, dim, dim)
    log_likelihood_trace: list[float]
    seed: int

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class ClusterAssignment:
    hard_labels: np.ndarray       # (count,) int
    responsibilities: np.ndarray  # (count, k)


@dataclass
class PurityReport:
    purity: float
    cluster_to_domain: list[str]     # majority domain per cluster index
    domains: list[str]               # sorted; confusion row/column order
    confusion: np.ndarray            # (n_domains, n_domains) int counts

    def to_dict(self) -> dict:
        return {
            "purity": self.purity,
            "cluster_to_domain": self.cluster_to_domain,
            "domains": self.domains,
            "confusion": self.confusion.tolist(),
        }


@dataclass
class OutlierReport:
    outliers: list[tuple[int, str, str]]  # (sentence id, true domain, assigned domain)
    mean_token_len_outliers: float
    mean_token_len_all: float
    attracting_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "outliers": [list(o) for o in self.outliers],
            "mean_token_len_outliers": self.mean_token_len_outliers,
            "mean_token_len_all": self.mean_token_len_all,
            "attracting_counts": self.attracting_counts,
        }


def _log_gaussian(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of N(mean, cov) at each row of x, via Cholesky."""
    dim = x.shape[1]
    chol = np.linalg.cholesky(cov)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    solved = solve_triangular(chol, (x - mean).T, lower=True)
    maha = np.sum(solved ** 2, axis=0)
    return -0.5 * (dim * _LOG_2PI + log_det + maha)


def _weighted_log_prob(x: np.ndarray, g: GmmModel) -> np.ndarray:
    """(count, k) matrix of log(weight_c) + log N(x | mean_c, cov_c)."""
    out = np.empty((x.shape[0], g.k))
    log_w = np.log(np.maximum(g.weights, 1e-300))
    for c in range(g.k):
        out[:, c] = log_w[c] + _log_gaussian(x, g.means[c], g.covariances[c])
    return out


def _pairwise_sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    x_sq = np.sum(x ** 2, axis=1)[:, None]
    c_sq = np.sum(centers ** 2, axis=1)[None, :]
    return np.maximum(x_sq - 2.0 * (x @ centers.T) + c_sq, 0.0)


def _kmeans_init(x: np.ndarray, k: int, rng: np.random.RandomState,
                 lloyd_iters: int = 10) -> np.ndarray:
    """Greedy k-means++ seeding plus a short Lloyd refinement; returns labels.

    Each new center is chosen among several D^2-sampled candidates by the
    inertia it leaves behind, which makes seeding robust to near-isotropic
    high-dimensional clusters.
    """
    n = x.shape[0]
    n_trials = 2 + int(np.log(k)) if k > 1 else 1
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.randint(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            candidates = rng.randint(n, size=n_trials)
        else:
            candidates = rng.choice(n, size=n_trials, p=d2 / total)
        cand_d2 = np.minimum(d2[:, None], _pairwise_sq_dists(x, x[candidates]))
        best = int(np.argmin(cand_d2.sum(axis=0)))
        centers[c] = x[candidates[best]]
        d2 = cand_d2[:, best]

    labels = np.zeros(n, dtype=int)
    for _ in range(lloyd_iters):
        new_labels = np.argmin(_pairwise_sq_dists(x, centers), axis=1)
        for c in range(k):
            mask = new_labels == c
            if mask.any():
                centers[c] = x[mask].mean(axis=0)
        if (new_labels == labels).all():
            labels = new_labels
            break
        labels = new_labels
    return labels


def _m_step(x: np.ndarray, resp: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, dim = x.shape
    k = resp.shape[1]
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    covariances = np.empty((k, dim, dim))
    for c in range(k):
        diff = x - means[c]
        cov = (resp[:, c][:, None] * diff).T @ diff / nk[c]
        cov = 0.5 * (cov + cov.T)
        cov[np.diag_indices(dim)] += COV_FLOOR
        covariances[c] = cov
    return weights, means, covariances


def fit_gmm(m: EmbeddingMatrix, k: int, seed: int,
            max_iter: int = 150, tol: float = 1e-3) -> GmmModel:
    """Fit a k-component full-covariance GMM by EM."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if m.count < k:
        raise ValueError(f"need at least k={k} rows, got {m.count}")
    x = m.data.astype(np.float64)
    if not np.isfinite(x).all():
        raise ValueError("embedding matrix contains non-finite values")

    rng = np.random.RandomState(seed)
    labels = _kmeans_init(x, k, rng)
    resp = np.zeros((m.count, k))
    resp[np.arange(m.count), labels] = 1.0
    weights, means, covariances = _m_step(x, resp)

    model = GmmModel(k=k, weights=weights, means=means, covariances=covariances,
                     log_likelihood_trace=[], seed=seed)
    prev_ll = -np.inf
    for _ in range(max_iter):
        weighted = _weighted_log_prob(x, model)
        log_norm = logsumexp(weighted, axis=1)
        mean_ll = float(log_norm.mean())
        model.log_likelihood_trace.append(mean_ll)
        if mean_ll - prev_ll < tol:
            break
        prev_ll = mean_ll
        resp = np.exp(weighted - log_norm[:, None])
        model.weights, model.means, model.covariances = _m_step(x, resp)
    return model


def assign(g: GmmModel, m: EmbeddingMatrix) -> ClusterAssignment:
    """Posterior responsibilities and argmax hard labels (ties -> lowest index)."""
    if m.dim != g.dim:
        raise ValueError(f"matrix dim {m.dim} != model dim {g.dim}")
    weighted = _weighted_log_prob(m.data.astype(np.float64), g)
    log_norm = logsumexp(weighted, axis=1)
    resp = np.exp(weighted - log_norm[:, None])
    return ClusterAssignment(hard_labels=np.argmax(resp, axis=1),
                             responsibilities=resp)


def purity(a: ClusterAssignment, labels: Sequence[str]) -> PurityReport:
    """Majority-domain purity plus the domain-level confusion matrix.

    Each cluster is assigned its most common true domain (ties break to the
    lexicographically smallest name); purity is the accuracy of that
    relabeling. Confusion rows are true domains, columns the majority
    domain of the assigned cluster.
    """
    n = len(labels)
    if n == 0:
        raise ValueError("empty input")
    if n != a.hard_labels.shape[0]:
        raise ValueError(f"{n} labels for {a.hard_labels.shape[0]} rows")

    domains = sorted(set(labels))
    k = a.responsibilities.shape[1]
    counts = [Counter() for _ in range(k)]
    for cluster, domain in zip(a.hard_labels, labels):
        counts[cluster][domain] += 1

    cluster_to_domain = []
    majority_total = 0
    for c in range(k):
        if counts[c]:
            # max count, ties to the lexicographically smallest domain name
            top = max(counts[c].values())
            best_domain = min(d for d, v in counts[c].items() if v == top)
            cluster_to_domain.append(best_domain)
            majority_total += top
        else:
            cluster_to_domain.append(domains[0])

    dom_index = {d: i for i, d in enumerate(domains)}
    confusion = np.zeros((len(domains), len(domains)), dtype=int)
    for cluster, domain in zip(a.hard_labels, labels):
        confusion[dom_index[domain], dom_index[cluster_to_domain[cluster]]] += 1

    return PurityReport(
        purity=majority_total / n,
        cluster_to_domain=cluster_to_domain,
        domains=domains,
        confusion=confusion,
    )


def run_seed_sweep(m: EmbeddingMatrix, k: int, seeds: Sequence[int],
                   labels: Sequence[str], max_iter: int = 150,
                   tol: float = 1e-3) -> dict:
    """Refit the GMM once per seed and report purity mean and sample variance."""
    if not seeds:
        raise ValueError("need at least one seed")
    purities = []
    for seed in seeds:
        model = fit_gmm(m, k, seed, max_iter=max_iter, tol=tol)
        purities.append(purity(assign(model, m), labels).purity)
    mean = sum(purities) / len(purities)
    if len(purities) > 1:
        variance = sum((p - mean) ** 2 for p in purities) / (len(purities) - 1)
    else:
        variance = 0.0
    return {"purities": purities, "mean": mean, "variance": variance}


def outlier_report(a: ClusterAssignment, labels: Sequence[str],
                   records: Sequence[SentenceRecord]) -> OutlierReport:
    """Collect rows assigned to a cluster of another domain.

    Token lengths are whitespace-split counts; attracting_counts tallies
    outliers by the domain that absorbed them.
    """
    if not (len(labels) == len(records) == a.hard_labels.shape[0]):
        raise ValueError("labels, records, and assignment must be aligned")
    report = purity(a, labels)
    outliers = []
    attracting: Counter = Counter()
    out_lens = []
    all_lens = []
    for rec, cluster, true_domain in zip(records, a.hard_labels, labels):
        n_tokens = len(rec.text.split())
        all_lens.append(n_tokens)
        assigned_domain = report.cluster_to_domain[cluster]
        if assigned_domain != true_domain:
            outliers.append((rec.id, true_domain, assigned_domain))
            attracting[assigned_domain] += 1
            out_lens.append(n_tokens)
    return OutlierReport(
        outliers=outliers,
        mean_token_len_outliers=float(np.mean(out_lens)) if out_lens else 0.0,
        mean_token_len_all=float(np.mean(all_lens)) if all_lens else 0.0,
        attracting_counts=dict(attracting),
    )


def centroid(m: EmbeddingMatrix, row_subset: Iterable[int]) -> np.ndarray:
    """Element-wise mean of the rows with the given sentence ids."""
    subset = list(row_subset)
    if not subset:
        raise ValueError("empty id subset")
    index = m.row_index()
    rows = [index[i] for i in subset]
    return m.data[rows].astype(np.float64).mean(axis=0)


def save_gmm(g: GmmModel, stem: str | Path) -> dict:
    """Persist a model as <stem>.json plus EMB1 blocks for means/covariances."""
    stem = Path(stem)
    header = {
        "k": g.k,
        "dim": g.dim,
        "seed": g.seed,
        "weights": g.weights.tolist(),
        "log_likelihood_trace": g.log_likelihood_trace,
    }
    json_path = stem.with_suffix(".json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2, sort_keys=True)
    means_path = str(stem) + ".means.emb"
    covs_path = str(stem) + ".covs.emb"
    write_embeddings(EmbeddingMatrix(ids=list(range(g.k)),
                                     data=g.means.astype(np.float32)), means_path)
    covs_flat = g.covariances.reshape(g.k * g.dim, g.dim).astype(np.float32)
    write_embeddings(EmbeddingMatrix(ids=list(range(g.k * g.dim)), data=covs_flat),
                     covs_path)
    return {"json": str(json_path), "means": means_path, "covariances": covs_path}


def load_gmm(stem: str | Path) -> GmmModel:
    stem = Path(stem)
    with open(stem.with_suffix(".json"), encoding="utf-8") as f:
        header = json.load(f)
    means = read_embeddings(str(stem) + ".means.emb").data.astype(np.float64)
    covs = read_embeddings(str(stem) + ".covs.emb").data.astype(np.float64)
    k, dim = header["k"], header["dim"]
    return GmmModel(
        k=k,
        weights=np.asarray(header["weights"], dtype=np.float64),
        means=means,
        covariances=covs.reshape(k, dim, dim),
        log_likelihood_trace=list(header["log_likelihood_trace"]),
        seed=header["seed"],
    )


def write_confusion_csv(report: PurityReport, path: str | Path) -> None:
    """Confusion matrix as CSV: header row of assigned domains, one row per true domain."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("true_domain," + ",".join(report.domains) + "\n")
        for i, domain in enumerate(report.domains):
            f.write(domain + "," + ",".join(str(v) for v in report.confusion[i]) + "\n")
