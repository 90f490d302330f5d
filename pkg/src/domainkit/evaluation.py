"""Scoring selections against oracle labels and correlation analyses.

Selections are compared to the oracle (every pool sentence whose true
domain matches the target) with precision/recall/F1. Classifier quality is
measured on held-out embeddings at the 0.5 threshold. Domain-pair centroid
similarities are correlated with a BLEU fixture table (BLEU is never
computed here; it arrives as JSON {model_domain: {test_domain: number}}).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clustering import PurityReport, write_confusion_csv
from .embeddings import EmbeddingMatrix
from .selection import ClassifierModel


@dataclass
class EvalReport:
    domain: str
    precision: float
    recall: float
    f1: float
    true_positives: int
    selected: int
    relevant: int

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "true_positives": self.true_positives,
            "selected": self.selected,
            "relevant": self.relevant,
        }


@dataclass
class CorrelationReport:
    pairs: list[tuple[str, str, float, float]]  # (domain_a, domain_b, cosine, bleu)
    pearson_r: float

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "pearson_r": self.pearson_r,
        }


def _prf(tp: int, selected: int, relevant: int) -> tuple[float, float, float]:
    p = tp / selected if selected else 0.0
    r = tp / relevant if relevant else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def selection_pr(selected: set[int], pool_labels: Mapping[int, str],
                 target_domain: str) -> EvalReport:
    """Precision/recall/F1 of a selection against the oracle for one domain."""
    unknown = selected - pool_labels.keys()
    if unknown:
        raise ValueError(f"selected ids not in pool: {sorted(unknown)[:5]}"
                         f"{'...' if len(unknown) > 5 else ''}")
    relevant = {sid for sid, d in pool_labels.items() if d == target_domain}
    tp = len(selected & relevant)
    p, r, f1 = _prf(tp, len(selected), len(relevant))
    return EvalReport(domain=target_domain, precision=p, recall=r, f1=f1,
                      true_positives=tp, selected=len(selected),
                      relevant=len(relevant))


def classifier_holdout_eval(c: ClassifierModel, held_pos: EmbeddingMatrix,
                            held_neg: EmbeddingMatrix) -> dict:
    """Threshold-0.5 binary metrics on held-out rows, positives as targets.

    Held-out ids must be disjoint from the classifier's training ids.
    """
    if held_pos.count == 0 and held_neg.count == 0:
        raise ValueError("held-out set is empty")
    train_ids = set(c.positive_ids) | set(c.negative_ids)
    overlap = (set(held_pos.ids) | set(held_neg.ids)) & train_ids
    if overlap:
        raise ValueError(f"held-out rows overlap training data: "
                         f"{sorted(overlap)[:5]}")
    tp = int((c.scores(held_pos) >= 0).sum()) if held_pos.count else 0
    fp = int((c.scores(held_neg) >= 0).sum()) if held_neg.count else 0
    p, r, f1 = _prf(tp, tp + fp, held_pos.count)
    return {"precision": p, "recall": r, "f1": f1}


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least 2 points")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(xc @ xc)
    sy = float(yc @ yc)
    if sx == 0 or sy == 0:
        raise ValueError("zero variance input")
    return float((xc @ yc) / math.sqrt(sx * sy))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("zero-norm centroid")
    return float(a @ b / (na * nb))


def correlate_centroids_bleu(centroids: Mapping[str, np.ndarray],
                             bleu_table: Mapping[str, Mapping[str, float]]) -> CorrelationReport:
    """Pair centroid cosines with cross-domain BLEU over all ordered domain pairs.

    Diagonal pairs (same domain, cosine 1) are included. Both inputs must
    cover the same domain set.
    """
    domains = sorted(centroids)
    if sorted(bleu_table) != domains:
        raise ValueError(f"BLEU table domains {sorted(bleu_table)} != "
                         f"centroid domains {domains}")
    pairs = []
    for a in domains:
        for b in domains:
            if b not in bleu_table[a]:
                raise ValueError(f"BLEU table missing entry [{a}][{b}]")
            cos = _cosine(np.asarray(centroids[a], dtype=np.float64),
                          np.asarray(centroids[b], dtype=np.float64))
            pairs.append((a, b, cos, float(bleu_table[a][b])))
    r = pearson([p[2] for p in pairs], [p[3] for p in pairs])
    return CorrelationReport(pairs=pairs, pearson_r=r)


def load_bleu_fixture(path: str | Path) -> dict[str, dict[str, float]]:
    with open(path, encoding="utf-8") as f:
        table = json.load(f)
    return {m: {t: float(v) for t, v in row.items()} for m, row in table.items()}


def emit_plot_data(kind: str, inputs: dict, out_path: str | Path) -> Path:
    """Write plot-ready CSV for one of the supported figure kinds.

    * scatter2d: needs {"matrix": 2-component EmbeddingMatrix,
      "domains": per-row domain names, "clusters": optional per-row ints};
      columns id,x,y,domain,cluster.
    * confusion: needs {"report": PurityReport}.
    * correlation: needs {"report": CorrelationReport};
      columns domain_a,domain_b,cosine,bleu.
    """
    out_path = Path(out_path)
    if kind == "scatter2d":
        m: EmbeddingMatrix = inputs["matrix"]
        if m.dim != 2:
            raise ValueError(f"scatter2d needs exactly 2 components, got {m.dim}")
        domains = inputs["domains"]
        clusters = inputs.get("clusters")
        if len(domains) != m.count:
            raise ValueError(f"{len(domains)} domains for {m.count} rows")
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["id", "x", "y", "domain", "cluster"])
            for i, sid in enumerate(m.ids):
                cluster = "" if clusters is None else int(clusters[i])
                writer.writerow([sid, repr(float(m.data[i, 0])),
                                 repr(float(m.data[i, 1])), domains[i], cluster])
    elif kind == "confusion":
        report: PurityReport = inputs["report"]
        write_confusion_csv(report, out_path)
    elif kind == "correlation":
        corr: CorrelationReport = inputs["report"]
        with open(out_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["domain_a", "domain_b", "cosine", "bleu"])
            for a, b, cos, bleu in corr.pairs:
                writer.writerow([a, b, repr(cos), repr(bleu)])
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    return out_path
