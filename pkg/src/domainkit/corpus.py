"""Multi-domain corpus loading and hygiene.

Corpora are line-aligned plain-text files (one sentence per line, UTF-8).
A JSON manifest maps domain names to source/target files. The functions
here deduplicate pairs, audit train/dev/test overlap, cap oversized
corpora, and concatenate everything into a labeled general-domain pool.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


@dataclass
class SentenceRecord:
    id: int
    text: str
    domain: Optional[str] = None

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"record id must be non-negative, got {self.id}")
        if not self.text.strip():
            raise ValueError(f"record {self.id}: text is empty after trimming")


@dataclass
class ParallelPair:
    src: SentenceRecord
    tgt: Optional[SentenceRecord] = None

    def __post_init__(self):
        if self.tgt is not None and self.src.id != self.tgt.id:
            raise ValueError(
                f"pair ids disagree: src={self.src.id} tgt={self.tgt.id}"
            )


@dataclass
class DomainCorpus:
    domain: str
    pairs: list[ParallelPair] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def src_texts(self) -> list[str]:
        return [p.src.text for p in self.pairs]

    def ids(self) -> list[int]:
        return [p.src.id for p in self.pairs]


@dataclass
class OverlapReport:
    """Counts of dev/test source sentences that also occur in train."""

    domain: str
    dev_in_train: int
    test_in_train: int
    dev_size: int
    test_size: int

    @property
    def dev_fraction(self) -> float:
        return self.dev_in_train / self.dev_size if self.dev_size else 0.0

    @property
    def test_fraction(self) -> float:
        return self.test_in_train / self.test_size if self.test_size else 0.0

    def to_dict(self) -> dict:
        return {
            "dev_in_train": self.dev_in_train,
            "test_in_train": self.test_in_train,
            "dev_size": self.dev_size,
            "test_size": self.test_size,
            "dev_fraction": self.dev_fraction,
            "test_fraction": self.test_fraction,
        }


def _read_lines(path: Path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


def load_domain_corpus(manifest_path: str | Path) -> list[DomainCorpus]:
    """Load every domain listed in a JSON manifest.

    Manifest schema: {"domains": [{"name": str, "src": path, "tgt": path|null}]}.
    Relative paths resolve against the manifest's directory. Ids are
    0-based line numbers. Mismatched src/tgt line counts are rejected.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    base = manifest_path.parent

    corpora = []
    for entry in manifest["domains"]:
        name = entry["name"]
        src_path = base / entry["src"]
        if not src_path.exists():
            raise FileNotFoundError(f"domain {name!r}: missing source file {src_path}")
        src_lines = _read_lines(src_path)

        tgt_lines = None
        if entry.get("tgt"):
            tgt_path = base / entry["tgt"]
            if not tgt_path.exists():
                raise FileNotFoundError(f"domain {name!r}: missing target file {tgt_path}")
            tgt_lines = _read_lines(tgt_path)
            if len(tgt_lines) != len(src_lines):
                raise ValueError(
                    f"domain {name!r}: src has {len(src_lines)} lines but "
                    f"tgt has {len(tgt_lines)} lines"
                )

        pairs = []
        for i, src_text in enumerate(src_lines):
            try:
                src = SentenceRecord(id=i, text=src_text, domain=name)
                tgt = None
                if tgt_lines is not None:
                    tgt = SentenceRecord(id=i, text=tgt_lines[i], domain=name)
            except ValueError as exc:
                raise ValueError(f"domain {name!r}, line {i + 1}: {exc}") from exc
            pairs.append(ParallelPair(src=src, tgt=tgt))
        corpora.append(DomainCorpus(domain=name, pairs=pairs))
    return corpora


def dedup_pairs(corpus: DomainCorpus) -> tuple[DomainCorpus, int]:
    """Drop every pair whose source or target string was already seen.

    Matching is exact after stripping leading/trailing whitespace; order of
    the survivors is preserved. Returns the filtered corpus and the number
    of removed pairs.
    """
    seen_src: set[str] = set()
    seen_tgt: set[str] = set()
    kept = []
    removed = 0
    for pair in corpus.pairs:
        s = pair.src.text.strip()
        t = pair.tgt.text.strip() if pair.tgt is not None else None
        duplicate = s in seen_src or (t is not None and t in seen_tgt)
        seen_src.add(s)
        if t is not None:
            seen_tgt.add(t)
        if duplicate:
            removed += 1
        else:
            kept.append(pair)
    return DomainCorpus(domain=corpus.domain, pairs=kept), removed


def check_split_overlap(
    train: DomainCorpus, dev: DomainCorpus, test: DomainCorpus
) -> OverlapReport:
    """Count dev/test sentences whose source string also appears in train.

    Comparison is on the source side only, exact after whitespace trim.
    """
    train_src = {p.src.text.strip() for p in train.pairs}
    dev_hits = sum(1 for p in dev.pairs if p.src.text.strip() in train_src)
    test_hits = sum(1 for p in test.pairs if p.src.text.strip() in train_src)
    return OverlapReport(
        domain=train.domain,
        dev_in_train=dev_hits,
        test_in_train=test_hits,
        dev_size=len(dev.pairs),
        test_size=len(test.pairs),
    )


def cap_corpus(corpus: DomainCorpus, n: int, seed: int) -> DomainCorpus:
    """Cap a corpus to at most n pairs by uniform sampling without replacement.

    Identity when the corpus already fits. The sample is deterministic for a
    given seed and re-sorted by original id.
    """
    if n < 0:
        raise ValueError(f"cap size must be non-negative, got {n}")
    if len(corpus.pairs) <= n:
        return corpus
    rng = random.Random(seed)
    sampled = rng.sample(range(len(corpus.pairs)), n)
    pairs = [corpus.pairs[i] for i in sorted(sampled)]
    return DomainCorpus(domain=corpus.domain, pairs=pairs)


def build_general_pool(corpora: list[DomainCorpus]) -> DomainCorpus:
    """Concatenate domain corpora into one pool with fresh contiguous ids.

    Every record keeps the domain label of its originating corpus; selection
    methods must ignore it, oracle evaluation relies on it.
    """
    pairs = []
    next_id = 0
    for corpus in corpora:
        for pair in corpus.pairs:
            src = SentenceRecord(id=next_id, text=pair.src.text, domain=corpus.domain)
            tgt = None
            if pair.tgt is not None:
                tgt = SentenceRecord(id=next_id, text=pair.tgt.text, domain=corpus.domain)
            pairs.append(ParallelPair(src=src, tgt=tgt))
            next_id += 1
    return DomainCorpus(domain="general", pairs=pairs)


def write_corpus_files(corpus: DomainCorpus, src_path: str | Path,
                       tgt_path: str | Path | None = None) -> None:
    """Write a corpus back to line-aligned plain-text files."""
    with open(src_path, "w", encoding="utf-8") as f:
        for pair in corpus.pairs:
            f.write(pair.src.text + "\n")
    if tgt_path is not None:
        with open(tgt_path, "w", encoding="utf-8") as f:
            for pair in corpus.pairs:
                f.write(pair.tgt.text + "\n" if pair.tgt is not None else "\n")


def write_pool_files(pool: DomainCorpus, out_dir: str | Path) -> dict:
    """Write the pool as aligned src/tgt/labels text files; ids are line numbers."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    src_path = out_dir / "pool.src.txt"
    tgt_path = out_dir / "pool.tgt.txt"
    labels_path = out_dir / "pool.labels.txt"
    has_tgt = any(p.tgt is not None for p in pool.pairs)
    write_corpus_files(pool, src_path, tgt_path if has_tgt else None)
    with open(labels_path, "w", encoding="utf-8") as f:
        for pair in pool.pairs:
            f.write((pair.src.domain or "") + "\n")
    out = {"src": str(src_path), "labels": str(labels_path), "size": len(pool.pairs)}
    if has_tgt:
        out["tgt"] = str(tgt_path)
    return out


def read_labels(path: str | Path) -> list[str]:
    return _read_lines(Path(path))
