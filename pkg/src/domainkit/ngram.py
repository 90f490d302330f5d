"""Interpolated Kneser-Ney n-gram language models for cross-entropy scoring.

Tokenization is lowercased whitespace splitting. Tokens rarer than
``min_count`` are mapped to ``<unk>`` before counting; sentences are padded
with ``<s>`` context markers and a terminating ``</s>``.

The highest order uses raw counts; every lower order uses continuation
counts (number of distinct one-token left extensions observed one level
up). Each level interpolates an absolute-discounted estimate with the
level below; the unigram level interpolates with the uniform distribution
over the predictable vocabulary, so every in-vocabulary token keeps
non-zero probability and each context's conditional distribution sums to
one exactly.

Scores are natural-log cross-entropies per scored token (the sentence
tokens plus ``</s>``). The Moore-Lewis score of a sentence is its
cross-entropy under the in-domain model minus that under the general
model; lower means more in-domain.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"

Gram = tuple[str, ...]


@dataclass
class NgramModel:
    order: int
    vocab: set[str]                      # includes <unk>, <s>, </s>
    min_count: int
    discount: float
    counts: list[dict[Gram, int]]        # level l grams at index l-1
    context_totals: list[dict[Gram, int]]
    context_types: list[dict[Gram, int]]

    @property
    def predictable_vocab_size(self) -> int:
        # <s> is context-only and never predicted
        return len(self.vocab) - 1

    def tokenize(self, sentence: str) -> list[str]:
        tokens = sentence.lower().split()
        return [t if t in self.vocab else UNK for t in tokens]

    def _unigram_prob(self, token: str) -> float:
        total = self._uni_total
        if total == 0:
            return 1.0 / self.predictable_vocab_size
        count = self.counts[0].get((token,), 0)
        types = self._uni_types
        discounted = max(count - self.discount, 0.0) / total
        smoothing = self.discount * types / total / self.predictable_vocab_size
        return discounted + smoothing

    def prob(self, token: str, context: Sequence[str]) -> float:
        """P(token | context), backing off through shorter contexts."""
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        return self._prob(token, context, len(context) + 1)

    def _prob(self, token: str, context: Gram, level: int) -> float:
        if level == 1:
            return self._unigram_prob(token)
        table = self.counts[level - 1]
        total = self.context_totals[level - 1].get(context, 0)
        if total == 0:
            return self._prob(token, context[1:], level - 1)
        count = table.get(context + (token,), 0)
        types = self.context_types[level - 1][context]
        lower = self._prob(token, context[1:], level - 1)
        return (max(count - self.discount, 0.0) / total
                + self.discount * types / total * lower)

    def log_prob(self, token: str, context: Sequence[str]) -> float:
        return math.log(self.prob(token, context))

    def __post_init__(self):
        self._uni_total = sum(self.counts[0].values())
        self._uni_types = sum(1 for v in self.counts[0].values() if v > 0)

    def save_text(self, path: str | Path) -> None:
        """Sorted text dump: one line per gram with its conditional log-prob
        and the context's backoff weight, for diffable golden files."""
        lines = []
        for level in range(1, self.order + 1):
            for gram in sorted(self.counts[level - 1]):
                context, token = gram[:-1], gram[-1]
                logp = math.log(self._prob(token, context, level))
                if level < self.order:
                    total = self.context_totals[level].get(gram, 0)
                    if total > 0:
                        types = self.context_types[level][gram]
                        backoff = math.log(self.discount * types / total)
                    else:
                        backoff = 0.0
                else:
                    backoff = 0.0
                lines.append(
                    f"{' '.join(context)}\t{token}\t{logp:.8f}\t{backoff:.8f}"
                )
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + ("\n" if lines else ""))


def train_lm(sentences: Iterable[str], order: int, min_count: int = 2,
             discount: float = 0.75) -> NgramModel:
    """Train an interpolated Kneser-Ney model of the given order."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if not 0.0 < discount < 1.0:
        raise ValueError(f"discount must be in (0, 1), got {discount}")

    tokenized = [s.lower().split() for s in sentences]
    tokenized = [t for t in tokenized if t]
    if not tokenized:
        raise ValueError("training corpus has no non-empty sentences")

    freq = Counter(tok for sent in tokenized for tok in sent)
    kept = {tok for tok, c in freq.items() if c >= min_count}
    vocab = kept | {UNK, BOS, EOS}
    mapped = [[t if t in kept else UNK for t in sent] for sent in tokenized]

    counts: list[dict[Gram, int]] = [defaultdict(int) for _ in range(order)]
    top = counts[order - 1]
    for sent in mapped:
        padded = [BOS] * (order - 1) + sent + [EOS]
        for end in range(order - 1, len(padded)):
            top[tuple(padded[end - order + 1:end + 1])] += 1

    # Continuation counts: distinct one-token left extensions one level up.
    for level in range(order - 1, 0, -1):
        above = counts[level]
        extensions: dict[Gram, set[str]] = defaultdict(set)
        for gram in above:
            extensions[gram[1:]].add(gram[0])
        for gram, exts in extensions.items():
            counts[level - 1][gram] = len(exts)

    context_totals: list[dict[Gram, int]] = [defaultdict(int) for _ in range(order)]
    context_types: list[dict[Gram, int]] = [defaultdict(int) for _ in range(order)]
    for level in range(1, order + 1):
        for gram, count in counts[level - 1].items():
            context = gram[:-1]
            context_totals[level - 1][context] += count
            context_types[level - 1][context] += 1

    return NgramModel(
        order=order,
        vocab=vocab,
        min_count=min_count,
        discount=discount,
        counts=[dict(t) for t in counts],
        context_totals=[dict(t) for t in context_totals],
        context_types=[dict(t) for t in context_types],
    )


def cross_entropy(lm: NgramModel, sentence: str) -> float:
    """Mean negative log-probability (nats) per scored token.

    Scores the sentence tokens plus </s>; <s> padding is context only, so
    an empty sentence scores the single </s> event.
    """
    tokens = lm.tokenize(sentence)
    padded = [BOS] * (lm.order - 1) + tokens + [EOS]
    total = 0.0
    n_events = len(tokens) + 1
    for i in range(n_events):
        pos = lm.order - 1 + i
        context = tuple(padded[pos - lm.order + 1:pos]) if lm.order > 1 else ()
        total -= lm.log_prob(padded[pos], context)
    return total / n_events


def moore_lewis_score(lm_in: NgramModel, lm_gen: NgramModel, sentence: str) -> float:
    """Cross-entropy difference; lower scores are more in-domain."""
    return cross_entropy(lm_in, sentence) - cross_entropy(lm_gen, sentence)
