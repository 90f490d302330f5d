"""Sentence-embedding storage, transport, and PCA reduction.

On-disk format ("EMB1"): magic bytes ``EMB1``, dim as 32-bit little-endian
unsigned, count as 64-bit little-endian unsigned, then count*dim 32-bit
little-endian floats in row-major order. Sentence ids live in a sidecar
file at ``<path>.ids``, one id per line, aligned to rows.

Vectors come from an external HTTP provider (POST <base>/v1/embed); this
module only transports them. PCA is computed by SVD of the centered matrix.
"""

from __future__ import annotations

import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from .corpus import SentenceRecord

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIQ")


class EmbeddingFormatError(ValueError):
    """Raised for malformed EMB1 files."""


class ProviderError(RuntimeError):
    """Raised when the embedding provider rejects a request or misbehaves."""


@dataclass
class EmbeddingMatrix:
    """Dense row-major float32 sentence vectors with id-aligned rows."""

    ids: list[int]
    data: np.ndarray  # (count, dim) float32

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(f"data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] > 0 and self.data.shape[1] == 0:
            raise ValueError("non-empty matrix needs a positive dim")
        if len(self.ids) != self.data.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {self.data.shape[0]} rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        if self.data.size and not np.isfinite(self.data).all():
            raise ValueError("embedding matrix contains NaN or Inf")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row_index(self) -> dict[int, int]:
        return {sid: i for i, sid in enumerate(self.ids)}

    def take_ids(self, ids: Sequence[int]) -> "EmbeddingMatrix":
        """Sub-matrix for the given ids, in the given order."""
        index = self.row_index()
        rows = [index[i] for i in ids]
        return EmbeddingMatrix(ids=list(ids), data=self.data[rows])


@dataclass
class PcaModel:
    mean: np.ndarray        # (dim,)
    components: np.ndarray  # (n_components, dim), rows orthonormal
    n_components: int


def write_embeddings(m: EmbeddingMatrix, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, m.dim, m.count))
        f.write(m.data.astype("<f4", copy=False).tobytes(order="C"))
    with open(str(path) + ".ids", "w", encoding="utf-8") as f:
        for sid in m.ids:
            f.write(f"{sid}\n")


def read_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header")
    magic, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * dim * count
    if len(raw) != expected:
        raise EmbeddingFormatError(
            f"{path}: payload is {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)

    ids_path = Path(str(path) + ".ids")
    if not ids_path.exists():
        raise EmbeddingFormatError(f"missing ids sidecar {ids_path}")
    with open(ids_path, encoding="utf-8") as f:
        ids = [int(line) for line in f.read().splitlines() if line.strip()]
    if len(ids) != count:
        raise EmbeddingFormatError(
            f"{ids_path}: {len(ids)} ids for {count} rows"
        )
    return EmbeddingMatrix(ids=ids, data=data.copy())


def _post_batch(session: requests.Session, url: str, payload: dict,
                retries: int, backoff: float, timeout: float) -> dict:
    # Transient failures (connection errors, 5xx) are retried with
    # exponential backoff; provider-side 4xx errors are final.
    attempt = 0
    while True:
        try:
            resp = session.post(url, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            if attempt >= retries:
                raise ProviderError(f"connection to {url} failed after "
                                    f"{retries} retries: {exc}") from exc
        else:
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProviderError(
                        f"provider returned non-JSON body: {exc}") from exc
            if 400 <= resp.status_code < 500:
                raise ProviderError(
                    f"provider rejected request ({resp.status_code}): {resp.text}"
                )
            if attempt >= retries:
                raise ProviderError(
                    f"provider error {resp.status_code} after {retries} "
                    f"retries: {resp.text}"
                )
        time.sleep(backoff * (2 ** attempt))
        attempt += 1


def fetch_embeddings(
    endpoint: str,
    model: str,
    records: Sequence[SentenceRecord],
    batch_size: int,
    *,
    layer: Optional[int] = None,
    pooling: str = "mean_last_hidden",
    retries: int = 3,
    backoff: float = 0.5,
    timeout: float = 120.0,
    max_concurrency: int = 1,
) -> EmbeddingMatrix:
    """Fetch one vector per record from an embedding provider, in input order.

    ``endpoint`` is the provider base URL; requests go to ``/v1/embed`` in
    batches of ``batch_size``. Batches may be issued concurrently but rows
    are reassembled in input order. An empty record list returns a 0x0
    matrix without touching the network.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not records:
        return EmbeddingMatrix(ids=[], data=np.zeros((0, 0), dtype=np.float32))

    url = endpoint.rstrip("/") + "/v1/embed"
    batches = [records[i:i + batch_size] for i in range(0, len(records), batch_size)]
    session = requests.Session()

    def run_batch(batch):
        payload = {
            "model": model,
            "texts": [r.text for r in batch],
            "pooling": pooling,
        }
        if layer is not None:
            payload["layer"] = layer
        body = _post_batch(session, url, payload, retries, backoff, timeout)
        try:
            vectors = np.asarray(body["vectors"], dtype=np.float64)
            dim = int(body["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc
        if vectors.ndim != 2 or vectors.shape[0] != len(batch):
            raise ProviderError(
                f"provider returned {vectors.shape[0] if vectors.ndim == 2 else '?'} "
                f"vectors for {len(batch)} texts"
            )
        if vectors.shape[1] != dim:
            raise ProviderError("provider dim field disagrees with vectors")
        return vectors

    if max_concurrency > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            results = list(pool.map(run_batch, batches))
    else:
        results = [run_batch(b) for b in batches]

    dim = results[0].shape[1]
    for r in results[1:]:
        if r.shape[1] != dim:
            raise ProviderError(
                f"provider dim changed across batches: {dim} vs {r.shape[1]}"
            )
    data = np.vstack(results).astype(np.float32)
    return EmbeddingMatrix(ids=[r.id for r in records], data=data)


def fit_pca(m: EmbeddingMatrix, n_components: int) -> PcaModel:
    """Fit PCA by SVD of the centered matrix.

    Components are the top right singular vectors ordered by descending
    singular value, with each component's largest-magnitude coordinate made
    positive so fits are reproducible.
    """
    if m.count < 2:
        raise ValueError(f"need at least 2 rows to fit PCA, got {m.count}")
    if not 1 <= n_components <= min(m.count, m.dim):
        raise ValueError(
            f"n_components must be in [1, {min(m.count, m.dim)}], got {n_components}"
        )
    x = m.data.astype(np.float64)
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:n_components]
    # Sign convention: flip each component so its largest-|coord| is positive.
    pivot = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(n_components), pivot])
    signs[signs == 0] = 1.0
    components = components * signs[:, None]
    return PcaModel(mean=mean, components=components, n_components=n_components)


def apply_pca(p: PcaModel, m: EmbeddingMatrix) -> EmbeddingMatrix:
    if m.dim != p.mean.shape[0]:
        raise ValueError(f"matrix dim {m.dim} != PCA dim {p.mean.shape[0]}")
    projected = (m.data.astype(np.float64) - p.mean) @ p.components.T
    return EmbeddingMatrix(ids=list(m.ids), data=projected.astype(np.float32))
