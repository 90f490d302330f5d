"""Model catalog and loaders.

The service exposes a static catalog of configured models. Two kinds are
supported: ``transformer`` (any HuggingFace AutoModel, masked or
autoregressive) and ``word_vectors`` (a plain-text vector file; one token
per line followed by its coordinates, with an optional "count dim" header).
Word-vector models answer the same endpoint so clients need no special
casing.

Models load lazily on first use. The registry tracks in-flight loads and
the most recent failure so the health endpoint can report 503 while
loading and 500 after a failed load.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

FAMILIES = {"masked", "autoregressive", "word_vectors"}


class ModelLoadError(RuntimeError):
    pass


@dataclass
class ModelSpec:
    name: str
    source: str               # HF id, local model dir, or vector file path
    family: str               # masked | autoregressive | word_vectors
    kind: str = "transformer"  # transformer | word_vectors

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelSpec":
        spec = cls(
            name=raw["name"],
            source=raw["source"],
            family=raw.get("family", "masked"),
            kind=raw.get("kind", "transformer"),
        )
        if spec.family not in FAMILIES:
            raise ValueError(f"model {spec.name!r}: unknown family {spec.family!r}")
        if spec.kind not in ("transformer", "word_vectors"):
            raise ValueError(f"model {spec.name!r}: unknown kind {spec.kind!r}")
        return spec


class TransformerModel:
    def __init__(self, spec: ModelSpec, cache_dir: Optional[str], device: str):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.spec = spec
        self.device = torch.device(device)
        kwargs = {"cache_dir": cache_dir} if cache_dir else {}
        self.tokenizer = AutoTokenizer.from_pretrained(spec.source, **kwargs)
        self.model = AutoModel.from_pretrained(spec.source, **kwargs)
        self.model.to(self.device)
        self.model.eval()
        if self.tokenizer.pad_token is None:
            # autoregressive tokenizers often ship without one; padding is
            # masked out of the pooling either way
            self.tokenizer.pad_token = self.tokenizer.eos_token or self.tokenizer.unk_token
        self.hidden_size = int(self.model.config.hidden_size)
        self.n_hidden_states = int(getattr(self.model.config, "num_hidden_layers",
                                           getattr(self.model.config, "n_layer", 0))) + 1
        commit = getattr(self.model.config, "_commit_hash", None)
        self.revision = commit or "local"

    def embed(self, texts: list[str], layer: Optional[int]) -> list[list[float]]:
        import torch

        index = self._resolve_layer(layer)
        encoded = self.tokenizer(texts, return_tensors="pt", padding=True,
                                 truncation=True)
        encoded = {k: v.to(self.device) for k, v in encoded.items()}
        with torch.no_grad():
            output = self.model(**encoded, output_hidden_states=True)
        hidden = output.hidden_states[index]
        mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        summed = (hidden * mask).sum(dim=1)
        counts = mask.sum(dim=1).clamp(min=1.0)
        pooled = summed / counts
        return pooled.cpu().double().tolist()

    def _resolve_layer(self, layer: Optional[int]) -> int:
        if layer is None:
            return -1
        n = self.n_hidden_states
        if not -n <= layer < n:
            raise ValueError(
                f"layer {layer} out of range for {self.spec.name} "
                f"({n} hidden states)")
        return layer


class WordVectorModel:
    def __init__(self, spec: ModelSpec):
        self.spec = spec
        path = Path(spec.source)
        if not path.exists():
            raise ModelLoadError(f"vector file not found: {path}")
        self.vectors: dict[str, list[float]] = {}
        dim = None
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f):
                parts = line.rstrip("\n").split()
                if not parts:
                    continue
                if line_no == 0 and len(parts) == 2 and parts[0].isdigit():
                    continue  # "count dim" header
                token, coords = parts[0], [float(v) for v in parts[1:]]
                if dim is None:
                    dim = len(coords)
                elif len(coords) != dim:
                    raise ModelLoadError(
                        f"{path}: inconsistent vector length at line {line_no + 1}")
                self.vectors[token] = coords
        if dim is None:
            raise ModelLoadError(f"{path}: no vectors found")
        self.hidden_size = dim
        self.revision = hashlib.sha256(path.read_bytes()).hexdigest()[:12]

    def embed(self, texts: list[str], layer: Optional[int]) -> list[list[float]]:
        if layer is not None and layer != -1:
            raise ValueError(f"model {self.spec.name} has no hidden layers")
        out = []
        for text in texts:
            hits = [self.vectors[t] for t in text.lower().split() if t in self.vectors]
            if hits:
                out.append([sum(col) / len(hits) for col in zip(*hits)])
            else:
                out.append([0.0] * self.hidden_size)
        return out


@dataclass
class Registry:
    specs: dict[str, ModelSpec]
    cache_dir: Optional[str] = None
    device: str = "cpu"
    _models: dict = field(default_factory=dict)
    _sizes: dict = field(default_factory=dict)
    _locks: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    loading: set = field(default_factory=set)
    last_error: Optional[str] = None

    def list_models(self) -> list[dict]:
        entries = []
        for spec in self.specs.values():
            entries.append({
                "name": spec.name,
                "hidden_size": self.hidden_size_of(spec.name),
                "family": spec.family,
            })
        return entries

    def hidden_size_of(self, name: str) -> Optional[int]:
        """Hidden size from the model config alone; no weight load needed."""
        model = self._models.get(name)
        if model is not None:
            return model.hidden_size
        if name in self._sizes:
            return self._sizes[name]
        spec = self.specs[name]
        size: Optional[int] = None
        try:
            if spec.kind == "word_vectors":
                with open(spec.source, encoding="utf-8") as f:
                    for line_no, line in enumerate(f):
                        parts = line.split()
                        if not parts:
                            continue
                        if line_no == 0 and len(parts) == 2 and parts[0].isdigit():
                            size = int(parts[1])
                            break
                        size = len(parts) - 1
                        break
            else:
                from transformers import AutoConfig

                kwargs = {"cache_dir": self.cache_dir} if self.cache_dir else {}
                config = AutoConfig.from_pretrained(spec.source, **kwargs)
                size = int(config.hidden_size)
        except Exception:
            size = None
        self._sizes[name] = size
        return size

    def has(self, name: str) -> bool:
        return name in self.specs

    def model_lock(self, name: str) -> threading.Lock:
        with self._lock:
            return self._locks.setdefault(name, threading.Lock())

    def get(self, name: str):
        """Load on first use; per-model lock serializes inference and loading."""
        if name not in self.specs:
            raise KeyError(name)
        if name in self._models:
            return self._models[name]
        spec = self.specs[name]
        with self._lock:
            self.loading.add(name)
        try:
            if spec.kind == "word_vectors":
                model = WordVectorModel(spec)
            else:
                model = TransformerModel(spec, self.cache_dir, self.device)
        except Exception as exc:
            with self._lock:
                self.loading.discard(name)
                self.last_error = f"loading {name!r} failed: {exc}"
            raise ModelLoadError(self.last_error) from exc
        with self._lock:
            self._models[name] = model
            self.loading.discard(name)
            self.last_error = None
        return model

    def preload(self) -> None:
        for name in self.specs:
            self.get(name)


def load_registry(catalog_path: Optional[str] = None) -> Registry:
    """Build a registry from a JSON catalog file (or EMBED_SERVICE_MODELS)."""
    path = catalog_path or os.environ.get("EMBED_SERVICE_MODELS")
    specs: dict[str, ModelSpec] = {}
    if path:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        for item in raw:
            spec = ModelSpec.from_dict(item)
            specs[spec.name] = spec
    return Registry(
        specs=specs,
        cache_dir=os.environ.get("EMBED_SERVICE_CACHE_DIR"),
        device=os.environ.get("EMBED_SERVICE_DEVICE", "cpu"),
    )
