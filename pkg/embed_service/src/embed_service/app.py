"""FastAPI application exposing the embedding wire protocol.

POST /v1/embed   {model, texts, pooling, layer?} -> {dim, vectors, model_revision}
GET  /v1/models  -> [{name, hidden_size, family}]
GET  /healthz    -> 200 ok | 503 loading | 500 after a failed load

Pooling is the token-wise mean of the requested layer's hidden states over
real tokens: padding is excluded, special boundary tokens are included.
"""

from __future__ import annotations

import math
import os
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .catalog import ModelLoadError, Registry, load_registry

POOLING_MODES = {"mean_last_hidden"}
DEFAULT_BATCH_CAP = 256


class EmbedRequest(BaseModel):
    model: str
    texts: list[str]
    pooling: str = "mean_last_hidden"
    layer: Optional[int] = None


class EmbedResponse(BaseModel):
    dim: int
    vectors: list[list[float]]
    model_revision: str


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def create_app(registry: Optional[Registry] = None,
               batch_cap: Optional[int] = None) -> FastAPI:
    reg = registry if registry is not None else load_registry()
    cap = batch_cap or int(os.environ.get("EMBED_SERVICE_BATCH_CAP",
                                          DEFAULT_BATCH_CAP))
    app = FastAPI(title="embed-service")
    app.state.registry = reg
    app.state.batch_cap = cap

    @app.post("/v1/embed")
    def embed(request: EmbedRequest):
        if request.pooling not in POOLING_MODES:
            return _error(400, f"unknown pooling {request.pooling!r}")
        if not reg.has(request.model):
            return _error(400, f"unknown model {request.model!r}")
        if not request.texts:
            return _error(400, "texts must be non-empty")
        if any(not t.strip() for t in request.texts):
            return _error(400, "texts must not contain empty strings")
        if len(request.texts) > cap:
            return _error(413, f"batch of {len(request.texts)} exceeds cap {cap}")
        try:
            model = reg.get(request.model)
        except ModelLoadError as exc:
            return _error(500, str(exc))
        lock = reg.model_lock(request.model)
        try:
            with lock:
                vectors = model.embed(request.texts, request.layer)
        except ValueError as exc:  # bad layer for this model
            return _error(400, str(exc))
        except Exception as exc:
            return _error(500, f"inference failed: {type(exc).__name__}: {exc}")
        if any(not math.isfinite(v) for row in vectors for v in row):
            return _error(500, "inference produced non-finite values")
        return EmbedResponse(dim=model.hidden_size, vectors=vectors,
                             model_revision=model.revision)

    @app.get("/v1/models")
    def models():
        return reg.list_models()

    @app.get("/healthz")
    def healthz():
        if reg.loading:
            return JSONResponse(status_code=503, content={"status": "loading"})
        if reg.last_error is not None:
            return JSONResponse(status_code=500,
                                content={"status": "error",
                                         "reason": reg.last_error})
        return {"status": "ok"}

    return app
