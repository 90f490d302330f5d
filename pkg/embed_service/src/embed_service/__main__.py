"""Run the service: ``python -m embed_service`` or the embed-service script.

Environment:
  EMBED_SERVICE_MODELS     path to the JSON model catalog (required)
  EMBED_SERVICE_PORT       listen port (default 8601)
  EMBED_SERVICE_HOST       bind address (default 127.0.0.1)
  EMBED_SERVICE_BATCH_CAP  max texts per request (default 256)
  EMBED_SERVICE_CACHE_DIR  model cache directory
  EMBED_SERVICE_DEVICE     torch device (default cpu)
  EMBED_SERVICE_PRELOAD    "1" to load every model before serving
"""

import os

import uvicorn

from .app import create_app
from .catalog import load_registry


def main() -> None:
    registry = load_registry()
    if os.environ.get("EMBED_SERVICE_PRELOAD") == "1":
        registry.preload()
    app = create_app(registry)
    uvicorn.run(app,
                host=os.environ.get("EMBED_SERVICE_HOST", "127.0.0.1"),
                port=int(os.environ.get("EMBED_SERVICE_PORT", "8601")))


if __name__ == "__main__":
    main()
