"""HTTP inference service for mean-pooled sentence embeddings."""

from .app import create_app
from .catalog import Registry, load_registry

__all__ = ["create_app", "Registry", "load_registry"]
__version__ = "0.1.0"
