"""Domain clustering of sentence embeddings and in-domain data selection."""

__version__ = "0.1.0"
