"""Tabular-to-text encoding, small LM training, embeddings, and clustering reports."""

__version__ = "0.1.0"
