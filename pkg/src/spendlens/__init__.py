"""Spend-transparency analysis: ingest publisher files into a canonical
ledger, compute excess-transparency indices and fit rank-size models."""

__version__ = "0.1.0"
