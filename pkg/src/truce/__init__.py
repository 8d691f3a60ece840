"""TRUCE: private benchmarking of classifier models under five trust modes."""

__version__ = "0.1.0"
