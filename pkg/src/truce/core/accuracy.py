"""Exact accuracy over per-sample outcome bits."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .types import DomainError


def compute_accuracy(outcomes: Sequence[int]) -> Fraction:
    """Exact rational (sum of z_i) / t; no floating-point drift."""
    if len(outcomes) == 0:
        raise DomainError("accuracy of an empty outcome list is undefined")
    bits = [int(b) for b in outcomes]
    if any(b not in (0, 1) for b in bits):
        raise DomainError("outcomes must be bits")
    return Fraction(sum(bits), len(bits))


def accuracy_json(acc: Fraction) -> dict:
    return {
        "numerator": acc.numerator,
        "denominator": acc.denominator,
        "decimal": float(acc),
    }
