"""Audits expressed as evaluation functions.

An audit function maps (per-sample predictions, labels) to a small output
(a pass bit, an aggregate score, ...). It runs inside the trusted locus of
the chosen mode, and only its output leaves; predictions and data stay
private.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..core import (
    Dataset,
    DomainError,
    FixedPointConfig,
    DEFAULT_CONFIG,
    ModelSpec,
    Weights,
    predict_dataset,
)

AuditFn = Callable[[np.ndarray, np.ndarray], object]

_PLAINTEXT_LOCUS_MODES = ("dataset_owner", "ttp", "tee")


def audit_as_evaluation(
    spec: ModelSpec,
    w: Weights,
    ds: Dataset,
    audit_fn: AuditFn,
    mode: str = "dataset_owner",
    cfg: FixedPointConfig = DEFAULT_CONFIG,
):
    """Run audit_fn over the model's predictions; reveal only its output.

    Supported in the modes whose trusted locus sees plaintext predictions
    (dataset owner, third party, enclave). The cryptographic mode reveals
    only aggregate accuracy, so arbitrary audit functions are out of its
    reach here.
    """
    if mode not in _PLAINTEXT_LOCUS_MODES:
        raise DomainError(f"audit-as-evaluation not supported in mode {mode!r}")
    preds = predict_dataset(spec, w, ds.quantized(cfg), cfg)
    labels = ds.labels_array()
    return audit_fn(preds, labels)


def accuracy_threshold_fn(threshold: float) -> AuditFn:
    def fn(preds: np.ndarray, labels: np.ndarray):
        return bool((preds == labels).mean() >= threshold)

    return fn


def accuracy_fn(preds: np.ndarray, labels: np.ndarray):
    from fractions import Fraction

    return Fraction(int((preds == labels).sum()), len(labels))


def recall_floor_fn(floor: float) -> AuditFn:
    """Pass iff every class with support reaches the recall floor."""

    def fn(preds: np.ndarray, labels: np.ndarray):
        for c in np.unique(labels):
            mask = labels == c
            if (preds[mask] == c).mean() < floor:
                return False
        return True

    return fn
