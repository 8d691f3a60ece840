"""Domain types: datasets, model descriptions, weights, evaluation records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .fixedpoint import FixedPointConfig, DEFAULT_CONFIG, encode_array, quantize


class ShapeError(ValueError):
    """Dimension mismatch between model, weights, or data."""


class DomainError(ValueError):
    """Input outside the operation's domain."""


@dataclass(frozen=True)
class DataPoint:
    """One benchmark point: a feature vector and a 0-based class label."""

    input: tuple
    label: int

    def __post_init__(self):
        object.__setattr__(self, "input", tuple(float(v) for v in self.input))
        if not all(math.isfinite(v) for v in self.input):
            raise DomainError("non-finite feature value")
        if self.label < 0:
            raise DomainError("label must be non-negative")

    def quantized(self, cfg: FixedPointConfig = DEFAULT_CONFIG) -> "DataPoint":
        """Snap features onto the fixed-point grid used by the session."""
        return DataPoint(tuple(quantize(v, cfg) for v in self.input), self.label)


@dataclass(frozen=True)
class Dataset:
    """Ordered benchmark points with a shared schema."""

    points: tuple
    name: str
    num_features: int
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.num_features < 1 or self.num_classes < 1:
            raise DomainError("num_features and num_classes must be positive")
        for p in self.points:
            if len(p.input) != self.num_features:
                raise ShapeError(
                    f"point has {len(p.input)} features, expected {self.num_features}"
                )
            if p.label >= self.num_classes:
                raise DomainError(f"label {p.label} >= num_classes {self.num_classes}")

    def __len__(self) -> int:
        return len(self.points)

    def quantized(self, cfg: FixedPointConfig = DEFAULT_CONFIG) -> "Dataset":
        return Dataset(
            tuple(p.quantized(cfg) for p in self.points),
            self.name,
            self.num_features,
            self.num_classes,
        )

    def inputs_array(self) -> np.ndarray:
        return np.array([p.input for p in self.points], dtype=np.float64)

    def labels_array(self) -> np.ndarray:
        return np.array([p.label for p in self.points], dtype=np.int64)


@dataclass(frozen=True)
class ModelSpec:
    """MLP architecture: ReLU on hidden layers, identity on the output."""

    layer_dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if len(self.layer_dims) < 2:
            raise ShapeError("need at least input and output dims")
        if any(d < 1 for d in self.layer_dims):
            raise ShapeError("layer dims must be positive")

    @property
    def num_features(self) -> int:
        return self.layer_dims[0]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def hidden_units(self) -> int:
        return sum(self.layer_dims[1:-1])


@dataclass(frozen=True)
class Weights:
    """Per-layer weight matrices and biases as ring elements at scale 2^f.

    matrices[k] has shape (d_{k+1}, d_k); biases[k] has shape (d_{k+1},).
    """

    matrices: tuple
    biases: tuple

    @staticmethod
    def from_float(
        matrices: Sequence, biases: Sequence, cfg: FixedPointConfig = DEFAULT_CONFIG
    ) -> "Weights":
        return Weights(
            tuple(encode_array(m, cfg) for m in matrices),
            tuple(encode_array(b, cfg) for b in biases),
        )

    def validate(self, spec: ModelSpec) -> None:
        dims = spec.layer_dims
        if len(self.matrices) != spec.num_layers or len(self.biases) != spec.num_layers:
            raise ShapeError("wrong number of layers")
        for k, (w, b) in enumerate(zip(self.matrices, self.biases)):
            if w.shape != (dims[k + 1], dims[k]):
                raise ShapeError(f"layer {k}: weight shape {w.shape} != {(dims[k+1], dims[k])}")
            if b.shape != (dims[k + 1],):
                raise ShapeError(f"layer {k}: bias shape {b.shape} != {(dims[k+1],)}")


TRUST_MODES = ("model_api", "dataset_owner", "ttp", "tee", "mpc")


@dataclass
class MetricsRecord:
    """Evaluation metrics mirroring the leaderboard columns."""

    time_per_sample_s: float
    num_samples: int
    total_communication_bytes: int

    def __post_init__(self):
        if self.time_per_sample_s < 0 or self.num_samples < 0 or self.total_communication_bytes < 0:
            raise DomainError("metrics must be non-negative")

    def to_json(self) -> dict:
        return {
            "time_per_sample_s": self.time_per_sample_s,
            "num_samples": self.num_samples,
            "total_communication_bytes": self.total_communication_bytes,
        }


@dataclass
class EvaluationRecord:
    """Outcome of one evaluation run."""

    request_id: str
    trust_mode: str
    accuracy: Fraction
    metrics: MetricsRecord
    per_sample_outcomes: Optional[tuple] = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trust_mode not in TRUST_MODES:
            raise DomainError(f"unknown trust mode {self.trust_mode!r}")
        if not (0 <= self.accuracy <= 1):
            raise DomainError("accuracy outside [0, 1]")
        if self.per_sample_outcomes is not None:
            z = tuple(int(b) for b in self.per_sample_outcomes)
            if self.accuracy != Fraction(sum(z), len(z)):
                raise DomainError("accuracy inconsistent with per-sample outcomes")
            self.per_sample_outcomes = z

    def to_json(self) -> dict:
        return {
            "request_id": self.request_id,
            "trust_mode": self.trust_mode,
            "accuracy": {
                "numerator": self.accuracy.numerator,
                "denominator": self.accuracy.denominator,
                "decimal": float(self.accuracy),
            },
            "metrics": self.metrics.to_json(),
            "per_sample_outcomes": (
                list(self.per_sample_outcomes) if self.per_sample_outcomes is not None else None
            ),
            "flags": self.flags,
        }
