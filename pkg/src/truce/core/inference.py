"""Plaintext fixed-point MLP inference.

This is the reference oracle every other trust mode must agree with.
All arithmetic is over Z_{2^ring_bits}; products are rescaled with an
arithmetic right shift by f after every linear layer (the MPC local
truncation reproduces this rule to within 1 ulp).
"""

from __future__ import annotations

import numpy as np

from .fixedpoint import FixedPointConfig, DEFAULT_CONFIG, encode_array, signed_view, truncate_signed
from .types import DataPoint, Dataset, ModelSpec, ShapeError, Weights


def ring_matvec(w: np.ndarray, x: np.ndarray, cfg: FixedPointConfig) -> np.ndarray:
    """(t, d_in) batch times (d_out, d_in) matrix, wrapping mod 2^ring_bits."""
    prod = x[:, None, :].astype(np.uint64) * w[None, :, :].astype(np.uint64)
    out = prod.sum(axis=2, dtype=np.uint64)
    return out & np.uint64(cfg.mask)


def forward_logits(
    spec: ModelSpec, w: Weights, inputs: np.ndarray, cfg: FixedPointConfig = DEFAULT_CONFIG
) -> np.ndarray:
    """Fixed-point forward pass for a batch; returns (t, num_classes) ring elements at scale f."""
    w.validate(spec)
    if inputs.ndim != 2 or inputs.shape[1] != spec.num_features:
        raise ShapeError(f"inputs shape {inputs.shape} incompatible with {spec.layer_dims}")
    act = encode_array(inputs, cfg)
    for k, (mat, bias) in enumerate(zip(w.matrices, w.biases)):
        z = ring_matvec(mat, act, cfg)
        # bias is at scale f; lift to the product scale 2f before truncating
        z = (z + (bias.astype(np.uint64) << np.uint64(cfg.f))) & np.uint64(cfg.mask)
        z = truncate_signed(z, cfg.f, cfg)
        if k < spec.num_layers - 1:
            signed = signed_view(z, cfg)
            # ReLU with the drelu(0)=1 convention: relu(0)=0 either way
            z = np.where(signed < 0, np.uint64(0), z)
        act = z
    return act


def argmax_lowest(logits_signed: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties broken toward the lowest index."""
    return np.argmax(logits_signed, axis=-1)


def infer_plaintext(
    spec: ModelSpec, w: Weights, x: DataPoint, cfg: FixedPointConfig = DEFAULT_CONFIG
) -> int:
    """Predicted class index for a single point."""
    logits = forward_logits(spec, w, np.array([x.input], dtype=np.float64), cfg)
    return int(argmax_lowest(signed_view(logits, cfg))[0])


def predict_dataset(
    spec: ModelSpec, w: Weights, ds: Dataset, cfg: FixedPointConfig = DEFAULT_CONFIG
) -> np.ndarray:
    """Predicted class indices for every point of a dataset."""
    if ds.num_features != spec.num_features:
        raise ShapeError("dataset feature count does not match model input dim")
    if ds.num_classes != spec.num_classes:
        raise ShapeError("dataset class count does not match model output dim")
    logits = forward_logits(spec, w, ds.inputs_array(), cfg)
    return argmax_lowest(signed_view(logits, cfg))
