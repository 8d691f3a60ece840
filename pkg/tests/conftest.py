"""Shared generators for random MLPs and argmax-separated datasets."""

import numpy as np

from truce.core import (
    DEFAULT_CONFIG,
    DataPoint,
    Dataset,
    ModelSpec,
    Weights,
    forward_logits,
    signed_view,
)


def make_mlp(rng: np.random.Generator, dims):
    """Random MLP with row-norm-bounded weights (keeps truncation noise small)."""
    spec = ModelSpec(tuple(dims))
    mats, biases = [], []
    for k in range(spec.num_layers):
        fan_in = dims[k]
        mats.append(rng.uniform(-4.0 / fan_in, 4.0 / fan_in, (dims[k + 1], dims[k])))
        biases.append(rng.uniform(-0.1, 0.1, dims[k + 1]))
    return spec, Weights.from_float(mats, biases)


def make_separated_dataset(spec, w, rng: np.random.Generator, t, min_gap_ulp=64, cfg=DEFAULT_CONFIG, name="gen"):
    """Dataset whose plaintext top-2 logit gap exceeds min_gap_ulp ulps.

    Labels are the plaintext predictions on roughly half the points (so
    accuracy is interesting but deterministic).
    """
    points = []
    while len(points) < t:
        batch = rng.uniform(-1, 1, (4 * t, spec.num_features))
        logits = signed_view(forward_logits(spec, w, batch, cfg), cfg)
        srt = np.sort(logits, axis=1)
        gap = srt[:, -1] - srt[:, -2] if spec.num_classes > 1 else np.full(len(batch), 1 << 30)
        good = np.nonzero(gap > min_gap_ulp)[0]
        for i in good:
            if len(points) >= t:
                break
            pred = int(np.argmax(logits[i]))
            label = pred if rng.random() < 0.5 else int(rng.integers(spec.num_classes))
            points.append(DataPoint(tuple(batch[i]), label).quantized(cfg))
    return Dataset(tuple(points), name, spec.num_features, spec.num_classes)
