"""File formats: JSON-lines datasets and JSON model files."""

from __future__ import annotations

import json
from typing import TextIO, Tuple

import numpy as np

from .fixedpoint import FixedPointConfig, DEFAULT_CONFIG
from .types import DataPoint, Dataset, ModelSpec, Weights


def write_dataset_jsonl(ds: Dataset, fh: TextIO) -> None:
    fh.write(
        json.dumps(
            {"name": ds.name, "num_features": ds.num_features, "num_classes": ds.num_classes}
        )
        + "\n"
    )
    for p in ds.points:
        fh.write(json.dumps({"input": list(p.input), "label": p.label}) + "\n")


def read_dataset_jsonl(fh: TextIO, cfg: FixedPointConfig = DEFAULT_CONFIG) -> Dataset:
    """Load a dataset; features are quantized onto the session's fixed-point grid."""
    header = json.loads(fh.readline())
    points = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        points.append(DataPoint(tuple(obj["input"]), int(obj["label"])).quantized(cfg))
    return Dataset(tuple(points), header["name"], int(header["num_features"]), int(header["num_classes"]))


def load_dataset(path: str, cfg: FixedPointConfig = DEFAULT_CONFIG) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return read_dataset_jsonl(fh, cfg)


def save_dataset(ds: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_dataset_jsonl(ds, fh)


def model_to_json(spec: ModelSpec, w: Weights, cfg: FixedPointConfig = DEFAULT_CONFIG) -> dict:
    """Float rendering of quantized weights; quantized again (losslessly) on load."""
    from .fixedpoint import decode_array

    return {
        "layer_dims": list(spec.layer_dims),
        "weights": [decode_array(m, cfg).tolist() for m in w.matrices],
        "biases": [decode_array(b, cfg).tolist() for b in w.biases],
        "f": cfg.f,
    }


def model_from_json(obj: dict) -> Tuple[ModelSpec, Weights, FixedPointConfig]:
    cfg = FixedPointConfig(f=int(obj.get("f", DEFAULT_CONFIG.f)))
    spec = ModelSpec(tuple(obj["layer_dims"]))
    w = Weights.from_float(
        [np.asarray(m, dtype=np.float64) for m in obj["weights"]],
        [np.asarray(b, dtype=np.float64) for b in obj["biases"]],
        cfg,
    )
    w.validate(spec)
    return spec, w, cfg


def load_model(path: str) -> Tuple[ModelSpec, Weights, FixedPointConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))


def save_model(spec: ModelSpec, w: Weights, path: str, cfg: FixedPointConfig = DEFAULT_CONFIG) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(spec, w, cfg), fh)


def model_payload_bytes(spec: ModelSpec, w: Weights, cfg: FixedPointConfig = DEFAULT_CONFIG) -> bytes:
    """The byte payload shipped when a mode transfers the model."""
    return json.dumps(model_to_json(spec, w, cfg), sort_keys=True).encode()


def dataset_payload_bytes(ds: Dataset) -> bytes:
    """The byte payload shipped when a mode transfers the dataset."""
    import io as _io

    buf = _io.StringIO()
    write_dataset_jsonl(ds, buf)
    return buf.getvalue().encode()
