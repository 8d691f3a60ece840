from .fixedpoint import (
    DEFAULT_CONFIG,
    FixedPointConfig,
    FixedPointError,
    decode_array,
    decode_fixed,
    encode_array,
    encode_fixed,
    quantize,
    signed_view,
    truncate_signed,
)
from .types import (
    TRUST_MODES,
    DataPoint,
    Dataset,
    DomainError,
    EvaluationRecord,
    MetricsRecord,
    ModelSpec,
    ShapeError,
    Weights,
)
from .encoding import EncodingError, canonical_decode, canonical_encode
from .accuracy import accuracy_json, compute_accuracy
from .inference import forward_logits, infer_plaintext, predict_dataset
from .io import (
    dataset_payload_bytes,
    load_dataset,
    load_model,
    model_from_json,
    model_payload_bytes,
    model_to_json,
    read_dataset_jsonl,
    save_dataset,
    save_model,
    write_dataset_jsonl,
)

__all__ = [
    "dataset_payload_bytes",
    "load_dataset",
    "load_model",
    "model_from_json",
    "model_payload_bytes",
    "model_to_json",
    "read_dataset_jsonl",
    "save_dataset",
    "save_model",
    "write_dataset_jsonl",
    "DEFAULT_CONFIG",
    "FixedPointConfig",
    "FixedPointError",
    "DataPoint",
    "Dataset",
    "DomainError",
    "EvaluationRecord",
    "MetricsRecord",
    "ModelSpec",
    "ShapeError",
    "Weights",
    "TRUST_MODES",
    "EncodingError",
    "canonical_decode",
    "canonical_encode",
    "accuracy_json",
    "compute_accuracy",
    "forward_logits",
    "infer_plaintext",
    "predict_dataset",
    "encode_fixed",
    "decode_fixed",
    "encode_array",
    "decode_array",
    "signed_view",
    "truncate_signed",
    "quantize",
]
