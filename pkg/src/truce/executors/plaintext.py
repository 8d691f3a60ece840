"""Trusted-dataset-owner and trusted-third-party evaluation topologies.

Both evaluate in the clear after the artifacts travel along their mode's
arrows: the dataset-owner mode ships only the model; the third-party mode
ships both payloads to the executor, which evaluates, returns only the
record, and logs deletion of everything it held.
"""

from __future__ import annotations

import io
import json
import time
from fractions import Fraction
from typing import Optional

import numpy as np

from ..core import (
    Dataset,
    DEFAULT_CONFIG,
    EvaluationRecord,
    FixedPointConfig,
    MetricsRecord,
    dataset_payload_bytes,
    model_from_json,
    model_payload_bytes,
    predict_dataset,
    read_dataset_jsonl,
)
from ..audit import MerkleRoot, verify_committed_dataset
from .errors import ExecutorError, RefusalError
from .flow import FlowTranscript
from .sources import InlineWeights


def _evaluate_clear(source: InlineWeights, ds: Dataset):
    preds = predict_dataset(source.spec, source.weights, ds, source.cfg)
    z = (preds == ds.labels_array()).astype(int)
    return Fraction(int(z.sum()), len(ds)), tuple(int(b) for b in z)


def _record(request_id, mode, acc, z, t, comm_bytes, elapsed, flags, per_sample=True):
    return EvaluationRecord(
        request_id=request_id,
        trust_mode=mode,
        accuracy=acc,
        metrics=MetricsRecord(
            time_per_sample_s=elapsed / t, num_samples=t, total_communication_bytes=comm_bytes
        ),
        per_sample_outcomes=z if per_sample else None,
        flags=flags,
    )


def run_dataset_owner(
    request_id: str,
    model: InlineWeights,
    ds: Dataset,
    committed_root: Optional[MerkleRoot] = None,
    salts: Optional[tuple] = None,
    flow: Optional[FlowTranscript] = None,
) -> EvaluationRecord:
    """Model ships to the dataset owner; evaluation is local to them."""
    if len(ds) < 1:
        raise ExecutorError("empty dataset")
    start = time.perf_counter()
    model_bytes = model_payload_bytes(model.spec, model.weights, model.cfg)
    if flow is not None:
        flow.record("model_owner", "dataset_owner", "model", len(model_bytes))
    if committed_root is not None:
        if salts is None or not verify_committed_dataset(committed_root, ds, salts, model.cfg):
            raise RefusalError(
                "dataset does not match its registered commitment root; refusing to evaluate"
            )
    acc, z = _evaluate_clear(model, ds)
    elapsed = time.perf_counter() - start
    rec = _record(
        request_id,
        "dataset_owner",
        acc,
        z,
        len(ds),
        len(model_bytes),
        elapsed,
        {"weights_revealed_to_dataset_owner": True},
    )
    if flow is not None:
        flow.record("dataset_owner", "platform", "record", len(json.dumps(rec.to_json())))
    return rec


class TtpExecutor:
    """A third party that receives both payloads, evaluates, then deletes.

    Per-job instance: payloads arrive via submit_*; run() refuses until
    both are present, and the deletion of every held byte is logged.
    """

    def __init__(self, request_id: str, cfg: FixedPointConfig = DEFAULT_CONFIG):
        self.request_id = request_id
        self.cfg = cfg
        self._model_payload: Optional[bytes] = None
        self._dataset_payload: Optional[bytes] = None
        self.deletion_log: list = []

    def submit_model(self, payload: bytes) -> None:
        self._model_payload = payload

    def submit_dataset(self, payload: bytes) -> None:
        self._dataset_payload = payload

    def run(
        self,
        committed_root: Optional[MerkleRoot] = None,
        salts: Optional[tuple] = None,
    ) -> EvaluationRecord:
        if self._model_payload is None or self._dataset_payload is None:
            missing = "model" if self._model_payload is None else "dataset"
            raise ExecutorError(f"timeout waiting for the {missing} payload; no partial results")
        try:
            spec, w, cfg = model_from_json(json.loads(self._model_payload))
            ds = read_dataset_jsonl(io.StringIO(self._dataset_payload.decode()), self.cfg)
        except (ValueError, KeyError) as e:
            raise ExecutorError(f"malformed payload: {e}") from e
        comm = len(self._model_payload) + len(self._dataset_payload)
        if committed_root is not None:
            if salts is None or not verify_committed_dataset(committed_root, ds, salts, self.cfg):
                self._delete()
                raise RefusalError(
                    "dataset does not match its registered commitment root; refusing to evaluate"
                )
        start = time.perf_counter()
        acc, z = _evaluate_clear(InlineWeights(spec, w, self.cfg), ds)
        elapsed = time.perf_counter() - start
        rec = _record(self.request_id, "ttp", acc, z, len(ds), comm, elapsed, {})
        self._delete()
        return rec

    def _delete(self) -> None:
        for name in ("model", "dataset"):
            if getattr(self, f"_{name}_payload") is not None:
                setattr(self, f"_{name}_payload", None)
                self.deletion_log.append(f"deleted {name} payload for {self.request_id}")


def run_ttp(
    request_id: str,
    model: InlineWeights,
    ds: Dataset,
    committed_root: Optional[MerkleRoot] = None,
    salts: Optional[tuple] = None,
    flow: Optional[FlowTranscript] = None,
    executor: Optional[TtpExecutor] = None,
) -> EvaluationRecord:
    """Both payloads ship to a third-party executor; only the record returns."""
    if len(ds) < 1:
        raise ExecutorError("empty dataset")
    executor = executor or TtpExecutor(request_id, model.cfg)
    model_bytes = model_payload_bytes(model.spec, model.weights, model.cfg)
    ds_bytes = dataset_payload_bytes(ds)
    if flow is not None:
        flow.record("model_owner", "executor", "model", len(model_bytes))
        flow.record("dataset_owner", "executor", "dataset", len(ds_bytes))
    executor.submit_model(model_bytes)
    executor.submit_dataset(ds_bytes)
    rec = executor.run(committed_root=committed_root, salts=salts)
    if flow is not None:
        blob = len(json.dumps(rec.to_json()))
        flow.record("executor", "platform", "record", blob)
        flow.record("executor", "model_owner", "record", blob)
        flow.record("executor", "dataset_owner", "record", blob)
    return rec
