"""Two-party secure-computation topology behind the uniform executor API."""

from __future__ import annotations

import json
from typing import Optional

from ..core import Dataset, EvaluationRecord, MetricsRecord
from ..mpc import MpcSessionConfig, ProtocolAbort, run_local_mpc
from .errors import ExecutorAbort
from .flow import FlowTranscript
from .sources import InlineWeights


def run_mpc(
    request_id: str,
    model: InlineWeights,
    ds: Dataset,
    session: Optional[MpcSessionConfig] = None,
    flow: Optional[FlowTranscript] = None,
) -> EvaluationRecord:
    """Run the secure protocol; any abort fails the request with its step id."""
    session = session or MpcSessionConfig(cfg=model.cfg)
    try:
        result = run_local_mpc(model.spec, model.weights, ds, session)
    except ProtocolAbort as e:
        raise ExecutorAbort(e.step, str(e)) from e
    t = len(ds)
    rec = EvaluationRecord(
        request_id=request_id,
        trust_mode="mpc",
        accuracy=result.accuracy,
        metrics=MetricsRecord(
            time_per_sample_s=result.elapsed_s / t,
            num_samples=t,
            total_communication_bytes=result.total_payload_bytes,
        ),
        per_sample_outcomes=result.per_sample_outcomes,
        flags={"reveal_policy": session.reveal_policy},
    )
    if flow is not None:
        flow.record("model_owner", "dataset_owner", "shares", result.payload_bytes[0])
        flow.record("dataset_owner", "model_owner", "shares", result.payload_bytes[1])
        flow.record("dataset_owner", "platform", "record", len(json.dumps(rec.to_json())))
    return rec
