"""Evaluation-request lifecycle: a closed state machine with declared edges."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class RequestState(str, Enum):
    REQUESTED = "Requested"
    APPROVED = "Approved"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"
    REFUSED = "Refused"


TRANSITIONS = {
    RequestState.REQUESTED: {RequestState.APPROVED, RequestState.REFUSED},
    RequestState.APPROVED: {RequestState.RUNNING},
    RequestState.RUNNING: {RequestState.COMPLETED, RequestState.FAILED},
    RequestState.COMPLETED: set(),
    RequestState.FAILED: set(),
    RequestState.REFUSED: set(),
}


class PlatformError(ValueError):
    code = "platform_error"

    def __init__(self, message: str, request_id: str = ""):
        super().__init__(message)
        self.request_id = request_id


class LifecycleError(PlatformError):
    code = "lifecycle"


class NotFoundError(PlatformError):
    code = "not_found"


class ConflictError(PlatformError):
    code = "conflict"


class ForbiddenError(PlatformError):
    code = "forbidden"


class ValidationError(PlatformError):
    code = "validation"


@dataclass
class EvaluationRequest:
    id: str
    model_ref: str
    dataset_ref: str
    mode: str
    created_by: str
    state: RequestState = RequestState.REQUESTED
    commitment_root: Optional[str] = None  # hex of the registered root, if any
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)
    failure_reason: Optional[str] = None
    cert_serials: list = field(default_factory=list)
    record: Optional[dict] = None  # EvaluationRecord JSON once completed

    def advance(self, new_state: RequestState) -> None:
        if new_state not in TRANSITIONS[self.state]:
            raise LifecycleError(
                f"illegal transition {self.state.value} -> {new_state.value}", self.id
            )
        self.state = new_state
        self.updated_at = time.time()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "model": self.model_ref,
            "dataset": self.dataset_ref,
            "mode": self.mode,
            "created_by": self.created_by,
            "state": self.state.value,
            "commitment_root": self.commitment_root,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "failure_reason": self.failure_reason,
            "cert_serials": self.cert_serials,
            "record": self.record,
        }
