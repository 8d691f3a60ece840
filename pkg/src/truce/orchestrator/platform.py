"""The platform service core: registries, lifecycle, dispatch, leaderboard.

Persistence is an append-only JSON-lines journal of metadata events; state
is rebuilt from it on startup. Private artifacts (weights, datapoints,
salts) live only in a transient in-memory vault standing in for the
owner-side serve endpoints — they are never journaled, so the persistence
layer never holds private bytes.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Optional

from ..audit import (
    AuditSession,
    AuditVariant,
    CommitmentSet,
    LocalOwner,
    MerkleRoot,
    commit_point,
    default_test,
    run_audit,
)
from ..core import Dataset, DEFAULT_CONFIG
from ..executors import (
    AttestationRoot,
    Enclave,
    ExecutorError,
    InlineWeights,
    RemoteEndpoint,
    check_mode_compatibility,
    run_dataset_owner,
    run_model_api,
    run_mpc,
    run_tee,
    run_ttp,
)
from ..hashing import sha256
from ..transport import PlatformCA, generate_identity_key
from .requests import (
    ConflictError,
    EvaluationRequest,
    ForbiddenError,
    NotFoundError,
    RequestState,
    ValidationError,
)

MODE_ROLES = {
    "model_api": ("ModelOwner", "DatasetOwner"),
    "dataset_owner": ("ModelOwner", "DatasetOwner"),
    "ttp": ("ModelOwner", "DatasetOwner", "Executor"),
    "tee": ("ModelOwner", "DatasetOwner", "Executor"),
    "mpc": ("ModelOwner", "DatasetOwner", "Dealer"),
}


@dataclass
class LeaderboardEntry:
    model: str
    dataset: str
    mode: str
    accuracy_num: int
    accuracy_den: int
    time_per_sample_s: float
    num_samples: int
    total_communication_bytes: int
    completed_at: float
    request_id: str
    prev_hash: str = ""
    entry_hash: str = ""

    @property
    def accuracy(self) -> Fraction:
        return Fraction(self.accuracy_num, self.accuracy_den)

    def body_json(self) -> dict:
        return {
            "model": self.model,
            "dataset": self.dataset,
            "mode": self.mode,
            "accuracy": {
                "numerator": self.accuracy_num,
                "denominator": self.accuracy_den,
                "decimal": self.accuracy_num / self.accuracy_den,
            },
            "time_per_sample_s": self.time_per_sample_s,
            "num_samples": self.num_samples,
            "total_communication_bytes": self.total_communication_bytes,
            "completed_at": self.completed_at,
            "request_id": self.request_id,
        }

    def to_json(self) -> dict:
        obj = self.body_json()
        obj["prev_hash"] = self.prev_hash
        obj["entry_hash"] = self.entry_hash
        return obj


def _chain_hash(prev_hash: str, body: dict) -> str:
    return sha256(bytes.fromhex(prev_hash) + json.dumps(body, sort_keys=True).encode()).hex()


def verify_leaderboard_chain(entries) -> bool:
    prev = sha256(b"leaderboard-genesis").hex()
    for e in entries:
        if e.prev_hash != prev or e.entry_hash != _chain_hash(prev, e.body_json()):
            return False
        prev = e.entry_hash
    return True


def default_executor_registry() -> Dict[str, Callable]:
    """mode -> callable(request, model_source, dataset, root, salts) -> record"""

    def _model_api(req, source, ds, root, salts):
        return run_model_api(req.id, ds, source)

    def _dataset_owner(req, source, ds, root, salts):
        return run_dataset_owner(req.id, source, ds, committed_root=root, salts=salts)

    def _ttp(req, source, ds, root, salts):
        return run_ttp(req.id, source, ds, committed_root=root, salts=salts)

    def _tee(req, source, ds, root, salts):
        rot = AttestationRoot()
        enclave = Enclave(req.id, rot, source.cfg, expected_root=root)
        return run_tee(
            req.id, source, ds, enclave.handle, rot.public_key, enclave.measurement, salts=salts
        )

    def _mpc(req, source, ds, root, salts):
        return run_mpc(req.id, source, ds)

    return {
        "model_api": _model_api,
        "dataset_owner": _dataset_owner,
        "ttp": _ttp,
        "tee": _tee,
        "mpc": _mpc,
    }


class Platform:
    """Request lifecycle, certificate issuance, dispatch, leaderboard, audits."""

    def __init__(
        self,
        journal_path: Optional[str] = None,
        executor_registry: Optional[Dict[str, Callable]] = None,
        auto_dispatch: bool = True,
        ca_key=None,
    ):
        self.journal_path = journal_path
        self.registry = (
            executor_registry if executor_registry is not None else default_executor_registry()
        )
        self.auto_dispatch = auto_dispatch
        self.ca = PlatformCA(key=ca_key)
        self._lock = threading.RLock()
        self.datasets: Dict[str, dict] = {}  # metadata only
        self.models: Dict[str, dict] = {}  # metadata only
        self.requests: Dict[str, EvaluationRequest] = {}
        self.leaderboard: list = []
        self.audits: Dict[str, AuditSession] = {}
        self._idempotency: Dict[str, str] = {}
        self._pending: Dict[tuple, str] = {}  # (model, dataset, mode) -> request id
        # transient artifact staging; never journaled
        self._vault_datasets: Dict[str, tuple] = {}  # name -> (Dataset, salts)
        self._vault_models: Dict[str, object] = {}  # name -> InlineWeights | RemoteEndpoint
        if journal_path:
            self._replay()

    # -- journal ---------------------------------------------------------

    def _journal(self, event: str, **payload) -> None:
        if not self.journal_path:
            return
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"ts": time.time(), "event": event, **payload}) + "\n")

    def _replay(self) -> None:
        try:
            fh = open(self.journal_path, "r", encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                event = obj["event"]
                if event == "dataset_registered":
                    self.datasets[obj["name"]] = obj["meta"]
                elif event == "model_registered":
                    self.models[obj["name"]] = obj["meta"]
                elif event == "request":
                    req = EvaluationRequest(
                        id=obj["request"]["id"],
                        model_ref=obj["request"]["model"],
                        dataset_ref=obj["request"]["dataset"],
                        mode=obj["request"]["mode"],
                        created_by=obj["request"]["created_by"],
                    )
                    req.state = RequestState(obj["request"]["state"])
                    req.commitment_root = obj["request"]["commitment_root"]
                    req.failure_reason = obj["request"]["failure_reason"]
                    req.cert_serials = obj["request"]["cert_serials"]
                    req.record = obj["request"]["record"]
                    self.requests[req.id] = req
                    key = (req.model_ref, req.dataset_ref, req.mode)
                    if req.state in (
                        RequestState.REQUESTED,
                        RequestState.APPROVED,
                        RequestState.RUNNING,
                    ):
                        self._pending[key] = req.id
                    elif self._pending.get(key) == req.id:
                        del self._pending[key]
                elif event == "leaderboard_entry":
                    e = obj["entry"]
                    self.leaderboard.append(
                        LeaderboardEntry(
                            model=e["model"],
                            dataset=e["dataset"],
                            mode=e["mode"],
                            accuracy_num=e["accuracy"]["numerator"],
                            accuracy_den=e["accuracy"]["denominator"],
                            time_per_sample_s=e["time_per_sample_s"],
                            num_samples=e["num_samples"],
                            total_communication_bytes=e["total_communication_bytes"],
                            completed_at=e["completed_at"],
                            request_id=e["request_id"],
                            prev_hash=e["prev_hash"],
                            entry_hash=e["entry_hash"],
                        )
                    )

    # -- registration ----------------------------------------------------

    def register_dataset(
        self,
        owner: str,
        name: str,
        num_features: int,
        num_classes: int,
        t: int,
        root: Optional[MerkleRoot] = None,
        dataset: Optional[Dataset] = None,
        salts: Optional[tuple] = None,
    ) -> dict:
        with self._lock:
            if name in self.datasets:
                raise ConflictError(f"dataset {name!r} already registered")
            if num_features < 1 or num_classes < 1 or t < 1:
                raise ValidationError("dataset header fields must be positive")
            meta = {
                "owner": owner,
                "num_features": num_features,
                "num_classes": num_classes,
                "t": t,
                "root": root.to_json() if root else None,
            }
            self.datasets[name] = meta
            if dataset is not None:
                self._vault_datasets[name] = (dataset, salts)
            self._journal("dataset_registered", name=name, meta=meta)
            return meta

    def register_model(self, owner: str, name: str, source) -> dict:
        with self._lock:
            if name in self.models:
                raise ConflictError(f"model {name!r} already registered")
            if isinstance(source, InlineWeights):
                meta = {"owner": owner, "kind": "inline", "layer_dims": list(source.spec.layer_dims)}
            elif isinstance(source, RemoteEndpoint):
                meta = {
                    "owner": owner,
                    "kind": "remote",
                    "url": source.url,
                    "num_classes": source.num_classes,
                }
            else:
                raise ValidationError("model source must be inline weights or a remote endpoint")
            self.models[name] = meta
            self._vault_models[name] = source
            self._journal("model_registered", name=name, meta=meta)
            return meta

    # -- lifecycle -------------------------------------------------------

    def _journal_request(self, req: EvaluationRequest) -> None:
        self._journal("request", request=req.to_json())

    def create_request(
        self,
        identity: str,
        model_ref: str,
        dataset_ref: str,
        mode: str,
        idempotency_key: Optional[str] = None,
    ) -> EvaluationRequest:
        with self._lock:
            if idempotency_key and idempotency_key in self._idempotency:
                return self.requests[self._idempotency[idempotency_key]]
            if mode not in MODE_ROLES:
                raise ValidationError(f"unknown trust mode {mode!r}")
            if dataset_ref not in self.datasets:
                raise NotFoundError(f"unknown dataset {dataset_ref!r}")
            if model_ref not in self.models:
                raise NotFoundError(f"unknown model {model_ref!r}")
            model_meta = self.models[model_ref]
            if model_meta["owner"] != identity:
                raise ForbiddenError("only the model owner may request an evaluation")
            if model_meta["kind"] == "remote" and mode != "model_api":
                raise ValidationError(
                    f"a remote-endpoint model is only compatible with model_api, not {mode!r}"
                )
            key = (model_ref, dataset_ref, mode)
            pending = self._pending.get(key)
            if pending is not None:
                raise ConflictError(
                    f"an identical request ({pending}) is already pending", pending
                )
            req = EvaluationRequest(
                id=uuid.uuid4().hex[:12],
                model_ref=model_ref,
                dataset_ref=dataset_ref,
                mode=mode,
                created_by=identity,
                commitment_root=(
                    self.datasets[dataset_ref]["root"]["root"]
                    if self.datasets[dataset_ref]["root"]
                    else None
                ),
            )
            self.requests[req.id] = req
            self._pending[key] = req.id
            if idempotency_key:
                self._idempotency[idempotency_key] = req.id
            self._journal_request(req)
            return req

    def _clear_pending(self, req: EvaluationRequest) -> None:
        key = (req.model_ref, req.dataset_ref, req.mode)
        if self._pending.get(key) == req.id:
            del self._pending[key]

    def get_request(self, rid: str) -> EvaluationRequest:
        req = self.requests.get(rid)
        if req is None:
            raise NotFoundError(f"unknown request {rid!r}", rid)
        return req

    def approve_request(self, identity: str, rid: str) -> EvaluationRequest:
        with self._lock:
            req = self.get_request(rid)
            ds_meta = self.datasets[req.dataset_ref]
            if ds_meta["owner"] != identity:
                raise ForbiddenError("only the dataset owner may approve", rid)
            if identity == req.created_by:
                raise ForbiddenError("requester may not approve their own request", rid)
            req.advance(RequestState.APPROVED)
            self.ca.register_request(rid)
            for role in MODE_ROLES[req.mode]:
                cert = self.ca.issue_cert(role, rid, generate_identity_key().public_key())
                req.cert_serials.append(cert.serial)
            self._journal_request(req)
        if self.auto_dispatch:
            self.dispatch(rid)
        return req

    def refuse_request(self, identity: str, rid: str, reason: str = "refused") -> EvaluationRequest:
        with self._lock:
            req = self.get_request(rid)
            if self.datasets[req.dataset_ref]["owner"] != identity:
                raise ForbiddenError("only the dataset owner may refuse", rid)
            req.advance(RequestState.REFUSED)
            self._clear_pending(req)
            req.failure_reason = reason
            self._journal_request(req)
            return req

    def dispatch(self, rid: str) -> EvaluationRequest:
        with self._lock:
            req = self.get_request(rid)
            req.advance(RequestState.RUNNING)
            source = self._vault_models.get(req.model_ref)
            staged = self._vault_datasets.get(req.dataset_ref)
            ds_meta = self.datasets[req.dataset_ref]
            root = MerkleRoot.from_json(ds_meta["root"]) if ds_meta["root"] else None
        try:
            if source is None or staged is None:
                raise ExecutorError("artifacts are not staged for execution")
            check_mode_compatibility(source, req.mode)
            ds, salts = staged
            record = self.registry[req.mode](req, source, ds, root, salts)
        except Exception as e:
            with self._lock:
                req.advance(RequestState.FAILED)
                self._clear_pending(req)
                req.failure_reason = str(e)
                self._journal_request(req)
            return req
        with self._lock:
            req.advance(RequestState.COMPLETED)
            self._clear_pending(req)
            req.record = record.to_json()
            prev = (
                self.leaderboard[-1].entry_hash
                if self.leaderboard
                else sha256(b"leaderboard-genesis").hex()
            )
            entry = LeaderboardEntry(
                model=req.model_ref,
                dataset=req.dataset_ref,
                mode=req.mode,
                accuracy_num=record.accuracy.numerator,
                accuracy_den=record.accuracy.denominator,
                time_per_sample_s=record.metrics.time_per_sample_s,
                num_samples=record.metrics.num_samples,
                total_communication_bytes=record.metrics.total_communication_bytes,
                completed_at=time.time(),
                request_id=req.id,
                prev_hash=prev,
            )
            entry.entry_hash = _chain_hash(prev, entry.body_json())
            self.leaderboard.append(entry)
            self._journal_request(req)
            self._journal("leaderboard_entry", entry=entry.to_json())
        return req

    # -- queries ---------------------------------------------------------

    def get_leaderboard(self, dataset: Optional[str] = None, mode: Optional[str] = None) -> list:
        entries = [
            e
            for e in self.leaderboard
            if (dataset is None or e.dataset == dataset) and (mode is None or e.mode == mode)
        ]
        return sorted(entries, key=lambda e: (-e.accuracy, e.completed_at))

    # -- audits ----------------------------------------------------------

    def create_audit(
        self,
        identity: str,
        dataset_ref: str,
        variant: str = "Committed",
        kappa: int = 100,
        alpha: float = 95.0,
        seed: Optional[int] = None,
    ) -> AuditSession:
        with self._lock:
            if dataset_ref not in self.datasets:
                raise NotFoundError(f"unknown dataset {dataset_ref!r}")
            staged = self._vault_datasets.get(dataset_ref)
            if staged is None:
                raise ValidationError("dataset is not staged with its owner endpoint")
            ds, salts = staged
            meta = self.datasets[dataset_ref]
            aid = uuid.uuid4().hex[:12]
        var = AuditVariant(variant)
        if var is AuditVariant.COMMITTED:
            if meta["root"] is None:
                raise ValidationError("committed audit needs a registered commitment root")
            if salts is None:
                raise ValidationError("dataset owner holds no salts for the committed audit")
            # owner rebuilds their commitment set from the salts they hold;
            # the published root comes from registration
            commits = CommitmentSet(
                tuple(commit_point(p, s, DEFAULT_CONFIG).digest for p, s in zip(ds.points, salts))
            )
            owner = LocalOwner(
                ds, salts=salts, commitments=commits, root=MerkleRoot.from_json(meta["root"])
            )
        else:
            owner = LocalOwner(ds)
        session = AuditSession(
            session_id=aid, variant=var, kappa=kappa, alpha=alpha, seed=seed
        )
        run_audit(session, owner, default_test(meta["num_features"], meta["num_classes"]))
        with self._lock:
            self.audits[aid] = session
            self._journal("audit", audit=session.to_json())
        return session

    def get_audit(self, aid: str) -> AuditSession:
        session = self.audits.get(aid)
        if session is None:
            raise NotFoundError(f"unknown audit {aid!r}", aid)
        return session
