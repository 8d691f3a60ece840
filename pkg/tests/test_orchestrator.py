"""Platform lifecycle, leaderboard, journal, and REST API tests."""

import json
import random
from fractions import Fraction

import numpy as np
import pytest
from fastapi.testclient import TestClient

from truce.audit import commit_dataset
from truce.core import (
    DataPoint,
    Dataset,
    EvaluationRecord,
    MetricsRecord,
    model_to_json,
    predict_dataset,
)
from truce.executors import InlineWeights, RemoteEndpoint, StubModelServer
from truce.orchestrator import (
    ConflictError,
    ForbiddenError,
    LifecycleError,
    MODE_ROLES,
    NotFoundError,
    Platform,
    RequestState,
    TRANSITIONS,
    ValidationError,
    create_app,
    verify_leaderboard_chain,
)

from conftest import make_mlp, make_separated_dataset

ALICE = "alice"  # model owner
BOB = "bob"  # dataset owner


@pytest.fixture()
def world(tmp_path):
    rng = np.random.default_rng(21)
    spec, w = make_mlp(rng, (5, 6, 3))
    ds = make_separated_dataset(spec, w, rng, 120, name="bench")
    model = InlineWeights(spec, w)
    platform = Platform(journal_path=str(tmp_path / "journal.jsonl"))
    _, root, salts = commit_dataset(ds, rng_seed=b"orch")
    platform.register_dataset(
        BOB, "bench", spec.num_features, spec.num_classes, len(ds),
        root=root, dataset=ds, salts=tuple(salts),
    )
    platform.register_model(ALICE, "mlp", model)
    return platform, model, ds


def oracle_accuracy(model, ds):
    preds = predict_dataset(model.spec, model.weights, ds, model.cfg)
    return Fraction(int((preds == ds.labels_array()).sum()), len(ds))


class TestLifecycle:
    def test_happy_path_completes_and_publishes(self, world):
        platform, model, ds = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        assert req.state is RequestState.REQUESTED
        platform.approve_request(BOB, req.id)
        req = platform.get_request(req.id)
        assert req.state is RequestState.COMPLETED
        assert Fraction(
            req.record["accuracy"]["numerator"], req.record["accuracy"]["denominator"]
        ) == oracle_accuracy(model, ds)
        board = platform.get_leaderboard()
        assert len(board) == 1
        assert board[0].accuracy == oracle_accuracy(model, ds)

    def test_self_approval_forbidden(self, world):
        platform, _, _ = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        platform.datasets["bench"]["owner"] = ALICE  # make requester also own the dataset
        with pytest.raises(ForbiddenError, match="own request"):
            platform.approve_request(ALICE, req.id)

    def test_non_owner_cannot_approve_or_refuse(self, world):
        platform, _, _ = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        with pytest.raises(ForbiddenError):
            platform.approve_request("mallory", req.id)
        with pytest.raises(ForbiddenError):
            platform.refuse_request("mallory", req.id)

    def test_double_approve_is_an_error(self, world):
        platform, _, _ = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        platform.approve_request(BOB, req.id)
        with pytest.raises(LifecycleError, match="illegal transition"):
            platform.approve_request(BOB, req.id)

    def test_refuse(self, world):
        platform, _, _ = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        platform.refuse_request(BOB, req.id, "not this model")
        assert platform.get_request(req.id).state is RequestState.REFUSED
        assert platform.get_leaderboard() == []

    def test_create_validation(self, world):
        platform, model, _ = world
        with pytest.raises(NotFoundError):
            platform.create_request(ALICE, "mlp", "nope", "ttp")
        with pytest.raises(NotFoundError):
            platform.create_request(ALICE, "nope", "bench", "ttp")
        with pytest.raises(ValidationError, match="unknown trust mode"):
            platform.create_request(ALICE, "mlp", "bench", "quantum")
        with pytest.raises(ForbiddenError, match="model owner"):
            platform.create_request(BOB, "mlp", "bench", "ttp")
        platform.register_model(ALICE, "api-model", RemoteEndpoint("http://x/infer", "t", 3))
        with pytest.raises(ValidationError, match="only compatible with model_api"):
            platform.create_request(ALICE, "api-model", "bench", "mpc")

    def test_duplicate_pending_rejected_and_idempotency(self, world):
        platform, _, _ = world
        platform.auto_dispatch = False
        req = platform.create_request(ALICE, "mlp", "bench", "ttp", idempotency_key="k1")
        again = platform.create_request(ALICE, "mlp", "bench", "ttp", idempotency_key="k1")
        assert again.id == req.id
        with pytest.raises(ConflictError, match="already pending"):
            platform.create_request(ALICE, "mlp", "bench", "ttp")

    def test_failed_executor_no_leaderboard_entry(self, world):
        platform, _, _ = world

        def boom(req, source, ds, root, salts):
            raise RuntimeError("executor crashed mid-run")

        platform.registry["ttp"] = boom
        req = platform.create_request(ALICE, "mlp", "bench", "ttp")
        platform.approve_request(BOB, req.id)
        req = platform.get_request(req.id)
        assert req.state is RequestState.FAILED
        assert "crashed" in req.failure_reason
        assert platform.get_leaderboard() == []
        with pytest.raises(LifecycleError):
            platform.dispatch(req.id)

    def test_cert_issuance_per_mode_roles(self, world):
        platform, _, _ = world
        platform.auto_dispatch = False
        req = platform.create_request(ALICE, "mlp", "bench", "mpc")
        platform.approve_request(BOB, req.id)
        assert len(req.cert_serials) == len(MODE_ROLES["mpc"])
        issued = [e for e in platform.ca.journal if e["request_id"] == req.id]
        assert sorted(e["role"] for e in issued) == sorted(MODE_ROLES["mpc"])


class TestLeaderboard:
    def test_sorted_desc_accuracy(self, world):
        platform, model, ds = world
        platform.register_model(ALICE, "mlp2", model)

        def fixed(acc):
            def run(req, source, ds_, root, salts):
                t = len(ds_)
                num = round(acc * t)
                z = (1,) * num + (0,) * (t - num)
                return EvaluationRecord(
                    req.id, "ttp", Fraction(num, t), MetricsRecord(0.001, t, 10),
                    per_sample_outcomes=z,
                )
            return run

        platform.registry["ttp"] = fixed(0.5)
        r1 = platform.create_request(ALICE, "mlp", "bench", "ttp")
        platform.approve_request(BOB, r1.id)
        platform.registry["ttp"] = fixed(0.75)
        r2 = platform.create_request(ALICE, "mlp2", "bench", "ttp")
        platform.approve_request(BOB, r2.id)
        board = platform.get_leaderboard(dataset="bench", mode="ttp")
        assert [e.model for e in board] == ["mlp2", "mlp"]
        assert platform.get_leaderboard(mode="mpc") == []

    def test_tie_breaks_by_completion_time(self, world):
        platform, model, _ = world
        platform.register_model(ALICE, "mlp2", model)
        for name in ("mlp", "mlp2"):
            req = platform.create_request(ALICE, name, "bench", "dataset_owner")
            platform.approve_request(BOB, req.id)
        board = platform.get_leaderboard()
        assert board[0].completed_at <= board[1].completed_at
        assert [e.model for e in board] == ["mlp", "mlp2"]

    def test_hash_chain_detects_mutation(self, world):
        platform, _, _ = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        platform.approve_request(BOB, req.id)
        req2 = platform.create_request(ALICE, "mlp", "bench", "ttp")
        platform.approve_request(BOB, req2.id)
        assert verify_leaderboard_chain(platform.leaderboard)
        platform.leaderboard[0].accuracy_num += 1
        assert not verify_leaderboard_chain(platform.leaderboard)


class TestJournal:
    def test_replay_rebuilds_state(self, world, tmp_path):
        platform, model, ds = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        platform.approve_request(BOB, req.id)
        rebuilt = Platform(journal_path=platform.journal_path)
        assert set(rebuilt.datasets) == {"bench"}
        assert set(rebuilt.models) == {"mlp"}
        assert rebuilt.get_request(req.id).state is RequestState.COMPLETED
        assert len(rebuilt.leaderboard) == 1
        assert verify_leaderboard_chain(rebuilt.leaderboard)

    def test_no_private_bytes_in_journal(self, world):
        platform, model, ds = world
        req = platform.create_request(ALICE, "mlp", "bench", "dataset_owner")
        platform.approve_request(BOB, req.id)
        text = open(platform.journal_path, encoding="utf-8").read()
        assert '"weights"' not in text
        # no feature vector of any datapoint appears in persisted storage
        sample = json.dumps(list(ds.points[0].input))
        assert sample[1:-1] not in text
        w0 = model_to_json(model.spec, model.weights, model.cfg)["weights"][0][0]
        assert json.dumps(w0)[1:-1] not in text


def stub_registry():
    def run(req, source, ds, root, salts):
        t = len(ds)
        return EvaluationRecord(
            req.id, req.mode, Fraction(1, 2), MetricsRecord(0.0, t, 0),
            per_sample_outcomes=(1, 0) * (t // 2) + (1,) * (t % 2),
        )

    return {m: run for m in MODE_ROLES}


class TestLifecycleProperty:
    def test_random_action_sequences(self, world):
        """Random drives never produce an undeclared transition or a second entry."""
        platform, model, ds = world
        platform.registry = stub_registry()
        platform.auto_dispatch = False
        rng = random.Random(5)
        ids = []
        entries_per_request = {}
        for step in range(600):
            action = rng.choice(["create", "approve", "refuse", "dispatch", "approve_self"])
            try:
                if action == "create" or not ids:
                    req = platform.create_request(ALICE, "mlp", "bench", rng.choice(list(MODE_ROLES)))
                    ids.append(req.id)
                    continue
                rid = rng.choice(ids)
                before = platform.get_request(rid).state
                if action == "approve":
                    platform.approve_request(BOB, rid)
                elif action == "approve_self":
                    platform.approve_request(ALICE, rid)
                elif action == "refuse":
                    platform.refuse_request(BOB, rid)
                elif action == "dispatch":
                    platform.dispatch(rid)
                after = platform.get_request(rid).state
                if after != before:
                    assert after in TRANSITIONS[before] or (
                        # approve auto-advances through Running when dispatching
                        action in ("approve", "dispatch")
                        and after in (RequestState.COMPLETED, RequestState.FAILED)
                    )
            except (ConflictError, ForbiddenError, LifecycleError, NotFoundError, ValidationError):
                pass
        counts = {}
        for e in platform.leaderboard:
            counts[e.request_id] = counts.get(e.request_id, 0) + 1
        assert all(v == 1 for v in counts.values())
        for rid in ids:
            st = platform.get_request(rid).state
            assert (rid in counts) == (st is RequestState.COMPLETED)


class TestMetricsFidelity:
    def test_time_per_sample_tracks_wall_clock(self, world):
        import time as _time

        platform, model, _ = world
        tiny = Dataset(
            tuple(DataPoint((0.1,) * 5, 0).quantized() for _ in range(3)), "tiny", 5, 3
        )
        platform.register_dataset(BOB, "tiny", 5, 3, 3, dataset=tiny, salts=None)
        import httpx

        httpx.Client().close()  # pre-warm the one-time TLS context setup
        with StubModelServer(model, latency_s=0.05) as srv:
            platform.register_model(ALICE, "api", srv.endpoint())
            req = platform.create_request(ALICE, "api", "tiny", "model_api")
            start = _time.perf_counter()
            platform.approve_request(BOB, req.id)
            wall = _time.perf_counter() - start
        rec = platform.get_request(req.id).record
        assert platform.get_request(req.id).state is RequestState.COMPLETED
        reported = rec["metrics"]["time_per_sample_s"] * rec["metrics"]["num_samples"]
        assert abs(reported - wall) <= 0.2 * wall + 0.02


class TestApi:
    @pytest.fixture()
    def client(self, world):
        platform, model, ds = world
        app = create_app(platform)
        return TestClient(app), platform, model, ds

    def test_full_flow_over_http(self, client, tmp_path):
        tc, platform, model, ds = client
        # fresh artifacts registered through the API
        body = {
            "name": "bench2",
            "num_features": ds.num_features,
            "num_classes": ds.num_classes,
            "points": [{"input": list(p.input), "label": p.label} for p in ds.points],
        }
        r = tc.post("/datasets", json=body, headers={"X-Identity": BOB})
        assert r.status_code == 200, r.text
        r = tc.post(
            "/models",
            json={"name": "mlp-http", "kind": "inline", "model": model_to_json(model.spec, model.weights, model.cfg)},
            headers={"X-Identity": ALICE},
        )
        assert r.status_code == 200, r.text
        r = tc.post(
            "/requests",
            json={"model": "mlp-http", "dataset": "bench2", "mode": "ttp"},
            headers={"X-Identity": ALICE},
        )
        rid = r.json()["id"]
        assert r.json()["state"] == "Requested"
        r = tc.post(f"/requests/{rid}/approve", headers={"X-Identity": BOB})
        assert r.json()["state"] == "Completed"
        r = tc.get(f"/requests/{rid}")
        acc = r.json()["record"]["accuracy"]
        assert Fraction(acc["numerator"], acc["denominator"]) == oracle_accuracy(model, ds)
        r = tc.get("/leaderboard", params={"dataset": "bench2"})  # public read
        rows = r.json()["entries"]
        assert len(rows) == 1 and rows[0]["model"] == "mlp-http"

    def test_error_body_shape(self, client):
        tc, *_ = client
        r = tc.get("/requests/zzz")
        assert r.status_code == 404
        assert set(r.json()) == {"code", "message", "request_id"}
        assert r.json()["code"] == "not_found"
        assert r.json()["request_id"] == "zzz"

    def test_missing_identity_rejected(self, client):
        tc, *_ = client
        r = tc.post("/requests", json={"model": "mlp", "dataset": "bench", "mode": "ttp"})
        assert r.status_code == 422
        assert r.json()["code"] == "validation"

    def test_self_approval_over_http(self, client):
        tc, platform, model, _ = client
        platform.register_model(BOB, "bobs-model", model)
        r = tc.post(
            "/requests",
            json={"model": "bobs-model", "dataset": "bench", "mode": "dataset_owner"},
            headers={"X-Identity": BOB},
        )
        rid = r.json()["id"]
        r = tc.post(f"/requests/{rid}/approve", headers={"X-Identity": BOB})
        assert r.status_code == 403
        assert "own request" in r.json()["message"]

    def test_audit_endpoints(self, client):
        tc, *_ = client
        r = tc.post(
            "/audits",
            json={"dataset": "bench", "variant": "Committed", "kappa": 100, "alpha": 95, "seed": 3},
            headers={"X-Identity": "carol"},
        )
        assert r.status_code == 200, r.text
        obj = r.json()
        assert obj["verdict"] == "Accepted"
        assert abs(obj["bound"] - 0.005921) < 1e-6
        r = tc.get(f"/audits/{obj['session_id']}")
        assert r.json()["state"] == "Accepted"

    def test_audit_detects_substitution(self, client, world):
        tc, platform, model, ds = client
        # owner silently swaps a point after publishing the root
        pts = list(ds.points)
        pts[0] = DataPoint(tuple(v + 0.5 for v in pts[0].input), pts[0].label).quantized()
        bad = Dataset(tuple(pts), ds.name, ds.num_features, ds.num_classes)
        dataset, salts = platform._vault_datasets["bench"]
        platform._vault_datasets["bench"] = (bad, salts)
        r = tc.post(
            "/audits",
            json={"dataset": "bench", "variant": "Committed", "kappa": len(ds), "alpha": 95, "seed": 3},
            headers={"X-Identity": "carol"},
        )
        obj = r.json()
        assert obj["verdict"] == "Rejected"
        assert "binding violation" in obj["rejection_reason"]
