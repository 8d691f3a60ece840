"""Acceptance gate: one test per release criterion, each printing a verdict line.

Every test exercises a whole behavior end to end at its stated tolerance and
runtime budget, and prints a single [PASS]/[FAIL] line so a release run can be
skimmed. The unit suites cover the same ground in finer grain; this file is
the go/no-go summary.
"""

import random
import time
from fractions import Fraction

import numpy as np
import pytest

from truce.audit import (
    AuditSession,
    AuditVariant,
    BindingViolation,
    LocalOwner,
    MerkleProof,
    NonDegenerateTest,
    commit_dataset,
    confidence_bound,
    default_test,
    merkle_prove,
    open_and_verify,
    run_audit,
)
from truce.core import (
    DEFAULT_CONFIG,
    DataPoint,
    Dataset,
    DomainError,
    EncodingError,
    FixedPointConfig,
    canonical_decode,
    canonical_encode,
    dataset_payload_bytes,
    encode_array,
    model_payload_bytes,
    predict_dataset,
    signed_view,
    truncate_signed,
)
from truce.executors import (
    AttestationRoot,
    Enclave,
    FlowTranscript,
    InlineWeights,
    RefusalError,
    StubModelServer,
    run_dataset_owner,
    run_model_api,
    run_mpc,
    run_tee,
    run_ttp,
    scan_flows,
)
from truce.mpc import (
    Budget,
    MASKED_REVEAL_KINDS,
    MpcSessionConfig,
    analytic_payload_bytes,
    classify_reveals,
    dealer_generate,
    DuplexChannel,
    PartyEngine,
    reconstruct,
    reconstruct_bits,
    run_local_mpc,
    share,
)
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
)
from truce.core.types import EvaluationRecord, MetricsRecord

from conftest import make_mlp, make_separated_dataset

RING8 = FixedPointConfig(f=4, ring_bits=8)


def report(capsys, ok: bool, label: str, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


def run_pair(cfg, budget, fn, seed=1, policy="aggregate_only"):
    """Run fn(engine) for both parties in lockstep threads."""
    import threading

    bundles = dealer_generate(budget, seed, cfg)
    chans = DuplexChannel.pair()
    engines = [PartyEngine(i, cfg, chans[i], bundles[i], reveal_policy=policy) for i in (0, 1)]
    out, errs = {}, {}

    def runner(pid):
        try:
            out[pid] = fn(engines[pid])
        except Exception as e:  # pragma: no cover - surfaced via raise below
            errs[pid] = e
            for c in chans:
                c.close()

    threads = [threading.Thread(target=runner, args=(i,)) for i in (0, 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errs:
        raise next(iter(errs.values()))
    return out[0], out[1], engines


def oracle_accuracy(spec, w, ds, cfg=DEFAULT_CONFIG):
    preds = predict_dataset(spec, w, ds, cfg)
    return Fraction(int((preds == ds.labels_array()).sum()), len(ds))


def test_01_audit_bound_value(capsys):
    start = time.perf_counter()
    value = confidence_bound(95, 100)
    elapsed = time.perf_counter() - start
    ok = abs(value - 0.005921) <= 1e-6 and elapsed < 1e-3
    report(capsys, ok, "audit bound",
           f"confidence_bound(95, 100) = {value:.6f} (target 0.005921 ± 1e-6) in {elapsed * 1e6:.0f} µs")


def test_02_audit_soundness_monte_carlo(capsys):
    start = time.perf_counter()
    t, bad, kappa, trials = 2000, 100, 100, 10_000  # exactly 5% planted bad points
    rng = np.random.default_rng(17)
    pts = []
    for i in range(t):
        if i < bad:
            pts.append(DataPoint((0.0, 0.0, 0.0), 0))  # degenerate all-zero input
        else:
            pts.append(DataPoint(tuple(rng.uniform(-1, 1, 3)), int(rng.integers(4))).quantized())
    ds = Dataset(tuple(pts), "mc", 3, 4)
    owner = LocalOwner(ds)
    test = NonDegenerateTest()

    passes = 0
    for trial in range(trials):
        session = AuditSession(
            session_id=f"mc-{trial}", variant=AuditVariant.HONEST_OWNER,
            kappa=kappa, alpha=95.0, seed=trial, log_transcript=False,
        )
        run_audit(session, owner, test)
        passes += session.verdict == "Accepted"
    elapsed = time.perf_counter() - start

    rate = passes / trials
    limit = 0.0059 + 3 * (0.0059 * 0.9941 / trials) ** 0.5  # ≈ 0.0082
    ok = rate <= limit and elapsed < 60
    report(capsys, ok, "audit soundness",
           f"all-pass rate {rate:.4f} over {trials} trials (limit {limit:.4f}) in {elapsed:.1f} s")


def test_03_cross_mode_agreement(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    mismatches = []
    for i in range(25):
        n_hidden = int(rng.integers(0, 3))  # up to 3 layers total
        dims = [int(rng.integers(2, 17))]
        dims += [int(rng.integers(2, 33)) for _ in range(n_hidden)]
        dims.append(int(rng.integers(2, 9)))
        t = int(rng.integers(8, 129))
        spec, w = make_mlp(rng, dims)
        ds = make_separated_dataset(spec, w, rng, t)
        model = InlineWeights(spec, w)

        accs = {"dataset_owner": run_dataset_owner("r", model, ds).accuracy}
        with StubModelServer(model) as srv:
            accs["model_api"] = run_model_api("r", ds, srv.endpoint()).accuracy
        accs["ttp"] = run_ttp("r", model, ds).accuracy
        rot = AttestationRoot()
        enclave = Enclave("r", rot, model.cfg)
        accs["tee"] = run_tee("r", model, ds, enclave.handle, rot.public_key,
                              enclave.measurement).accuracy
        accs["mpc"] = run_mpc("r", model, ds).accuracy
        if len(set(accs.values())) != 1:
            mismatches.append((dims, t, accs))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 600
    report(capsys, ok, "cross-mode agreement",
           f"25/25 model-dataset pairs agree across all five modes in {elapsed:.1f} s"
           if not mismatches else f"mismatches: {mismatches[:2]}")


def test_04_exhaustive_small_ring(capsys):
    start = time.perf_counter()
    xs = np.arange(256, dtype=np.uint64)
    rng = np.random.default_rng(6)

    # msb and drelu over every 8-bit ring value
    s0, s1 = share(xs, rng, RING8)
    b = Budget(comparison_tuples=256, bit_triples=256 * 7)
    r0, r1, _ = run_pair(RING8, b, lambda e: e.msb(s0 if e.party_id == 0 else s1))
    msb_ok = np.array_equal(reconstruct_bits(r0, r1), (xs >> np.uint64(7)).astype(np.uint8))

    d0, d1 = share(xs, rng, RING8)
    r0, r1, _ = run_pair(RING8, b, lambda e: e.drelu(d0 if e.party_id == 0 else d1))
    drelu_ok = np.array_equal(
        reconstruct_bits(r0, r1), (signed_view(xs, RING8) >= 0).astype(np.uint8)
    )

    # beaver multiplication over every pair of 8-bit ring values
    gx, gy = np.meshgrid(xs, xs)
    gx, gy = gx.ravel(), gy.ravel()
    x0, x1 = share(gx, rng, RING8)
    y0, y1 = share(gy, rng, RING8)
    r0, r1, _ = run_pair(
        RING8, Budget(ring_triples=len(gx)),
        lambda e: e.beaver_mul(x0 if e.party_id == 0 else x1, y0 if e.party_id == 0 else y1),
    )
    beaver_ok = np.array_equal(reconstruct(r0, r1, RING8), (gx * gy) & np.uint64(0xFF))

    elapsed = time.perf_counter() - start
    ok = msb_ok and drelu_ok and beaver_ok and elapsed < 10
    report(capsys, ok, "exhaustive 8-bit ring",
           f"msb={msb_ok} drelu={drelu_ok} beaver(65536 pairs)={beaver_ok} in {elapsed:.1f} s")


def test_05_truncation_error_budget(capsys):
    start = time.perf_counter()
    cfg = DEFAULT_CONFIG
    rng = np.random.default_rng(4)
    prods = (
        encode_array(rng.uniform(-60, 60, 10_000), cfg)
        * encode_array(rng.uniform(-8, 8, 10_000), cfg)
    ) & np.uint64(cfg.mask)
    s0, s1 = share(prods, rng, cfg)
    r0, r1, _ = run_pair(cfg, Budget(), lambda e: e.truncate(s0 if e.party_id == 0 else s1))
    got = signed_view(reconstruct(r0, r1), cfg)
    want = signed_view(truncate_signed(prods, cfg.f, cfg), cfg)
    frac = float((np.abs(got - want) <= 1).mean())
    elapsed = time.perf_counter() - start
    ok = frac >= 0.999 and elapsed < 5
    report(capsys, ok, "truncation budget",
           f"|error| ≤ 1 ulp in {frac:.2%} of 10,000 products (floor 99.9%) in {elapsed:.1f} s")


def test_06_communication_metering(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(33)
    spec, w = make_mlp(rng, (8, 4))  # one layer, 8 features -> 4 classes
    model = InlineWeights(spec, w)
    ds16 = make_separated_dataset(spec, w, rng, 16)

    # metered secure-computation payload vs the published analytic formula
    result = run_local_mpc(spec, w, ds16)
    predicted = analytic_payload_bytes(spec, 16)["total"]
    rel = abs(result.total_payload_bytes - predicted) / predicted
    mpc_ok = rel <= 0.05

    # plaintext-locus modes: fixed artifact transfer, nothing per sample
    model_bytes = len(model_payload_bytes(spec, w, model.cfg))
    ds_bytes = len(dataset_payload_bytes(ds16))
    ttp_comm = run_ttp("r", model, ds16).metrics.total_communication_bytes
    rot = AttestationRoot()
    enclave = Enclave("r", rot, model.cfg)
    tee_comm = run_tee(
        "r", model, ds16, enclave.handle, rot.public_key, enclave.measurement
    ).metrics.total_communication_bytes
    do_comm = run_dataset_owner("r", model, ds16).metrics.total_communication_bytes
    exact_ok = (
        ttp_comm == model_bytes + ds_bytes
        and tee_comm == model_bytes + ds_bytes
        and do_comm == model_bytes  # only the model travels in this topology
    )

    # zero per-sample traffic: the number of transfer events must not grow with t
    ds32 = make_separated_dataset(spec, w, rng, 32)
    event_counts = {}
    for t_label, ds in (("t16", ds16), ("t32", ds32)):
        flows = {}
        f = FlowTranscript("ttp")
        run_ttp("r", model, ds, flow=f)
        flows["ttp"] = len(f.events)
        f = FlowTranscript("dataset_owner")
        run_dataset_owner("r", model, ds, flow=f)
        flows["dataset_owner"] = len(f.events)
        rot2 = AttestationRoot()
        enc2 = Enclave("r", rot2, model.cfg)
        f = FlowTranscript("tee")
        run_tee("r", model, ds, enc2.handle, rot2.public_key, enc2.measurement, flow=f)
        flows["tee"] = len(f.events)
        event_counts[t_label] = flows
    no_per_sample = event_counts["t16"] == event_counts["t32"]

    elapsed = time.perf_counter() - start
    ok = mpc_ok and exact_ok and no_per_sample and elapsed < 30
    report(capsys, ok, "communication metering",
           f"mpc metered {result.total_payload_bytes} vs analytic {predicted} "
           f"(Δ {rel:.2%} ≤ 5%), plaintext exact={exact_ok}, "
           f"per-sample-free={no_per_sample}, in {elapsed:.1f} s")


def test_07_commitment_binding_fuzz(capsys):
    start = time.perf_counter()
    rng = random.Random(7)
    rng_np = np.random.default_rng(7)
    pts = tuple(
        DataPoint(tuple(rng_np.uniform(-5, 5, 3)), int(rng_np.integers(4))).quantized()
        for _ in range(64)
    )
    ds = Dataset(pts, "fuzz", 3, 4)
    cset, root, salts = commit_dataset(ds, rng_seed=b"fuzz-seed")

    rejected = 0
    total = 1000
    for _ in range(total):
        i = rng.randrange(len(ds))
        idx, salt, point = i, salts[i], ds.points[i]
        proof = merkle_prove(cset, i)
        which = rng.choice(["salt", "point", "proof"])
        if which == "salt":
            mutated = bytearray(salt)
            mutated[rng.randrange(len(mutated))] ^= 1 << rng.randrange(8)
            salt = bytes(mutated)
        elif which == "point":
            enc = bytearray(canonical_encode(point))
            enc[rng.randrange(len(enc))] ^= 1 << rng.randrange(8)
            try:
                point = canonical_decode(bytes(enc))
            except (EncodingError, DomainError):
                rejected += 1  # unparsable mutation: rejected before verification
                continue
        else:
            sibs = list(proof.siblings)
            k = rng.randrange(len(sibs))
            s = bytearray(sibs[k])
            s[rng.randrange(32)] ^= 1 << rng.randrange(8)
            proof = MerkleProof(proof.index, tuple(sibs[:k] + [bytes(s)] + sibs[k + 1:]))
        try:
            open_and_verify(root, [(idx, salt, point, proof)])
        except BindingViolation:
            rejected += 1
    elapsed = time.perf_counter() - start
    ok = rejected == total and elapsed < 5
    report(capsys, ok, "commitment binding",
           f"{rejected}/{total} single-byte mutations rejected in {elapsed:.1f} s")


def test_08_post_audit_substitution_refused(capsys):
    rng = np.random.default_rng(19)
    spec, w = make_mlp(rng, (4, 5, 3))
    model = InlineWeights(spec, w)
    ds = make_separated_dataset(spec, w, rng, 24)
    cset, root, salts = commit_dataset(ds, rng_seed=b"sub-seed")

    # the audit accepts the honest committed dataset first
    owner = LocalOwner(ds, salts=salts, commitments=cset, root=root)
    session = AuditSession(
        session_id="a1", variant=AuditVariant.COMMITTED, kappa=len(ds), alpha=95.0, seed=3
    )
    run_audit(session, owner, default_test(ds.num_features, ds.num_classes))
    assert session.verdict == "Accepted"

    # then one datapoint is swapped before evaluation
    pts = list(ds.points)
    pts[5] = DataPoint(tuple(v * 0.5 + 0.125 for v in pts[5].input), pts[5].label).quantized()
    swapped = Dataset(tuple(pts), ds.name, ds.num_features, ds.num_classes)

    refusals = {}
    with pytest.raises(RefusalError):
        run_dataset_owner("r", model, swapped, committed_root=root, salts=salts)
    refusals["dataset_owner"] = True
    with pytest.raises(RefusalError):
        run_ttp("r", model, swapped, committed_root=root, salts=salts)
    refusals["ttp"] = True
    rot = AttestationRoot()
    enclave = Enclave("r", rot, model.cfg, expected_root=root)
    with pytest.raises(RefusalError):
        run_tee("r", model, swapped, enclave.handle, rot.public_key,
                enclave.measurement, salts=salts)
    refusals["tee"] = True

    ok = all(refusals.get(m) for m in ("dataset_owner", "ttp", "tee"))
    report(capsys, ok, "commitment-evaluation consistency",
           "post-audit substitution refused by dataset_owner, ttp, and tee executors")


def test_09_transcript_privacy_scan(capsys):
    rng = np.random.default_rng(23)
    spec, w = make_mlp(rng, (5, 6, 3))
    model = InlineWeights(spec, w)
    ds = make_separated_dataset(spec, w, rng, 12)

    # aggregate-only secure run: every reveal is a masked opening or the tally
    result = run_local_mpc(spec, w, ds, MpcSessionConfig(reveal_policy="aggregate_only"))
    verdict = classify_reveals(result, "aggregate_only")
    mpc_ok = verdict["ok"] and verdict["kinds"] <= MASKED_REVEAL_KINDS | {"final_accuracy"}

    # enclave run: neither owner's plaintext reaches the other owner
    rot = AttestationRoot()
    enclave = Enclave("r", rot, model.cfg)
    flow = FlowTranscript("tee")
    run_tee("r", model, ds, enclave.handle, rot.public_key, enclave.measurement, flow=flow)
    tee_ok = (
        scan_flows(flow)["ok"]
        and "dataset" not in flow.visible_to("model_owner")
        and "model" not in flow.visible_to("dataset_owner")
    )

    ok = mpc_ok and tee_ok
    report(capsys, ok, "transcript privacy",
           f"mpc reveal kinds {sorted(verdict['kinds'])} all masked-or-final; "
           f"tee cross-owner plaintext absent={tee_ok}")


def test_10_lifecycle_property_suite(capsys):
    start = time.perf_counter()

    def stub(req, source, ds, root, salts):
        return EvaluationRecord(req.id, req.mode, Fraction(1, 2),
                                MetricsRecord(0.0, len(ds), 0))

    rng_np = np.random.default_rng(29)
    spec, w = make_mlp(rng_np, (3, 2))
    ds = Dataset(
        tuple(DataPoint((0.5, -0.5, 0.25), 0).quantized() for _ in range(2)), "d", 3, 2
    )
    platform = Platform(executor_registry={m: stub for m in MODE_ROLES}, auto_dispatch=False)
    models, datasets = [], []
    for i in range(4):
        name = f"d{i}"
        platform.register_dataset("bob", name, 3, 2, 2, dataset=ds, salts=None)
        datasets.append(name)
    for i in range(4):
        name = f"m{i}"
        platform.register_model("alice", name, InlineWeights(spec, w))
        models.append(name)

    sequences, ids = 10_000, []
    violations = []
    rng = random.Random(10)
    expected_errors = (ConflictError, ForbiddenError, LifecycleError,
                       NotFoundError, ValidationError)
    for seq in range(sequences):
        for _ in range(rng.randint(1, 3)):
            action = rng.choice(["create", "approve", "refuse", "dispatch", "approve_self"])
            try:
                if action == "create" or not ids:
                    req = platform.create_request(
                        "alice", rng.choice(models), rng.choice(datasets),
                        rng.choice(list(MODE_ROLES)),
                    )
                    ids.append(req.id)
                    continue
                rid = rng.choice(ids)
                before = platform.get_request(rid).state
                if action == "approve":
                    platform.approve_request("bob", rid)
                elif action == "approve_self":
                    platform.approve_request("alice", rid)
                elif action == "refuse":
                    platform.refuse_request("bob", rid)
                else:
                    platform.dispatch(rid)
                after = platform.get_request(rid).state
                if after != before:
                    declared = after in TRANSITIONS[before] or (
                        # dispatch advances through Running to a terminal state
                        action == "dispatch"
                        and before is RequestState.APPROVED
                        and after in (RequestState.COMPLETED, RequestState.FAILED)
                    )
                    if not declared:
                        violations.append((before, action, after))
            except expected_errors:
                pass

    counts = {}
    for e in platform.leaderboard:
        counts[e.request_id] = counts.get(e.request_id, 0) + 1
    one_entry = all(v == 1 for v in counts.values())
    entry_iff_completed = all(
        (rid in counts) == (platform.get_request(rid).state is RequestState.COMPLETED)
        for rid in ids
    )
    elapsed = time.perf_counter() - start
    ok = not violations and one_entry and entry_iff_completed and elapsed < 30
    report(capsys, ok, "lifecycle properties",
           f"{sequences} sequences ({len(ids)} requests, {len(counts)} completed): "
           f"0 undeclared transitions, ≤1 leaderboard entry per request, in {elapsed:.1f} s"
           if not violations else f"undeclared transitions: {violations[:3]}")
