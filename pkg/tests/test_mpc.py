import threading

import numpy as np
import pytest
from conftest import make_mlp, make_separated_dataset

from truce.core import (
    DEFAULT_CONFIG,
    DataPoint,
    Dataset,
    FixedPointConfig,
    ModelSpec,
    Weights,
    compute_accuracy,
    encode_array,
    encode_fixed,
    predict_dataset,
    signed_view,
    truncate_signed,
)
from truce.mpc import (
    Budget,
    DuplexChannel,
    MpcSessionConfig,
    PartyEngine,
    ProtocolAbort,
    analytic_payload_bytes,
    budget_for,
    classify_reveals,
    dealer_generate,
    deserialize_bundle,
    labels_to_onehot_bits,
    reconstruct,
    reconstruct_bits,
    run_local_mpc,
    serialize_bundle,
    share,
)

RING8 = FixedPointConfig(f=4, ring_bits=8)


def run_pair(cfg, budget, fn, seed=1, policy="aggregate_only"):
    """Run fn(engine) for both parties in lockstep threads."""
    bundles = dealer_generate(budget, seed, cfg)
    chans = DuplexChannel.pair()
    engines = [PartyEngine(i, cfg, chans[i], bundles[i], reveal_policy=policy) for i in (0, 1)]
    out, errs = {}, {}

    def runner(pid):
        try:
            out[pid] = fn(engines[pid])
        except Exception as e:
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


class TestSharing:
    def test_reconstruct(self):
        rng = np.random.default_rng(0)
        s0, s1 = share(42, rng)
        assert reconstruct(s0, s1)[0] == 42

    def test_zero(self):
        rng = np.random.default_rng(1)
        s0, s1 = share(0, rng)
        assert int(((s0 + s1) & np.uint64(2**64 - 1))[0]) == 0

    def test_share_uniformity_chi_square(self):
        # 10,000 sharings of a fixed secret: low byte of share0 ~ uniform
        rng = np.random.default_rng(2)
        lows = np.array([int(share(42, rng)[0][0]) & 0xFF for _ in range(10_000)])
        counts = np.bincount(lows, minlength=256)
        expected = 10_000 / 256
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        # 255 dof; 99.9th percentile is ~330
        assert chi2 < 330


class TestBeaverMul:
    def _mul(self, xs, ys, cfg=DEFAULT_CONFIG):
        rng = np.random.default_rng(5)
        x0, x1 = share(np.asarray(xs, dtype=np.uint64), rng, cfg)
        y0, y1 = share(np.asarray(ys, dtype=np.uint64), rng, cfg)
        n = len(np.atleast_1d(xs))
        r0, r1, _ = run_pair(
            cfg,
            Budget(ring_triples=n),
            lambda e: e.beaver_mul(x0 if e.party_id == 0 else x1, y0 if e.party_id == 0 else y1),
        )
        return reconstruct(r0, r1, cfg)

    def test_three_times_five(self):
        assert self._mul([3], [5])[0] == 15

    def test_zero(self):
        assert self._mul([0], [12345])[0] == 0

    def test_random_pairs_vs_plaintext(self):
        rng = np.random.default_rng(7)
        xs = rng.integers(0, 2**64, 1000, dtype=np.uint64)
        ys = rng.integers(0, 2**64, 1000, dtype=np.uint64)
        got = self._mul(xs, ys)
        assert np.array_equal(got, (xs * ys))

    def test_exhaustive_ring8(self):
        xs, ys = np.meshgrid(np.arange(256, dtype=np.uint64), np.arange(256, dtype=np.uint64))
        got = self._mul(xs.ravel(), ys.ravel(), RING8)
        assert np.array_equal(got, (xs.ravel() * ys.ravel()) & np.uint64(0xFF))

    def test_triple_reuse_aborts(self):
        cfg = DEFAULT_CONFIG
        rng = np.random.default_rng(8)
        x0, x1 = share(np.array([3], dtype=np.uint64), rng)
        y0, y1 = share(np.array([5], dtype=np.uint64), rng)

        def fn(e):
            x = x0 if e.party_id == 0 else x1
            y = y0 if e.party_id == 0 else y1
            tr = e.bundle.ring_triples.take_ids([0])
            e.beaver_mul(x, y, tr)
            e.bundle.ring_triples.take_ids([0])  # reuse -> abort

        with pytest.raises(ProtocolAbort, match="reuse"):
            run_pair(cfg, Budget(ring_triples=4), fn)

    def test_exhaustion_aborts(self):
        rng = np.random.default_rng(9)
        x0, x1 = share(np.arange(10, dtype=np.uint64), rng)

        def fn(e):
            x = x0 if e.party_id == 0 else x1
            e.beaver_mul(x, x)

        with pytest.raises(ProtocolAbort, match="exhausted"):
            run_pair(DEFAULT_CONFIG, Budget(ring_triples=5), fn)


class TestTruncate:
    def test_square_of_one_point_five(self):
        cfg = DEFAULT_CONFIG
        prod = encode_fixed(1.5, cfg) * encode_fixed(1.5, cfg)
        assert prod == 37_748_736
        rng = np.random.default_rng(3)
        s0, s1 = share(np.array([prod], dtype=np.uint64), rng, cfg)
        r0, r1, _ = run_pair(cfg, Budget(), lambda e: e.truncate(s0 if e.party_id == 0 else s1))
        val = signed_view(reconstruct(r0, r1), cfg)[0] / cfg.scale
        assert abs(val - 2.25) <= 2**-12

    def test_zero_exact(self):
        r0, r1, _ = run_pair(
            DEFAULT_CONFIG,
            Budget(),
            lambda e: e.truncate(np.zeros(1, dtype=np.uint64)),
        )
        assert reconstruct(r0, r1)[0] == 0

    def test_error_budget(self):
        # 10,000 random in-range products: error <= 1 ulp in >= 99.9%
        cfg = DEFAULT_CONFIG
        rng = np.random.default_rng(4)
        vals = rng.uniform(-60, 60, 10_000)
        prods = (encode_array(vals, cfg) * encode_array(rng.uniform(-8, 8, 10_000), cfg)) & np.uint64(cfg.mask)
        s0, s1 = share(prods, rng, cfg)
        r0, r1, _ = run_pair(cfg, Budget(), lambda e: e.truncate(s0 if e.party_id == 0 else s1))
        got = signed_view(reconstruct(r0, r1), cfg)
        want = signed_view(truncate_signed(prods, cfg.f, cfg), cfg)
        ok = np.abs(got - want) <= 1
        assert ok.mean() >= 0.999


class TestMsbDrelu:
    def _msb(self, xs, cfg):
        rng = np.random.default_rng(6)
        n = len(xs)
        s0, s1 = share(np.asarray(xs, dtype=np.uint64), rng, cfg)
        b = Budget(comparison_tuples=n, bit_triples=n * (cfg.ring_bits - 1))
        r0, r1, _ = run_pair(cfg, b, lambda e: e.msb(s0 if e.party_id == 0 else s1))
        return reconstruct_bits(r0, r1)

    def test_exhaustive_ring8(self):
        xs = np.arange(256, dtype=np.uint64)
        got = self._msb(xs, RING8)
        assert np.array_equal(got, (xs >> np.uint64(7)).astype(np.uint8))

    def test_negative_one(self):
        assert self._msb(np.array([encode_fixed(-1.0)], dtype=np.uint64), DEFAULT_CONFIG)[0] == 1

    def test_zero(self):
        assert self._msb(np.array([0], dtype=np.uint64), DEFAULT_CONFIG)[0] == 0

    def test_relu_values(self):
        cfg = DEFAULT_CONFIG
        xs = np.array([encode_fixed(2.0), encode_fixed(-2.0), 0], dtype=np.uint64)
        rng = np.random.default_rng(10)
        s0, s1 = share(xs, rng, cfg)
        n = len(xs)
        b = Budget(
            comparison_tuples=n,
            bit_triples=n * (cfg.ring_bits - 1),
            bit_ring_pairs=n,
            ring_triples=n,
        )
        r0, r1, _ = run_pair(cfg, b, lambda e: e.relu(s0 if e.party_id == 0 else s1))
        got = signed_view(reconstruct(r0, r1), cfg) / cfg.scale
        assert got.tolist() == [2.0, 0.0, 0.0]

    def test_drelu_exhaustive_ring8(self):
        cfg = RING8
        xs = np.arange(256, dtype=np.uint64)
        rng = np.random.default_rng(11)
        s0, s1 = share(xs, rng, cfg)
        b = Budget(comparison_tuples=256, bit_triples=256 * 7)
        r0, r1, _ = run_pair(cfg, b, lambda e: e.drelu(s0 if e.party_id == 0 else s1))
        got = reconstruct_bits(r0, r1)
        want = (signed_view(xs, cfg) >= 0).astype(np.uint8)
        assert np.array_equal(got, want)


class TestMatmul:
    def _matmul(self, W, x_batch, bias, cfg=DEFAULT_CONFIG):
        rng = np.random.default_rng(12)
        w_sh = share(W, rng, cfg)
        x_sh = share(x_batch, rng, cfg)
        b_sh = share(bias, rng, cfg)
        n = x_batch.shape[0] * W.shape[0] * W.shape[1]
        r0, r1, _ = run_pair(
            cfg,
            Budget(ring_triples=n),
            lambda e: e.matmul(w_sh[e.party_id], x_sh[e.party_id], b_sh[e.party_id]),
        )
        return reconstruct(r0.ravel(), r1.ravel(), cfg).reshape(r0.shape)

    def test_identity(self):
        cfg = DEFAULT_CONFIG
        x = encode_array(np.array([[0.5, -1.25, 3.0]]), cfg)
        W = encode_array(np.eye(3), cfg)
        got = self._matmul(W, x, np.zeros(3, dtype=np.uint64))
        want = signed_view(x, cfg)
        assert np.abs(signed_view(got, cfg) - want).max() <= 1

    def test_zero_weights_bias_exact(self):
        cfg = DEFAULT_CONFIG
        x = encode_array(np.random.default_rng(1).uniform(-1, 1, (4, 3)), cfg)
        bias = encode_array(np.array([0.5, -0.75]), cfg)
        got = self._matmul(np.zeros((2, 3), dtype=np.uint64), x, bias)
        want = np.broadcast_to(signed_view(bias, cfg), (4, 2))
        assert np.abs(signed_view(got, cfg) - want).max() <= 1

    def test_random_vs_plaintext_oracle(self):
        cfg = DEFAULT_CONFIG
        rng = np.random.default_rng(13)
        from truce.core.inference import ring_matvec

        for _ in range(20):
            W = encode_array(rng.uniform(-1, 1, (4, 4)), cfg)
            bias = encode_array(rng.uniform(-1, 1, 4), cfg)
            x = encode_array(rng.uniform(-1, 1, (5, 4)), cfg)
            got = self._matmul(W, x, bias)
            z = (ring_matvec(W, x, cfg) + (bias.astype(np.uint64) << np.uint64(cfg.f))) & np.uint64(cfg.mask)
            want = signed_view(truncate_signed(z, cfg.f, cfg), cfg)
            assert np.abs(signed_view(got, cfg) - want).max() <= 4 * 1  # d * 1 ulp slack


class TestArgmaxOnehot:
    def _argmax(self, logits_float, cfg=DEFAULT_CONFIG):
        rng = np.random.default_rng(14)
        logits = encode_array(np.asarray(logits_float), cfg)
        t, d = logits.shape
        s0, s1 = share(logits, rng, cfg)
        from truce.mpc.randomness import argmax_budget

        b = argmax_budget(d, cfg).scaled(t)
        r0, r1, engines = run_pair(
            cfg, b, lambda e: e.argmax_onehot((s0 if e.party_id == 0 else s1).reshape(t, d))
        )
        return reconstruct_bits(r0, r1), engines

    def test_simple(self):
        onehot, _ = self._argmax([[1.0, 3.0, 2.0]])
        assert onehot.tolist() == [[0, 1, 0]]

    def test_degenerate_single_class(self):
        onehot, engines = self._argmax([[4.0]])
        assert onehot.tolist() == [[1]]
        assert engines[0].transcript.sent_payload_bytes() == 0  # zero communication

    def test_tie_lowest_index(self):
        onehot, _ = self._argmax([[2.0, 2.0, 1.0]])
        assert onehot.tolist() == [[1, 0, 0]]

    def test_random_vs_plaintext(self):
        rng = np.random.default_rng(15)
        logits = rng.uniform(-4, 4, (200, 5))
        onehot, _ = self._argmax(logits)
        # exact secret values: argmax always exact
        from truce.core import quantize

        q = np.vectorize(quantize)(logits)
        assert np.array_equal(np.argmax(onehot, axis=1), np.argmax(q, axis=1))
        assert np.array_equal(onehot.sum(axis=1), np.ones(200))


class TestEndToEnd:
    def test_matches_plaintext_accuracy(self):
        rng = np.random.default_rng(16)
        spec, w = make_mlp(rng, (6, 8, 4))
        ds = make_separated_dataset(spec, w, rng, 64)
        result = run_local_mpc(spec, w, ds, MpcSessionConfig())
        preds = predict_dataset(spec, w, ds)
        z = [int(p == l) for p, l in zip(preds, ds.labels_array())]
        assert result.accuracy == compute_accuracy(z)

    def test_perfect_model_aggregate_no_per_sample_reveal(self):
        rng = np.random.default_rng(17)
        spec, w = make_mlp(rng, (4, 3))
        ds = make_separated_dataset(spec, w, rng, 8)
        preds = predict_dataset(spec, w, ds)
        perfect = Dataset(
            tuple(DataPoint(p.input, int(c)) for p, c in zip(ds.points, preds)),
            "perfect",
            4,
            3,
        )
        result = run_local_mpc(spec, w, perfect, MpcSessionConfig())
        assert result.accuracy == 1
        report = classify_reveals(result, "aggregate_only")
        assert report["ok"]
        assert "per_sample_outcome" not in report["kinds"]

    def test_all_wrong_labels(self):
        rng = np.random.default_rng(18)
        spec, w = make_mlp(rng, (4, 3))
        ds = make_separated_dataset(spec, w, rng, 10)
        preds = predict_dataset(spec, w, ds)
        wrong = Dataset(
            tuple(DataPoint(p.input, int((c + 1) % 3)) for p, c in zip(ds.points, preds)),
            "wrong",
            4,
            3,
        )
        result = run_local_mpc(spec, w, wrong, MpcSessionConfig())
        assert result.accuracy == 0

    def test_per_sample_policy(self):
        rng = np.random.default_rng(19)
        spec, w = make_mlp(rng, (5, 6, 3))
        ds = make_separated_dataset(spec, w, rng, 32)
        result = run_local_mpc(spec, w, ds, MpcSessionConfig(reveal_policy="per_sample"))
        preds = predict_dataset(spec, w, ds)
        z = tuple(int(p == l) for p, l in zip(preds, ds.labels_array()))
        assert result.per_sample_outcomes == z

    def test_budget_matches_dry_run_consumption(self):
        rng = np.random.default_rng(20)
        spec, w = make_mlp(rng, (4, 5, 3))
        ds = make_separated_dataset(spec, w, rng, 10)
        result = run_local_mpc(spec, w, ds, MpcSessionConfig())
        assert result.consumed == result.budget

    def test_simple_budget_formula_terms(self):
        # 1 layer, d_in=4, d_out=2, t=10: matmul triples = 10*(4*2) = 80
        spec = ModelSpec((4, 2))
        b = budget_for(spec, 10)
        from truce.mpc.randomness import argmax_budget

        expected_ring = 80 + argmax_budget(2, DEFAULT_CONFIG).ring_triples * 10
        assert b.ring_triples == expected_ring

    def test_zero_size_budget(self):
        assert budget_for(ModelSpec((1, 1)), 0) == Budget()

    def test_transcripts_deterministic(self):
        rng = np.random.default_rng(21)
        spec, w = make_mlp(rng, (4, 5, 3))
        ds = make_separated_dataset(spec, w, rng, 12)
        cfgs = MpcSessionConfig(session_seed=5, dealer_seed=9)
        r1 = run_local_mpc(spec, w, ds, cfgs)
        r2 = run_local_mpc(spec, w, ds, cfgs)
        for a, b in zip(r1.transcripts, r2.transcripts):
            assert a.message_bytes() == b.message_bytes()

    def test_metering_matches_analytic(self):
        rng = np.random.default_rng(22)
        spec, w = make_mlp(rng, (8, 4))
        ds = make_separated_dataset(spec, w, rng, 16)
        result = run_local_mpc(spec, w, ds, MpcSessionConfig())
        model = analytic_payload_bytes(spec, 16)
        assert result.payload_bytes[0] == model["party0"]
        assert result.payload_bytes[1] == model["party1"]

    def test_no_plaintext_on_wire(self):
        rng = np.random.default_rng(23)
        spec, w = make_mlp(rng, (4, 3))
        ds = make_separated_dataset(spec, w, rng, 8)
        result = run_local_mpc(spec, w, ds, MpcSessionConfig())
        from truce.core import canonical_encode

        wire = b"".join(tr.observed_bytes() for tr in result.transcripts)
        for p in ds.points:
            assert canonical_encode(p) not in wire

    def test_config_mismatch_aborts(self):
        # parties disagreeing on the reveal policy must abort in the handshake
        rng = np.random.default_rng(24)
        spec, w = make_mlp(rng, (3, 2))
        ds = make_separated_dataset(spec, w, rng, 4)
        cfg = DEFAULT_CONFIG
        t = len(ds)
        budget = budget_for(spec, t, cfg)
        bundles = dealer_generate(budget, 1, cfg)
        chans = DuplexChannel.pair()
        sessions = [
            MpcSessionConfig(reveal_policy="aggregate_only"),
            MpcSessionConfig(reveal_policy="per_sample"),
        ]
        engines = [
            PartyEngine(i, cfg, chans[i], bundles[i], reveal_policy=sessions[i].reveal_policy)
            for i in (0, 1)
        ]
        errs = {}

        def runner(pid):
            try:
                engines[pid].handshake(sessions[pid].digest(spec, t))
            except Exception as e:
                errs[pid] = e

        threads = [threading.Thread(target=runner, args=(i,)) for i in (0, 1)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert any(isinstance(e, ProtocolAbort) for e in errs.values())


class TestBundleSerialization:
    def test_roundtrip(self):
        b0, b1 = dealer_generate(Budget(5, 7, 3, 2), 42)
        for b in (b0, b1):
            data = serialize_bundle(b)
            back = deserialize_bundle(data)
            assert back.party_id == b.party_id
            for name in ("ring_triples", "bit_triples", "comparison_tuples", "bit_ring_pairs"):
                pa, pb = getattr(b, name), getattr(back, name)
                for k in pa.arrays:
                    assert np.array_equal(pa.arrays[k], pb.arrays[k])
