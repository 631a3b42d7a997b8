import numpy as np
import pytest

from polarbp.bp import LLR_MAX
from polarbp.channel import ChannelConfig, awgn_llr, modulate_qpsk
from polarbp.code import assemble_u, bhattacharyya_construct, encode
from polarbp.decoders import (
    DecoderParams,
    decode_bp,
    decode_fpbp,
    decode_nabp,
    decode_ppbp,
    decode_sc,
    initial_reset_value,
    make_rng,
)
from polarbp.trellis import PermutationEvent, modified_nodes

from conftest import noiseless_llr


def noisy_llr(spec, crc24, seed, ebno_db=1.0):
    rng = make_rng([seed])
    info = rng.integers(0, 2, spec.info_len).astype(np.uint8)
    u = assemble_u(spec, info, crc24)
    chan = ChannelConfig(ebno_db, spec.energy_rate)
    return info, awgn_llr(modulate_qpsk(encode(spec, u)), chan, rng)


class TestParamsValidation:
    def test_variant_and_mode_checked(self, spec64):
        with pytest.raises(ValueError):
            DecoderParams(variant="scl").validate(spec64)
        with pytest.raises(ValueError):
            DecoderParams(mode="offset").validate(spec64)

    def test_crc_stop_needs_crc(self):
        spec = bhattacharyya_construct(8, 4, crc_len=0)
        with pytest.raises(ValueError, match="CRC"):
            DecoderParams().validate(spec)
        DecoderParams(stop_mode="reencode").validate(spec)

    def test_fpbp_budget_product(self, spec64):
        good = DecoderParams(variant="fpbp", iters_per_graph=10, max_graphs=5, max_iters=50)
        good.validate(spec64)
        with pytest.raises(ValueError, match="max_iters"):
            DecoderParams(variant="fpbp", iters_per_graph=10, max_graphs=5, max_iters=60).validate(spec64)

    def test_ppbp_bounds(self, spec64):
        base = dict(variant="ppbp", reset_divisor=8, reset_floor=4)
        DecoderParams(span_max=2, level_max=5, **base).validate(spec64)
        with pytest.raises(ValueError):
            DecoderParams(span_max=1, level_max=5, **base).validate(spec64)
        with pytest.raises(ValueError):
            DecoderParams(span_max=7, level_max=5, **base).validate(spec64)
        with pytest.raises(ValueError):
            DecoderParams(span_max=2, level_max=6, **base).validate(spec64)

    def test_nabp_needs_variance(self, spec64):
        with pytest.raises(ValueError):
            DecoderParams(variant="nabp").validate(spec64)
        DecoderParams(variant="nabp", noise_var=0.0).validate(spec64)


class TestDecodeBp:
    def test_noiseless_stops_fast(self, spec64, crc24):
        rng = np.random.default_rng(0)
        params = DecoderParams(variant="bp", max_iters=64)
        for _ in range(10):
            info = rng.integers(0, 2, spec64.info_len).astype(np.uint8)
            u, llr = noiseless_llr(spec64, info, crc24)
            out = decode_bp(spec64, crc24, params, llr)
            assert out.stopped_early
            assert out.iterations_used <= params.warmup + spec64.n
            assert np.array_equal(out.u_hat, u)
            assert np.array_equal(out.info_hat, info)

    def test_zero_budget_returns_initial_decision(self, spec64, crc24):
        _, llr = noisy_llr(spec64, crc24, seed=1)
        out = decode_bp(spec64, crc24, DecoderParams(max_iters=0), llr)
        assert not out.stopped_early
        assert out.iterations_used == 0
        assert out.digest_tail == ()
        assert not out.u_hat.any()

    def test_all_zero_input_never_stops(self, spec64, crc24):
        # with no channel evidence the decision beliefs stay identically
        # zero, and the liveness gate keeps the parity stop from firing on
        # the vacuous all-zero word
        out = decode_bp(spec64, crc24, DecoderParams(max_iters=50), np.zeros(64))
        assert not out.stopped_early
        assert out.iterations_used == 50
        assert not out.u_hat.any()

    def test_stopped_early_implies_crc_pass(self, spec64, crc24):
        from polarbp.code import crc_check

        params = DecoderParams(max_iters=200)
        for seed in range(30):
            _, llr = noisy_llr(spec64, crc24, seed=seed, ebno_db=5.0)
            out = decode_bp(spec64, crc24, params, llr)
            if out.stopped_early:
                assert crc_check(crc24, out.u_hat[~spec64.frozen])
            else:
                assert out.iterations_used == params.max_iters


class TestDecodeFpbp:
    def test_single_graph_equals_plain_bp(self, spec64, crc24):
        _, llr = noisy_llr(spec64, crc24, seed=2, ebno_db=3.0)
        fp = DecoderParams(variant="fpbp", iters_per_graph=50, max_graphs=1, max_iters=50)
        bp = DecoderParams(variant="bp", max_iters=50)
        a = decode_fpbp(spec64, crc24, fp, llr, rng=make_rng([0]))
        b = decode_bp(spec64, crc24, bp, llr)
        assert np.array_equal(a.u_hat, b.u_hat)
        assert a.stopped_early == b.stopped_early
        assert a.iterations_used == b.iterations_used
        assert a.digest_tail == b.digest_tail
        assert a.permutations_used == 1

    def test_noiseless_uses_first_graph(self, spec64, crc24):
        info = np.random.default_rng(3).integers(0, 2, spec64.info_len).astype(np.uint8)
        _, llr = noiseless_llr(spec64, info, crc24)
        params = DecoderParams(variant="fpbp", iters_per_graph=30, max_graphs=4, max_iters=120)
        out = decode_fpbp(spec64, crc24, params, llr)
        assert out.stopped_early and out.permutations_used == 1
        assert np.array_equal(out.info_hat, info)

    def test_interior_discarded_on_each_permutation(self, spec64, crc24):
        _, llr = noisy_llr(spec64, crc24, seed=4, ebno_db=-2.0)
        params = DecoderParams(variant="fpbp", iters_per_graph=8, max_graphs=6, max_iters=48)
        resets = []

        def observer(rec, before, after):
            resets.append(
                (
                    rec.kind,
                    not after.L[1:].any() and not after.R[: spec64.n].any(),
                    np.array_equal(after.L[0], before.L[0]),
                    np.array_equal(after.R[spec64.n], before.R[spec64.n]),
                )
            )

        out = decode_fpbp(spec64, crc24, params, llr, rng=make_rng([5]), event_observer=observer)
        assert not out.stopped_early and out.permutations_used == 6
        assert len(resets) == 5
        assert all(kind == "full" and z and ch and pr for kind, z, ch, pr in resets)

    def test_large_budget_accounting(self, crc24):
        # hundred-graph budget: the accounting must hold at scale
        spec = bhattacharyya_construct(16, 8 + 0, crc_len=0)
        params = DecoderParams(
            variant="fpbp", iters_per_graph=200, max_graphs=100, max_iters=20_000,
            stop_mode="reencode",
        )
        llr = make_rng([6]).normal(0, 0.3, 16)
        out = decode_fpbp(spec, None, params, llr, rng=make_rng([7]))
        assert out.iterations_used <= 20_000
        if not out.stopped_early:
            assert out.iterations_used == 20_000
            assert out.permutations_used == 100


class TestDecodePpbp:
    def test_gap_arithmetic_worked_examples(self):
        wide = PermutationEvent(level=1, span=10, block=0,
                                order=tuple(1 << ((k + 1) % 10) for k in range(10)))
        assert wide.invalidated_count == 1024 * 9
        assert max(15, wide.invalidated_count // 100) == 92
        small = PermutationEvent(level=1, span=2, block=0, order=(2, 1))
        assert small.invalidated_count == 4
        assert max(15, small.invalidated_count // 100) == 15

    def test_initial_reset_for_large_and_short_budgets(self):
        spec = bhattacharyya_construct(1024, 512 + 24, crc_len=24)
        big = DecoderParams(variant="ppbp", max_iters=20_000, span_max=10, level_max=9,
                            reset_divisor=100, reset_floor=15)
        assert initial_reset_value(spec, big) == 92
        short = DecoderParams(variant="ppbp", max_iters=200, span_max=2, level_max=6,
                              reset_divisor=8, reset_floor=4)
        assert initial_reset_value(spec, short) == 100
        override = DecoderParams(variant="ppbp", max_iters=200, span_max=2, level_max=6,
                                 reset_divisor=8, reset_floor=4, initial_reset=37)
        assert initial_reset_value(spec, override) == 37

    def test_noiseless_never_permutes(self, spec64, crc24):
        info = np.random.default_rng(8).integers(0, 2, spec64.info_len).astype(np.uint8)
        _, llr = noiseless_llr(spec64, info, crc24)
        params = DecoderParams(variant="ppbp", max_iters=100, span_max=3, level_max=5,
                               reset_divisor=8, reset_floor=4)
        out = decode_ppbp(spec64, crc24, params, llr)
        assert out.stopped_early and out.permutations_used == 0
        assert np.array_equal(out.info_hat, info)

    def test_state_retention_and_zeroing(self, spec64, crc24):
        _, llr = noisy_llr(spec64, crc24, seed=9, ebno_db=-3.0)
        params = DecoderParams(variant="ppbp", max_iters=120, span_max=4, level_max=5,
                               reset_divisor=4, reset_floor=6, initial_reset=10)
        failures = []

        def observer(rec, before, after):
            mask = np.zeros((spec64.n + 1, spec64.N), dtype=bool)
            for col, row in modified_nodes(rec.event):
                mask[col - 1, row] = True
            if after.L[mask].any() or after.R[mask].any():
                failures.append("nonzero inside reset set")
            if not (
                np.array_equal(after.L[~mask], before.L[~mask])
                and np.array_equal(after.R[~mask], before.R[~mask])
            ):
                failures.append("retained values changed")

        out = decode_ppbp(spec64, crc24, params, llr, rng=make_rng([10]), event_observer=observer)
        assert out.permutations_used >= 5
        assert not failures

    def test_gap_audit_from_log(self, spec64, crc24):
        _, llr = noisy_llr(spec64, crc24, seed=11, ebno_db=-3.0)
        params = DecoderParams(variant="ppbp", max_iters=200, span_max=4, level_max=5,
                               reset_divisor=4, reset_floor=6, initial_reset=12)
        out = decode_ppbp(spec64, crc24, params, llr, rng=make_rng([12]))
        assert not out.stopped_early
        log = out.permutation_log
        assert log[0].iteration == 12
        for prev, nxt in zip(log, log[1:]):
            assert prev.next_gap == max(params.reset_floor,
                                        prev.event.invalidated_count // params.reset_divisor)
            assert nxt.iteration - prev.iteration == prev.next_gap

    def test_seed_determinism(self, spec64, crc24):
        _, llr = noisy_llr(spec64, crc24, seed=13, ebno_db=-2.0)
        params = DecoderParams(variant="ppbp", max_iters=150, span_max=4, level_max=5,
                               reset_divisor=4, reset_floor=5, initial_reset=10, seed=77)
        a = decode_ppbp(spec64, crc24, params, llr)
        b = decode_ppbp(spec64, crc24, params, llr)
        assert np.array_equal(a.u_hat, b.u_hat)
        assert a.digest_tail == b.digest_tail
        assert [r.event for r in a.permutation_log] == [r.event for r in b.permutation_log]
        c = decode_ppbp(spec64, crc24, params, llr, rng=make_rng([78]))
        assert [r.event for r in c.permutation_log] != [r.event for r in a.permutation_log]


class TestDecodeNabp:
    def test_zero_variance_is_plain_bp(self, spec64, crc24):
        _, llr = noisy_llr(spec64, crc24, seed=14, ebno_db=3.0)
        na = DecoderParams(variant="nabp", noise_var=0.0, max_iters=80)
        bp = DecoderParams(variant="bp", max_iters=80)
        a = decode_nabp(spec64, crc24, na, llr, rng=make_rng([1]))
        b = decode_bp(spec64, crc24, bp, llr)
        assert np.array_equal(a.u_hat, b.u_hat)
        assert a.iterations_used == b.iterations_used
        assert a.digest_tail == b.digest_tail

    def test_noiseless_still_decodes(self, spec64, crc24):
        rng = np.random.default_rng(15)
        params = DecoderParams(variant="nabp", noise_var=0.36, max_iters=80, seed=16)
        for _ in range(5):
            info = rng.integers(0, 2, spec64.info_len).astype(np.uint8)
            _, llr = noiseless_llr(spec64, info, crc24)
            out = decode_nabp(spec64, crc24, params, llr)
            assert out.stopped_early
            assert np.array_equal(out.info_hat, info)

    def test_single_injection_semantics(self, spec64, crc24):
        # with the period beyond the budget only the initial perturbation
        # applies, and it must equal one documented draw on the channel column
        _, llr = noisy_llr(spec64, crc24, seed=17, ebno_db=3.0)
        params = DecoderParams(variant="nabp", noise_var=0.36, max_iters=40, noise_period=1000)
        out = decode_nabp(spec64, crc24, params, llr, rng=make_rng([18]))
        noise = make_rng([18]).normal(0.0, np.sqrt(0.36), 64)
        perturbed = np.clip(np.clip(llr, -LLR_MAX, LLR_MAX) + noise, -LLR_MAX, LLR_MAX)
        ref = decode_bp(spec64, crc24, DecoderParams(variant="bp", max_iters=40), perturbed)
        assert np.array_equal(out.u_hat, ref.u_hat)
        assert out.iterations_used == ref.iterations_used
        assert out.digest_tail == ref.digest_tail

    def test_injected_variance_statistics(self):
        # the injection draw validated above; its sample variance over 1e5
        # values must sit within three standard errors of the configured one
        samples = np.concatenate(
            [make_rng([s]).normal(0.0, np.sqrt(0.36), 1024) for s in range(100)]
        )
        m = samples.size
        tol = 3.0 * 0.36 * np.sqrt(2.0 / (m - 1))
        assert abs(samples.var(ddof=1) - 0.36) <= tol


class TestDecodeSc:
    def test_noiseless_exhaustive_n8(self):
        spec = bhattacharyya_construct(8, 4, crc_len=0)
        for v in range(16):
            info = np.array([(v >> i) & 1 for i in range(4)], dtype=np.uint8)
            u, llr = noiseless_llr(spec, info)
            assert np.array_equal(decode_sc(spec, llr), u)

    def test_agreement_with_bp_on_accepted_frames(self, spec64, crc24):
        params = DecoderParams(variant="bp", max_iters=100)
        chan = ChannelConfig(8.0, spec64.energy_rate)
        accepted = agreed = 0
        for t in range(300):
            rng = make_rng([19, t])
            info = rng.integers(0, 2, spec64.info_len).astype(np.uint8)
            u = assemble_u(spec64, info, crc24)
            llr = awgn_llr(modulate_qpsk(encode(spec64, u)), chan, rng)
            out = decode_bp(spec64, crc24, params, llr)
            if not out.stopped_early:
                continue
            accepted += 1
            agreed += np.array_equal(decode_sc(spec64, llr), out.u_hat)
        assert accepted >= 100
        assert agreed / accepted >= 0.99
