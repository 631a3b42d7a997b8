"""Acceptance suite: one test per release criterion, in order.

Each test prints a PASS line with its measured numbers (visible with -s).
The two sweep-heavy criteria share module-scoped fixtures; everything is
seeded, so reruns are bit-identical. Full module runtime is minutes,
dominated by the N=128 determinism sweeps.
"""

import numpy as np
import pytest

from polarbp.channel import COMPONENT_AMPLITUDE, ChannelConfig, awgn_llr, modulate_qpsk
from polarbp.cli import main as cli_main
from polarbp.code import CrcConfig, assemble_u, bhattacharyya_construct, encode
from polarbp.decoders import (
    DecoderParams,
    decode_bp,
    decode_fpbp,
    decode_nabp,
    decode_ppbp,
    decode_sc,
    make_rng,
)
from polarbp.simulate import StopRule, read_results_csv, sweep
from polarbp.trellis import (
    PermutationEvent,
    full_permute,
    graph_encode,
    identity_schedule,
    modified_nodes,
    partial_permute,
    sample_partial_event,
)

from conftest import dense_generator

CRC24 = CrcConfig.crc24()
MASTER_SEED = 20260808


def report(num, detail):
    print(f"criterion {num:02d} PASS: {detail}")


# --------------------------------------------------------------------------
# criterion 1: encoding oracle


def test_c01_encoding_matches_dense_matrix():
    rng = np.random.default_rng(101)
    checked = 0
    for N in (2, 4, 8, 16, 32, 64):
        G = dense_generator(N)
        sched = identity_schedule(N)
        if N <= 8:
            inputs = [
                np.array([(v >> i) & 1 for i in range(N)], dtype=np.uint8) for v in range(2**N)
            ]
        else:
            inputs = [rng.integers(0, 2, N).astype(np.uint8) for _ in range(1000)]
        for u in inputs:
            ref = u @ G % 2
            assert np.array_equal(graph_encode(sched, u), ref)
        checked += len(inputs)
    report(1, f"{checked} inputs across N=2..64, graph encoding == dense matrix, exact")


# --------------------------------------------------------------------------
# criterion 2: over-complete representation under event compositions


def test_c02_transform_invariant_under_compositions():
    rng = np.random.default_rng(202)
    total = 0
    for N in (8, 16, 32):
        base = identity_schedule(N)
        G = dense_generator(N)
        for _ in range(500):
            sched = base
            for _ in range(10):
                if rng.random() < 0.3:
                    sched = full_permute(sched, rng.permutation(sched.n) + 1)
                else:
                    sched = partial_permute(
                        sched, sample_partial_event(sched, rng, sched.n, sched.n - 1)
                    )
            sched.validate()
            for _ in range(5):
                u = rng.integers(0, 2, N).astype(np.uint8)
                assert np.array_equal(graph_encode(sched, u), u @ G % 2)
            total += 1
    report(2, f"{total} ten-event compositions at N=8/16/32, transform unchanged, exact")


# --------------------------------------------------------------------------
# criterion 3: invalidated-node accounting vs formula and brute force


def node_values(sched, u):
    vals = np.empty((sched.n + 1, sched.N), dtype=np.uint8)
    vals[sched.n] = u
    for stage in range(sched.n, 0, -1):
        v = vals[stage].copy()
        for start, stop, s in sched.runs(stage):
            blk = v[start:stop].reshape(-1, 2, s)
            blk[:, 0, :] ^= blk[:, 1, :]
        vals[stage - 1] = v
    return vals


def leg_invariant_rows(ev):
    out = set()
    w0 = ev.block * ev.block_width
    for col in range(ev.level + 1, ev.level + ev.span):
        moved = set(ev.scale_set[col - ev.level :]) ^ set(ev.order[col - ev.level :])
        for r in range(w0, w0 + ev.block_width):
            if all(r & s for s in moved):
                out.add((col, r))
    return out


def test_c03_invalidated_node_equivalence():
    # Count equality with the closed-form node budget is exact for every
    # event. The hard-value brute-force diff is necessarily one-sided: rows
    # riding the pass-through leg of every reassigned stride keep their
    # value function, so the diff is checked sharply against that rule
    # (see the decisions ledger for the analysis).
    rng = np.random.default_rng(303)
    events = 0
    for N in (8, 16, 32, 64):
        base = identity_schedule(N)
        n = base.n
        for span in range(2, n + 1):
            for level in range(1, n - span + 2):
                for block in range(N >> (level + span - 1)):
                    scales = tuple(1 << (level - 1 + k) for k in range(span))
                    for order in (scales[1:] + scales[:1], scales[::-1]):
                        if order == scales:
                            continue
                        ev = PermutationEvent(level=level, span=span, block=block, order=order)
                        nodes = modified_nodes(ev)
                        assert len(nodes) == (1 << (level + span - 1)) * (span - 1)
                        assert len(nodes) == ev.invalidated_count
                        permuted = partial_permute(base, ev)
                        union = set()
                        for _ in range(40):
                            u = rng.integers(0, 2, N).astype(np.uint8)
                            diff = node_values(base, u) != node_values(permuted, u)
                            touched = {(c + 1, r) for c, r in zip(*np.nonzero(diff))}
                            assert touched <= nodes
                            union |= touched
                        assert union == nodes - leg_invariant_rows(ev)
                        events += 1
    report(3, f"{events} events across N=8..64: formula counts exact, diff sharp")


# --------------------------------------------------------------------------
# criteria 4 and 5: permutation gap audit and state retention


@pytest.fixture(scope="module")
def ppbp_audit_runs():
    spec = bhattacharyya_construct(256, 128 + 24, crc_len=24)
    params = DecoderParams(
        variant="ppbp", max_iters=400, span_max=8, level_max=7,
        reset_divisor=18, reset_floor=15,
    )
    chan = ChannelConfig(-2.0, spec.energy_rate)
    runs = []

    for t in range(100):
        retention = []

        def observer(rec, before, after):
            mask = np.zeros((spec.n + 1, spec.N), dtype=bool)
            for col, row in modified_nodes(rec.event):
                mask[col - 1, row] = True
            zeroed = not after.L[mask].any() and not after.R[mask].any()
            kept = np.array_equal(after.L[~mask], before.L[~mask]) and np.array_equal(
                after.R[~mask], before.R[~mask]
            )
            retention.append((zeroed, kept))

        rng = make_rng([MASTER_SEED, t, 0])
        info = rng.integers(0, 2, spec.info_len).astype(np.uint8)
        u = assemble_u(spec, info, CRC24)
        llr = awgn_llr(modulate_qpsk(encode(spec, u)), chan, rng)
        out = decode_ppbp(
            spec, CRC24, params, llr, rng=make_rng([MASTER_SEED, t, 1]), event_observer=observer
        )
        runs.append((out, retention, params))
    return runs


def test_c04_reset_gap_trace_audit(ppbp_audit_runs):
    exhausted = 0
    gaps_checked = 0
    for out, _, params in ppbp_audit_runs:
        if out.stopped_early:
            continue
        exhausted += 1
        log = out.permutation_log
        assert len(log) >= 2
        for prev, nxt in zip(log, log[1:]):
            expected = max(params.reset_floor, prev.event.invalidated_count // params.reset_divisor)
            assert prev.next_gap == expected
            assert nxt.iteration - prev.iteration == expected
            gaps_checked += 1
    assert exhausted >= 95
    report(4, f"{exhausted} exhausted decodes, {gaps_checked} inter-permutation gaps exact")


def test_c05_state_retention_across_events(ppbp_audit_runs):
    events = 0
    for out, retention, _ in ppbp_audit_runs:
        assert len(retention) == len(out.permutation_log)
        for zeroed, kept in retention:
            assert zeroed and kept
            events += 1
    assert events >= 300
    report(5, f"{events} events: inside reset set exactly zero, outside bit-identical")


# --------------------------------------------------------------------------
# criterion 6: near-noiseless decoding across every variant


def test_c06_noiseless_decode_all_variants():
    decoders = {"bp": decode_bp, "fpbp": decode_fpbp, "ppbp": decode_ppbp, "nabp": decode_nabp}
    decodes = 0
    target_var = 1e-6
    for N in (64, 256):
        spec = bhattacharyya_construct(N, N // 2 + 24, crc_len=24)
        db = 10.0 * np.log10(COMPONENT_AMPLITUDE**2 / (2.0 * spec.energy_rate * target_var))
        chan = ChannelConfig(db, spec.energy_rate)
        assert chan.noise_var_per_dim == pytest.approx(target_var, rel=1e-12)
        variants = {
            "bp": DecoderParams(variant="bp", max_iters=100),
            "fpbp": DecoderParams(variant="fpbp", iters_per_graph=50, max_graphs=2, max_iters=100),
            "ppbp": DecoderParams(variant="ppbp", max_iters=100, span_max=4,
                                  level_max=spec.n - 1, reset_divisor=18, reset_floor=15),
            "nabp": DecoderParams(variant="nabp", max_iters=100, noise_var=0.36),
        }
        for t in range(25):
            rng = make_rng([606, N, t])
            info = rng.integers(0, 2, spec.info_len).astype(np.uint8)
            u = assemble_u(spec, info, CRC24)
            llr = awgn_llr(modulate_qpsk(encode(spec, u)), chan, rng)
            for name, params in variants.items():
                out = decoders[name](spec, CRC24, params, llr, rng=make_rng([607, N, t]))
                assert out.stopped_early, (name, N, t)
                assert np.array_equal(out.info_hat, info), (name, N, t)
                if name == "bp":
                    assert out.iterations_used <= params.warmup + spec.n
                decodes += 1
            assert np.array_equal(decode_sc(spec, llr), u)
    report(6, f"{decodes} decodes plus SC cross-checks at N=64/256, 100% recovery")


# --------------------------------------------------------------------------
# criterion 7: channel LLR statistics


def test_c07_llr_moments_match_analytics():
    rng = np.random.default_rng(707)
    cfg = ChannelConfig(2.0, rate_for_energy=0.5)
    m = 1_000_000
    llr = awgn_llr(modulate_qpsk(np.zeros(m, dtype=np.uint8)), cfg, rng)
    a2 = COMPONENT_AMPLITUDE**2
    mean_ref = 2.0 * a2 / cfg.noise_var_per_dim
    var_ref = 4.0 * a2 / cfg.noise_var_per_dim
    mean_err = abs(llr.mean() - mean_ref) / np.sqrt(var_ref / m)
    var_err = abs(llr.var(ddof=1) - var_ref) / (var_ref * np.sqrt(2.0 / (m - 1)))
    assert mean_err <= 3.0
    assert var_err <= 3.0
    report(7, f"1e6 samples at 2 dB: mean off {mean_err:.2f} SE, variance off {var_err:.2f} SE")


# --------------------------------------------------------------------------
# criteria 8 and 11: FER monotonicity and parallelism determinism (via CLI)


@pytest.fixture(scope="module")
def monotonicity_csvs(tmp_path_factory):
    base = tmp_path_factory.mktemp("det")
    paths = {}
    for workers in (8, 1):
        out = base / f"bp_par{workers}.csv"
        args = [
            "simulate", "--n", "128", "--k", "88", "--crc", "24", "--decoder", "bp",
            "--max-iters", "200", "--ebno", "1.0,2.0,3.0", "--trials", "10000",
            "--seed", str(MASTER_SEED), "--parallelism", str(workers),
            "--batch", "256", "--no-figures", "--out-csv", str(out),
        ]
        assert cli_main(args) == 0
        paths[workers] = out
    return paths


def test_c08_fer_strictly_decreasing_with_disjoint_intervals(monotonicity_csvs):
    rows = read_results_csv(monotonicity_csvs[8])
    assert [r["ebno_db"] for r in rows] == [1.0, 2.0, 3.0]
    assert all(r["trials"] >= 10_000 for r in rows)
    fers = [r["fer"] for r in rows]
    assert fers[0] > fers[1] > fers[2]
    assert rows[2]["fer_hi"] < rows[0]["fer_lo"]
    report(8, f"fer {fers[0]:.4f} > {fers[1]:.4f} > {fers[2]:.4f}, 1 vs 3 dB intervals disjoint")


def test_c11_parallelism_byte_identical(monotonicity_csvs):
    a = monotonicity_csvs[8].read_bytes()
    b = monotonicity_csvs[1].read_bytes()
    assert a == b
    report(11, f"parallelism 8 vs 1 CSVs byte-identical ({len(a)} bytes)")


# --------------------------------------------------------------------------
# criterion 9: iteration-budget saturation


def test_c09_budget_saturation():
    spec = bhattacharyya_construct(256, 128 + 24, crc_len=24)
    rule = StopRule(max_trials=2048, target_errors=150, batch=256)
    stats = {}
    for budget in (100, 400):
        params = DecoderParams(variant="bp", max_iters=budget)
        stats[budget] = sweep(spec, CRC24, params, [2.5], rule, master_seed=MASTER_SEED)[0]
        assert stats[budget].frame_errors >= 100
    lo100, hi100 = stats[100].fer_lo, stats[100].fer_hi
    lo400, hi400 = stats[400].fer_lo, stats[400].fer_hi
    assert max(lo100, lo400) <= min(hi100, hi400), "intervals must overlap"
    report(
        9,
        f"fer(100)={stats[100].fer:.4f} in [{lo100:.4f},{hi100:.4f}], "
        f"fer(400)={stats[400].fer:.4f} in [{lo400:.4f},{hi400:.4f}], overlapping",
    )


# --------------------------------------------------------------------------
# criterion 10: window permutations do no harm at a short budget


def test_c10_ppbp_does_no_harm():
    spec = bhattacharyya_construct(256, 128 + 24, crc_len=24)
    points = [3.0, 3.5, 4.0]
    rule = StopRule(max_trials=2048, target_errors=150, batch=256)
    bp = DecoderParams(variant="bp", max_iters=200)
    pp = DecoderParams(
        variant="ppbp", max_iters=200, span_max=2, level_max=spec.n - 2,
        reset_divisor=8, reset_floor=4,
    )
    bp_rows = sweep(spec, CRC24, bp, points, rule, master_seed=MASTER_SEED)
    pp_rows = sweep(spec, CRC24, pp, points, rule, master_seed=MASTER_SEED)
    top_bp, top_pp = bp_rows[-1], pp_rows[-1]
    assert top_bp.frame_errors >= 100 and top_pp.frame_errors >= 100
    assert top_pp.fer <= 1.2 * top_bp.fer
    low_bp, low_pp = bp_rows[0], pp_rows[0]
    assert low_pp.avg_iters <= 1.1 * low_bp.avg_iters
    report(
        10,
        f"highest point fer ratio {top_pp.fer / top_bp.fer:.3f} <= 1.2; "
        f"lowest point latency ratio {low_pp.avg_iters / low_bp.avg_iters:.3f} <= 1.1",
    )
