"""Monte Carlo trial execution, error classification and aggregation.

Every trial is a pure function of (master_seed, trial_index): source bits
and channel noise come from one counter-based generator, the decoder's
draws from a second. Sweeps therefore aggregate identically no matter how
trials are distributed over workers, and all counters stay integers until
the final ratios.

Plain iterative decoding with tracing off runs through a batched fast path
that decodes a whole block of trials on stacked arrays; per-frame results
are bit-identical to `run_trial` (covered by tests).
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bp import bp_iteration, hard_decision, init_state
from .channel import ChannelConfig, awgn_llr, modulate_qpsk
from .code import CodeSpec, CrcConfig, assemble_u, crc_check, encode, extract_info
from .decoders import (
    DecodeOutcome,
    DecoderParams,
    decode_bp,
    decode_fpbp,
    decode_nabp,
    decode_ppbp,
    make_rng,
)
from .trellis import identity_schedule

__all__ = [
    "CLASSIFY_WINDOW",
    "MAX_PERIOD",
    "StopRule",
    "TrialRecord",
    "SweepStats",
    "classify_error",
    "run_trial",
    "sweep",
    "wilson_interval",
    "CSV_COLUMNS",
    "append_results",
    "read_results_csv",
]

CLASSIFY_WINDOW = 16
MAX_PERIOD = 8

_DECODE = {"bp": decode_bp, "fpbp": decode_fpbp, "ppbp": decode_ppbp, "nabp": decode_nabp}


@dataclass(frozen=True)
class StopRule:
    """Per-point stopping: run until enough frame errors or the trial cap.

    `target_errors=None` always runs exactly `max_trials` trials. The rule
    is evaluated at batch boundaries so the executed trial set does not
    depend on the degree of parallelism.
    """

    max_trials: int = 1_000_000
    target_errors: int | None = 100
    batch: int = 256

    def __post_init__(self):
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        if self.target_errors is not None and self.target_errors < 1:
            raise ValueError("target_errors must be >= 1 or None")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    master_seed: int
    info: np.ndarray
    outcome: DecodeOutcome
    frame_error: bool
    bit_errors: int
    error_class: str


def classify_error(
    trace,
    stopped_early: bool,
    crc_pass_final: bool,
    window: int = CLASSIFY_WINDOW,
    max_period: int = MAX_PERIOD,
) -> str:
    """Sort an erroneous frame into one of three failure modes.

    A frame whose final decision carries a valid checksum settled on a
    wrong codeword; a constant decision tail did the same without the
    checksum noticing, a periodic tail cycles between candidates, and
    anything else never converged.
    """
    trace = list(trace)
    if not trace:
        raise ValueError("iteration trace is empty")
    if stopped_early or crc_pass_final:
        return "false_converged"
    tail = trace[-window:]
    if all(d == tail[0] for d in tail):
        return "false_converged"
    for p in range(2, max_period + 1):
        if len(tail) >= 2 * p and all(tail[i] == tail[i - p] for i in range(p, len(tail))):
            return "oscillation"
    return "unconverged"


def _source_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return make_rng([master_seed, trial_index, 0])


def _decoder_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return make_rng([master_seed, trial_index, 1])


def _draw_frame(spec, crc_cfg, chan, master_seed, trial_index):
    """Info bits and channel LLRs for one trial; fixed draw order."""
    rng = _source_rng(master_seed, trial_index)
    info = rng.integers(0, 2, size=spec.info_len).astype(np.uint8)
    u = assemble_u(spec, info, crc_cfg)
    x = encode(spec, u)
    llr = awgn_llr(modulate_qpsk(x), chan, rng)
    return info, llr


def _final_crc_pass(spec, crc_cfg, outcome) -> bool:
    if outcome.stopped_early:
        return True
    if spec.crc_len == 0 or crc_cfg is None:
        return False
    return bool(crc_check(crc_cfg, outcome.u_hat[~spec.frozen]))


def run_trial(
    spec: CodeSpec,
    crc_cfg: CrcConfig | None,
    params: DecoderParams,
    chan: ChannelConfig,
    trial_index: int,
    master_seed: int,
) -> TrialRecord:
    """Source, encode, channel, decode and classify one frame."""
    info, llr = _draw_frame(spec, crc_cfg, chan, master_seed, trial_index)
    outcome = _DECODE[params.variant](
        spec, crc_cfg, params, llr, rng=_decoder_rng(master_seed, trial_index)
    )
    frame_error = not np.array_equal(outcome.info_hat, info)
    bit_errors = int(np.count_nonzero(outcome.info_hat ^ info))
    if not frame_error:
        error_class = "none"
    elif not outcome.digest_tail:
        error_class = "unconverged"
    else:
        error_class = classify_error(
            outcome.digest_tail, outcome.stopped_early, _final_crc_pass(spec, crc_cfg, outcome)
        )
    return TrialRecord(
        trial_index=trial_index,
        master_seed=master_seed,
        info=info,
        outcome=outcome,
        frame_error=frame_error,
        bit_errors=bit_errors,
        error_class=error_class,
    )


@dataclass
class _Tally:
    trials: int = 0
    frame_errors: int = 0
    bit_errors: int = 0
    iter_sum: int = 0
    n_false_conv: int = 0
    n_osc: int = 0
    n_unconv: int = 0

    def add_trial(self, frame_error: bool, bit_errors: int, iters: int, error_class: str):
        self.trials += 1
        self.iter_sum += iters
        if frame_error:
            self.frame_errors += 1
            self.bit_errors += bit_errors
            if error_class == "false_converged":
                self.n_false_conv += 1
            elif error_class == "oscillation":
                self.n_osc += 1
            else:
                self.n_unconv += 1

    def merge(self, other: "_Tally"):
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


def _digest_packed(col: np.ndarray) -> int:
    return int.from_bytes(hashlib.blake2b(col.tobytes(), digest_size=8).digest(), "big")


def _run_batch_bp(spec, crc_cfg, params, chan, lo, hi, master_seed, collect):
    """Batched fast path for the plain decoder; per-frame equals run_trial."""
    B = hi - lo
    infos = np.empty((B, spec.info_len), dtype=np.uint8)
    llrs = np.empty((spec.N, B), dtype=np.float64)
    for j, t in enumerate(range(lo, hi)):
        infos[j], llrs[:, j] = _draw_frame(spec, crc_cfg, chan, master_seed, t)
    sched = identity_schedule(spec.N)
    state = init_state(spec, llrs)
    open_mask = ~spec.frozen
    alive = np.arange(B)
    ring: list[np.ndarray] = []
    iters_used = np.full(B, params.max_iters, dtype=np.int64)
    stopped = np.zeros(B, dtype=bool)
    u_final = np.zeros((B, spec.N), dtype=np.uint8)
    tails: list[list[int]] = [[] for _ in range(B)]

    def harvest_tails(cols, frames):
        for ci, fr in zip(cols, frames):
            tails[fr] = [_digest_packed(m[:, ci]) for m in ring]

    for it in range(1, params.max_iters + 1):
        bp_iteration(state, sched, params.mode)
        u_hat = hard_decision(state, spec)
        ring.append(np.packbits(u_hat, axis=0))
        del ring[:-CLASSIFY_WINDOW]
        if it <= params.warmup:
            continue
        live = np.any(state.L[spec.n][open_mask] != 0, axis=0)
        if not np.any(live):
            continue
        ok = live & np.asarray(crc_check(crc_cfg, u_hat[open_mask].T))
        if not np.any(ok):
            continue
        cols = np.flatnonzero(ok)
        frames = alive[cols]
        stopped[frames] = True
        iters_used[frames] = it
        u_final[frames] = u_hat[:, cols].T
        harvest_tails(cols, frames)
        keep = ~ok
        alive = alive[keep]
        if alive.size == 0:
            break
        state.L = np.ascontiguousarray(state.L[:, :, keep])
        state.R = np.ascontiguousarray(state.R[:, :, keep])
        state.channel = np.ascontiguousarray(state.channel[:, keep])
        state.priori = np.ascontiguousarray(state.priori[:, keep])
        ring = [m[:, keep] for m in ring]
    if alive.size:
        u_hat = hard_decision(state, spec)
        u_final[alive] = u_hat.T
        harvest_tails(np.arange(alive.size), alive)

    tally = _Tally()
    rows = [] if collect else None
    for j in range(B):
        info_hat = extract_info(spec, u_final[j])
        frame_error = not np.array_equal(info_hat, infos[j])
        bit_errors = int(np.count_nonzero(info_hat ^ infos[j]))
        if not frame_error:
            cls = "none"
        elif not tails[j]:
            cls = "unconverged"
        else:
            pass_final = bool(stopped[j]) or bool(crc_check(crc_cfg, u_final[j][open_mask]))
            cls = classify_error(tails[j], bool(stopped[j]), pass_final)
        tally.add_trial(frame_error, bit_errors, int(iters_used[j]), cls)
        if collect:
            rows.append((lo + j, frame_error, bit_errors, int(iters_used[j]), bool(stopped[j]), cls))
    return tally, rows


def _run_batch(spec, crc_cfg, params, chan, lo, hi, master_seed, collect=False):
    if params.variant == "bp" and not params.trace and spec.crc_len > 0 and params.stop_mode == "crc":
        return _run_batch_bp(spec, crc_cfg, params, chan, lo, hi, master_seed, collect)
    tally = _Tally()
    rows = [] if collect else None
    for t in range(lo, hi):
        rec = run_trial(spec, crc_cfg, params, chan, t, master_seed)
        tally.add_trial(rec.frame_error, rec.bit_errors, rec.outcome.iterations_used, rec.error_class)
        if collect:
            rows.append(
                (t, rec.frame_error, rec.bit_errors, rec.outcome.iterations_used,
                 rec.outcome.stopped_early, rec.error_class)
            )
    return tally, rows


def _batch_worker(args):
    spec, crc_cfg, params, chan, lo, hi, master_seed = args
    tally, _ = _run_batch(spec, crc_cfg, params, chan, lo, hi, master_seed)
    return tally


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson 95% score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class SweepStats:
    """Aggregate for one (decoder, operating point) pair."""

    decoder: str
    N: int
    K: int
    crc_len: int
    ebno_db: float
    trials: int
    frame_errors: int
    bit_errors: int
    fer: float
    ber: float
    fer_lo: float
    fer_hi: float
    avg_iters: float
    n_false_conv: int
    n_osc: int
    n_unconv: int
    seed: int

    @classmethod
    def from_tally(cls, spec, params, ebno_db, tally: _Tally, seed: int) -> "SweepStats":
        lo, hi = wilson_interval(tally.frame_errors, tally.trials)
        payload_bits = tally.trials * (spec.K - spec.crc_len)
        return cls(
            decoder=params.variant,
            N=spec.N,
            K=spec.K,
            crc_len=spec.crc_len,
            ebno_db=ebno_db,
            trials=tally.trials,
            frame_errors=tally.frame_errors,
            bit_errors=tally.bit_errors,
            fer=tally.frame_errors / tally.trials if tally.trials else 0.0,
            ber=tally.bit_errors / payload_bits if payload_bits else 0.0,
            fer_lo=lo,
            fer_hi=hi,
            avg_iters=tally.iter_sum / tally.trials if tally.trials else 0.0,
            n_false_conv=tally.n_false_conv,
            n_osc=tally.n_osc,
            n_unconv=tally.n_unconv,
            seed=seed,
        )


def _rule_satisfied(rule: StopRule, tally: _Tally) -> bool:
    if tally.trials >= rule.max_trials:
        return True
    return rule.target_errors is not None and tally.frame_errors >= rule.target_errors


def sweep(
    spec: CodeSpec,
    crc_cfg: CrcConfig | None,
    params: DecoderParams,
    ebn0_list,
    stop_rule: StopRule | None = None,
    master_seed: int = 0,
    parallelism: int = 1,
) -> list[SweepStats]:
    """Run the trial loop for each operating point.

    Workers receive whole trial batches; the counted batch set is the
    shortest prefix (in batch order) satisfying the stop rule, so results
    are identical for every parallelism degree.
    """
    if not len(ebn0_list):
        raise ValueError("ebn0_list must be non-empty")
    rule = stop_rule if stop_rule is not None else StopRule()
    params.validate(spec)
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    pool = ProcessPoolExecutor(max_workers=parallelism) if parallelism > 1 else None
    try:
        out = []
        for ebno_db in ebn0_list:
            chan = ChannelConfig(float(ebno_db), spec.energy_rate)
            tally = _Tally()
            next_start = 0
            while not _rule_satisfied(rule, tally) and next_start < rule.max_trials:
                spans = []
                start = next_start
                for _ in range(max(1, parallelism)):
                    if start >= rule.max_trials:
                        break
                    stop = min(start + rule.batch, rule.max_trials)
                    spans.append((start, stop))
                    start = stop
                next_start = start
                args = [(spec, crc_cfg, params, chan, lo, hi, master_seed) for lo, hi in spans]
                if pool is None:
                    parts = [_batch_worker(a) for a in args]
                else:
                    parts = list(pool.map(_batch_worker, args))
                for part in parts:
                    tally.merge(part)
                    if _rule_satisfied(rule, tally):
                        break
            out.append(SweepStats.from_tally(spec, params, float(ebno_db), tally, master_seed))
        return out
    finally:
        if pool is not None:
            pool.shutdown()


CSV_COLUMNS = (
    "decoder,N,K,crc_len,ebno_db,trials,frame_errors,bit_errors,"
    "fer,ber,fer_lo,fer_hi,avg_iters,n_false_conv,n_osc,n_unconv,seed"
)


def format_row(s: SweepStats, sep: str = ",") -> str:
    fields = [
        s.decoder, str(s.N), str(s.K), str(s.crc_len), f"{s.ebno_db:g}",
        str(s.trials), str(s.frame_errors), str(s.bit_errors),
        f"{s.fer:.8e}", f"{s.ber:.8e}", f"{s.fer_lo:.8e}", f"{s.fer_hi:.8e}",
        f"{s.avg_iters:.6f}", str(s.n_false_conv), str(s.n_osc), str(s.n_unconv), str(s.seed),
    ]
    return sep.join(fields)


def append_results(csv_path, stats: SweepStats, dat_path=None) -> None:
    """Append one completed point; the row is written in a single call so an
    interrupted run keeps every finished point."""
    csv_path = Path(csv_path)
    header = not csv_path.exists()
    with csv_path.open("a") as f:
        if header:
            f.write(CSV_COLUMNS + "\n")
        f.write(format_row(stats) + "\n")
    if dat_path is not None:
        dat_path = Path(dat_path)
        header = not dat_path.exists()
        with dat_path.open("a") as f:
            if header:
                f.write("# " + CSV_COLUMNS.replace(",", " ") + "\n")
            f.write(format_row(stats, sep=" ") + "\n")


def read_results_csv(path) -> list[dict]:
    rows = []
    lines = Path(path).read_text().splitlines()
    if not lines:
        return rows
    names = lines[0].split(",")
    for line in lines[1:]:
        if not line.strip():
            continue
        values = line.split(",")
        row = dict(zip(names, values))
        for key in ("N", "K", "crc_len", "trials", "frame_errors", "bit_errors",
                    "n_false_conv", "n_osc", "n_unconv", "seed"):
            row[key] = int(row[key])
        for key in ("ebno_db", "fer", "ber", "fer_lo", "fer_hi", "avg_iters"):
            row[key] = float(row[key])
        rows.append(row)
    return rows
