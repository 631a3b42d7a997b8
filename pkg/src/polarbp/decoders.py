"""Decoder variants mapping channel LLRs to a decode outcome.

Variants: plain iterative decoding on the canonical graph (bp), restarts on
fully permuted graphs that discard interior state (fpbp), window
permutations that retain untouched beliefs (ppbp), and perturbation-aided
decoding on the canonical graph (nabp). A successive cancellation decoder
is included purely as a cross-check oracle for tests.

Randomness: each decode owns one counter-based generator. Draw order is
fixed and documented per variant, so outcomes are reproducible from
(seed,) or from the generator handed in by the simulation harness.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .bp import LLR_MAX, MessageState, bp_iteration, hard_decision, init_state
from .code import CodeSpec, CrcConfig, crc_check, extract_info, polar_transform
from .trellis import (
    PermutationEvent,
    full_permute,
    identity_schedule,
    partial_permute,
    sample_partial_event,
)

__all__ = [
    "DecoderParams",
    "DecodeOutcome",
    "PermutationRecord",
    "decode_bp",
    "decode_fpbp",
    "decode_ppbp",
    "decode_nabp",
    "decode_sc",
    "decision_digest",
    "make_rng",
    "initial_reset_value",
]

VARIANTS = ("bp", "fpbp", "ppbp", "nabp")

DIGEST_TAIL_LEN = 16


def make_rng(seed_material) -> np.random.Generator:
    """Counter-based generator from arbitrary integer seed material."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_material)))


def decision_digest(u_hat: np.ndarray) -> int:
    """64-bit digest of a hard-decision vector, stable across runs."""
    h = hashlib.blake2b(np.packbits(u_hat).tobytes(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True)
class DecoderParams:
    """Configuration shared by all decoder variants.

    Fields other than the first block apply only to the variant named in
    the comment and are validated accordingly.
    """

    variant: str = "bp"
    max_iters: int = 200
    warmup: int = 2
    mode: str = "minsum"
    stop_mode: str = "crc"
    seed: int = 0
    trace: bool = False

    iters_per_graph: int | None = None  # fpbp: iteration budget per graph
    max_graphs: int | None = None  # fpbp: number of graphs tried

    span_max: int | None = None  # ppbp: most stages one permutation may reorder
    level_max: int | None = None  # ppbp: highest start stage a draw may pick
    reset_divisor: int | None = None  # ppbp: divides the invalidated-node count
    reset_floor: int | None = None  # ppbp: smallest gap between permutations
    initial_reset: int | None = None  # ppbp: override for the first permutation point

    noise_var: float | None = None  # nabp: variance of injected perturbations
    noise_period: int = 50  # nabp: iterations between re-injections

    def validate(self, spec: CodeSpec) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown decoder variant {self.variant!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.mode not in ("minsum", "exact"):
            raise ValueError(f"unknown boxplus mode {self.mode!r}")
        if self.stop_mode not in ("crc", "reencode"):
            raise ValueError(f"unknown stop mode {self.stop_mode!r}")
        if self.stop_mode == "crc" and spec.crc_len == 0:
            raise ValueError("CRC stopping requires crc_len > 0 (use stop_mode='reencode')")
        if self.variant == "fpbp":
            if not self.iters_per_graph or self.iters_per_graph < 1:
                raise ValueError("fpbp requires iters_per_graph >= 1")
            if not self.max_graphs or self.max_graphs < 1:
                raise ValueError("fpbp requires max_graphs >= 1")
            if self.max_iters != self.iters_per_graph * self.max_graphs:
                raise ValueError(
                    "fpbp requires max_iters == iters_per_graph * max_graphs "
                    f"({self.iters_per_graph} * {self.max_graphs} != {self.max_iters})"
                )
        if self.variant == "ppbp":
            n = spec.n
            if self.span_max is None or not 2 <= self.span_max <= n:
                raise ValueError(f"ppbp requires 2 <= span_max <= {n}")
            if self.level_max is None or not 1 <= self.level_max <= n - 1:
                raise ValueError(f"ppbp requires 1 <= level_max <= {n - 1}")
            if self.reset_divisor is None or self.reset_divisor < 1:
                raise ValueError("ppbp requires reset_divisor >= 1")
            if self.reset_floor is None or self.reset_floor < 1:
                raise ValueError("ppbp requires reset_floor >= 1")
            if self.initial_reset is not None and self.initial_reset < 1:
                raise ValueError("initial_reset must be >= 1")
        if self.variant == "nabp":
            if self.noise_var is None or self.noise_var < 0:
                raise ValueError("nabp requires noise_var >= 0")
            if self.noise_period < 1:
                raise ValueError("noise_period must be >= 1")


@dataclass(frozen=True)
class PermutationRecord:
    """One graph change during a decode, for audit and tests."""

    iteration: int
    kind: str  # "partial" or "full"
    event: PermutationEvent | None
    order: tuple[int, ...] | None
    invalidated: int
    next_gap: int | None


@dataclass(frozen=True)
class DecodeOutcome:
    u_hat: np.ndarray
    info_hat: np.ndarray
    stopped_early: bool
    iterations_used: int
    permutations_used: int
    digest_tail: tuple[int, ...]
    permutation_log: tuple[PermutationRecord, ...] = ()
    iteration_trace: tuple[tuple[int, int], ...] | None = None


class _Stopper:
    """Early-stop predicate evaluated on precomputed hard decisions.

    Gated on decision liveness: no stop while the open-row beliefs feeding
    the decision are identically zero, since the all-zero decision they
    imply satisfies any checksum without carrying evidence.
    """

    def __init__(self, spec: CodeSpec, crc_cfg: CrcConfig | None, stop_mode: str):
        self.spec = spec
        self.crc_cfg = crc_cfg
        self.stop_mode = stop_mode
        self.open = ~spec.frozen

    def __call__(self, state: MessageState, u_hat: np.ndarray) -> bool:
        if not np.any(state.L[self.spec.n][self.open]):
            return False
        if self.stop_mode == "crc":
            return bool(crc_check(self.crc_cfg, u_hat[self.open]))
        x_hat = (state.L[0] + state.R[0] < 0).astype(np.uint8)
        return bool(np.array_equal(polar_transform(u_hat), x_hat))


def _outcome(
    spec: CodeSpec,
    u_hat: np.ndarray,
    stopped: bool,
    iters: int,
    perms: int,
    tail: list[int],
    log: list[PermutationRecord],
    trace: list[tuple[int, int]] | None,
) -> DecodeOutcome:
    return DecodeOutcome(
        u_hat=u_hat,
        info_hat=extract_info(spec, u_hat),
        stopped_early=stopped,
        iterations_used=iters,
        permutations_used=perms,
        digest_tail=tuple(tail[-DIGEST_TAIL_LEN:]),
        permutation_log=tuple(log),
        iteration_trace=tuple(trace) if trace is not None else None,
    )


def decode_bp(
    spec: CodeSpec,
    crc_cfg: CrcConfig | None,
    params: DecoderParams,
    channel_llr: np.ndarray,
    rng: np.random.Generator | None = None,
) -> DecodeOutcome:
    """Iterative decoding on the canonical graph until stop or budget."""
    params.validate(spec)
    sched = identity_schedule(spec.N)
    state = init_state(spec, channel_llr)
    stop = _Stopper(spec, crc_cfg, params.stop_mode)
    warmup = params.warmup
    tail: list[int] = []
    trace: list[tuple[int, int]] | None = [] if params.trace else None
    for it in range(1, params.max_iters + 1):
        bp_iteration(state, sched, params.mode)
        u_hat = hard_decision(state, spec)
        tail.append(decision_digest(u_hat))
        del tail[:-DIGEST_TAIL_LEN]
        if trace is not None:
            trace.append((sched.digest(), tail[-1]))
        if it > warmup and stop(state, u_hat):
            return _outcome(spec, u_hat, True, it, 0, tail, [], trace)
    u_hat = hard_decision(state, spec)
    return _outcome(spec, u_hat, False, params.max_iters, 0, tail, [], trace)


def decode_fpbp(
    spec: CodeSpec,
    crc_cfg: CrcConfig | None,
    params: DecoderParams,
    channel_llr: np.ndarray,
    rng: np.random.Generator | None = None,
    event_observer=None,
) -> DecodeOutcome:
    """Restart decoding on fully permuted graphs.

    The first graph is the canonical one. When a graph's iteration budget
    runs out without a stop, a uniformly random stage order is drawn (draw:
    one permutation of 1..n), every interior message is zeroed, and only
    the priori and channel columns carry over. The stop check observes the
    per-graph warmup.
    """
    params.validate(spec)
    rng = rng if rng is not None else make_rng([params.seed])
    sched = identity_schedule(spec.N)
    state = init_state(spec, channel_llr)
    stop = _Stopper(spec, crc_cfg, params.stop_mode)
    warmup = params.warmup
    tail: list[int] = []
    log: list[PermutationRecord] = []
    trace: list[tuple[int, int]] | None = [] if params.trace else None
    total = 0
    for graph in range(1, params.max_graphs + 1):
        if graph > 1:
            order = tuple(int(v) + 1 for v in rng.permutation(spec.n))
            sched = full_permute(sched, order)
            before = state.copy() if event_observer is not None else None
            state.L[1:] = 0.0
            state.R[: spec.n] = 0.0
            rec = PermutationRecord(
                iteration=total, kind="full", event=None, order=order,
                invalidated=(spec.n - 1) * spec.N, next_gap=params.iters_per_graph,
            )
            log.append(rec)
            if event_observer is not None:
                event_observer(rec, before, state.copy())
        for local_it in range(1, params.iters_per_graph + 1):
            total += 1
            bp_iteration(state, sched, params.mode)
            u_hat = hard_decision(state, spec)
            tail.append(decision_digest(u_hat))
            del tail[:-DIGEST_TAIL_LEN]
            if trace is not None:
                trace.append((sched.digest(), tail[-1]))
            if local_it > warmup and stop(state, u_hat):
                return _outcome(spec, u_hat, True, total, graph, tail, log, trace)
    u_hat = hard_decision(state, spec)
    return _outcome(spec, u_hat, False, total, params.max_graphs, tail, log, trace)


def initial_reset_value(spec: CodeSpec, params: DecoderParams) -> int:
    """First permutation point for window-permuted decoding.

    Applies the gap rule as if a whole-graph permutation had just happened,
    capped at half the iteration budget so that a short budget still leaves
    room for permutations to occur at all.
    """
    if params.initial_reset is not None:
        return params.initial_reset
    base = max(params.reset_floor, (spec.N * (spec.n - 1)) // params.reset_divisor)
    cap = max(params.reset_floor, params.max_iters // 2)
    return min(base, cap)


def decode_ppbp(
    spec: CodeSpec,
    crc_cfg: CrcConfig | None,
    params: DecoderParams,
    channel_llr: np.ndarray,
    rng: np.random.Generator | None = None,
    event_observer=None,
) -> DecodeOutcome:
    """Decoding with window permutations that keep untouched beliefs.

    Runs on the canonical graph until the reset point; then draws a window
    permutation (draw order: span, level, block, stage order), applies it,
    zeroes exactly the invalidated variable nodes' messages, and schedules
    the next reset point `max(reset_floor, invalidated // reset_divisor)`
    iterations later. Everything outside the permuted window survives.
    """
    params.validate(spec)
    rng = rng if rng is not None else make_rng([params.seed])
    sched = identity_schedule(spec.N)
    state = init_state(spec, channel_llr)
    stop = _Stopper(spec, crc_cfg, params.stop_mode)
    warmup = params.warmup
    tail: list[int] = []
    log: list[PermutationRecord] = []
    trace: list[tuple[int, int]] | None = [] if params.trace else None
    next_reset = initial_reset_value(spec, params)
    for it in range(1, params.max_iters + 1):
        bp_iteration(state, sched, params.mode)
        u_hat = hard_decision(state, spec)
        tail.append(decision_digest(u_hat))
        del tail[:-DIGEST_TAIL_LEN]
        if trace is not None:
            trace.append((sched.digest(), tail[-1]))
        if it > warmup and stop(state, u_hat):
            return _outcome(spec, u_hat, True, it, len(log), tail, log, trace)
        if it == next_reset:
            ev = sample_partial_event(sched, rng, params.span_max, params.level_max)
            sched = partial_permute(sched, ev)
            before = state.copy() if event_observer is not None else None
            w = ev.block_width
            rows = slice(ev.block * w, (ev.block + 1) * w)
            cols = slice(ev.level, ev.level + ev.span - 1)
            state.L[cols, rows] = 0.0
            state.R[cols, rows] = 0.0
            gap = max(params.reset_floor, ev.invalidated_count // params.reset_divisor)
            next_reset = it + gap
            rec = PermutationRecord(
                iteration=it, kind="partial", event=ev, order=ev.order,
                invalidated=ev.invalidated_count, next_gap=gap,
            )
            log.append(rec)
            if event_observer is not None:
                event_observer(rec, before, state.copy())
    u_hat = hard_decision(state, spec)
    return _outcome(spec, u_hat, False, params.max_iters, len(log), tail, log, trace)


def decode_nabp(
    spec: CodeSpec,
    crc_cfg: CrcConfig | None,
    params: DecoderParams,
    channel_llr: np.ndarray,
    rng: np.random.Generator | None = None,
) -> DecodeOutcome:
    """Perturbation-aided decoding on the canonical graph.

    Zero-mean Gaussian perturbations of variance `noise_var` are added to
    the channel column once at the start and again whenever a stop check
    has just failed at a multiple of `noise_period` iterations. With
    noise_var == 0 this is bit-identical to `decode_bp`.
    """
    params.validate(spec)
    if not params.noise_var:
        return decode_bp(spec, crc_cfg, params, channel_llr, rng)
    rng = rng if rng is not None else make_rng([params.seed])
    sigma = float(np.sqrt(params.noise_var))
    base = np.clip(np.asarray(channel_llr, dtype=np.float64), -LLR_MAX, LLR_MAX)
    sched = identity_schedule(spec.N)
    state = init_state(spec, channel_llr)
    state.channel = np.clip(base + rng.normal(0.0, sigma, spec.N), -LLR_MAX, LLR_MAX)
    state.L[0] = state.channel
    stop = _Stopper(spec, crc_cfg, params.stop_mode)
    warmup = params.warmup
    tail: list[int] = []
    trace: list[tuple[int, int]] | None = [] if params.trace else None
    for it in range(1, params.max_iters + 1):
        bp_iteration(state, sched, params.mode)
        u_hat = hard_decision(state, spec)
        tail.append(decision_digest(u_hat))
        del tail[:-DIGEST_TAIL_LEN]
        if trace is not None:
            trace.append((sched.digest(), tail[-1]))
        if it > warmup and stop(state, u_hat):
            return _outcome(spec, u_hat, True, it, 0, tail, [], trace)
        if it % params.noise_period == 0:
            state.channel = np.clip(base + rng.normal(0.0, sigma, spec.N), -LLR_MAX, LLR_MAX)
            state.L[0] = state.channel
    u_hat = hard_decision(state, spec)
    return _outcome(spec, u_hat, False, params.max_iters, 0, tail, [], trace)


def _boxplus_exact_raw(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.copysign(np.minimum(np.abs(a), np.abs(b)), a * b) + (
        np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))
    )


def decode_sc(spec: CodeSpec, channel_llr: np.ndarray) -> np.ndarray:
    """Successive cancellation with exact combining; test oracle only.

    Recursive and unoptimised; intended for short codes in sanity checks.
    """
    llr = np.asarray(channel_llr, dtype=np.float64)
    if llr.shape != (spec.N,):
        raise ValueError(f"channel LLR vector must have length {spec.N}")
    frozen = spec.frozen

    def rec(y: np.ndarray, fz: np.ndarray) -> np.ndarray:
        if y.shape[0] == 1:
            if fz[0] or y[0] >= 0:
                return np.zeros(1, dtype=np.uint8)
            return np.ones(1, dtype=np.uint8)
        h = y.shape[0] // 2
        u_first = rec(_boxplus_exact_raw(y[:h], y[h:]), fz[:h])
        x_first = polar_transform(u_first)
        u_second = rec(y[h:] + (1.0 - 2.0 * x_first) * y[:h], fz[h:])
        return np.concatenate([u_first, u_second])

    return rec(llr, frozen)
