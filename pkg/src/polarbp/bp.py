"""LLR message passing on a stride schedule.

Messages live on an (n+1) x N grid of variable nodes. Column 1 holds the
channel LLRs, column n+1 the priori values (+LLR_MAX on frozen rows, 0
elsewhere). One iteration runs an L-sweep from the priori-side stage down
to the channel-side stage, then an R-sweep back; within a stage all
processing elements update independently.

Arrays may carry trailing batch axes: shape (n+1, N) decodes one frame,
(n+1, N, B) decodes B frames with bit-identical per-frame results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .code import CodeSpec, CrcConfig, crc_check, polar_transform
from .trellis import StrideSchedule

__all__ = [
    "LLR_MAX",
    "MessageState",
    "boxplus",
    "pe_update",
    "init_state",
    "bp_iteration",
    "hard_decision",
    "check_stop",
]

LLR_MAX = 40.0


def _clip(x):
    return np.clip(x, -LLR_MAX, LLR_MAX)


def _minsum(x, y):
    return np.copysign(np.minimum(np.abs(x), np.abs(y)), x * y)


def _exact(x, y):
    base = np.copysign(np.minimum(np.abs(x), np.abs(y)), x * y)
    # grouping the correction keeps the combiner bit-exactly odd per argument
    return base + (np.log1p(np.exp(-np.abs(x + y))) - np.log1p(np.exp(-np.abs(x - y))))


def boxplus(x, y, mode: str = "minsum"):
    """Combine two LLRs; elementwise on arrays. Result clipped to +-LLR_MAX.

    minsum: sign(x) sign(y) min(|x|, |y|). exact: 2 atanh(tanh(x/2) tanh(y/2)),
    evaluated in the saturation-safe min-sum-plus-correction form.
    """
    if mode == "minsum":
        return _clip(_minsum(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)))
    if mode == "exact":
        return _clip(_exact(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)))
    raise ValueError(f"unknown boxplus mode {mode!r}")


def pe_update(r_in1, r_in2, l_in1, l_in2, mode: str = "minsum"):
    """One processing element: returns (r_out1, r_out2, l_out1, l_out2).

    Port 1 is the XOR leg, port 2 the pass-through leg; r inputs arrive from
    the priori side, l inputs from the channel side.
    """
    t = _clip(np.asarray(l_in2, dtype=np.float64) + r_in2)
    shared = boxplus(r_in1, l_in1, mode)
    r_out1 = boxplus(r_in1, t, mode)
    r_out2 = _clip(shared + r_in2)
    l_out1 = boxplus(l_in1, t, mode)
    l_out2 = _clip(shared + l_in2)
    return r_out1, r_out2, l_out1, l_out2


@dataclass
class MessageState:
    """L/R message arrays plus the boundary vectors they must agree with."""

    L: np.ndarray
    R: np.ndarray
    channel: np.ndarray
    priori: np.ndarray

    def copy(self) -> "MessageState":
        return MessageState(self.L.copy(), self.R.copy(), self.channel.copy(), self.priori.copy())


def init_state(spec: CodeSpec, channel_llr: np.ndarray) -> MessageState:
    """Fresh state: boundaries set, every interior message zero.

    `channel_llr` has shape (N,) or (N, B) for batched decoding.
    """
    channel_llr = np.asarray(channel_llr, dtype=np.float64)
    if channel_llr.shape[0] != spec.N:
        raise ValueError(f"channel LLR vector must have leading length {spec.N}")
    channel = _clip(channel_llr)
    priori = np.zeros_like(channel)
    priori[spec.frozen] = LLR_MAX
    L = np.zeros((spec.n + 1,) + channel.shape, dtype=np.float64)
    R = np.zeros_like(L)
    L[0] = channel
    R[spec.n] = priori
    return MessageState(L=L, R=R, channel=channel, priori=priori)


def _stage_halves(arr: np.ndarray, start: int, stop: int, stride: int):
    seg = arr[start:stop]
    v = seg.reshape((seg.shape[0] // (2 * stride), 2, stride) + seg.shape[1:])
    return v[:, 0], v[:, 1]


def bp_iteration(state: MessageState, sched: StrideSchedule, mode: str = "minsum") -> MessageState:
    """One full message-passing round; updates `state` in place and returns it.

    L messages are swept stage n down to stage 1, R messages stage 1 up to
    stage n, so each sweep consumes the opposite array plus its own values
    from the previous round. On a noiseless input the decision column is
    exact after n rounds.
    """
    f = _minsum if mode == "minsum" else _exact
    L, R = state.L, state.R
    n = sched.n
    for stage in range(n, 0, -1):
        Lc, Ln, Rn = L[stage - 1], L[stage], R[stage]
        for start, stop, s in sched.runs(stage):
            c_up, c_lo = _stage_halves(Lc, start, stop, s)
            o_up, o_lo = _stage_halves(Ln, start, stop, s)
            r_up, r_lo = _stage_halves(Rn, start, stop, s)
            t = _clip(c_lo + r_lo)
            o_up[...] = f(c_up, t)
            o_lo[...] = _clip(f(r_up, c_up) + c_lo)
    for stage in range(1, n + 1):
        Lc, Rc, Rn = L[stage - 1], R[stage - 1], R[stage]
        for start, stop, s in sched.runs(stage):
            c_up, c_lo = _stage_halves(Lc, start, stop, s)
            o_up, o_lo = _stage_halves(Rc, start, stop, s)
            r_up, r_lo = _stage_halves(Rn, start, stop, s)
            t = _clip(c_lo + r_lo)
            o_up[...] = f(r_up, t)
            o_lo[...] = _clip(f(r_up, c_up) + r_lo)
    L[0] = state.channel
    R[n] = state.priori
    return state


def hard_decision(state: MessageState, spec: CodeSpec) -> np.ndarray:
    """Input-side bit estimates: 0 where R + L >= 0; frozen rows forced to 0."""
    n = spec.n
    bits = (state.R[n] + state.L[n] < 0).astype(np.uint8)
    bits[spec.frozen] = 0
    return bits


def check_stop(
    state: MessageState,
    spec: CodeSpec,
    crc_cfg: CrcConfig | None,
    iteration: int,
    warmup: int,
    mode: str = "crc",
) -> bool:
    """Early-stopping test; always False during the warmup iterations.

    Also gated on decision liveness: while the open-row beliefs feeding the
    decision are identically zero (initial fill, or right after a reset
    wiped the columns behind them), the all-zero decision they imply would
    satisfy any checksum without carrying evidence, so no stop is declared.

    mode "crc" passes when the CRC over the non-frozen decision bits checks
    out; mode "reencode" passes when re-encoding the decision reproduces the
    channel-side hard values.
    """
    if mode == "crc":
        if crc_cfg is None or spec.crc_len == 0:
            raise ValueError("CRC stopping requires a code with CRC bits")
    elif mode != "reencode":
        raise ValueError(f"unknown stop mode {mode!r}")
    if iteration <= warmup:
        return False
    if not np.any(state.L[spec.n][~spec.frozen]):
        return False
    u_hat = hard_decision(state, spec)
    if mode == "crc":
        return bool(crc_check(crc_cfg, u_hat[~spec.frozen]))
    x_hat = (state.L[0] + state.R[0] < 0).astype(np.uint8)
    return bool(np.array_equal(polar_transform(u_hat), x_hat))
