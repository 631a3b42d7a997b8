"""Factor-graph wiring schedules supporting full and partial stage permutations.

A schedule describes, for each of the n processing-element stages and each
of the N rows, which kernel stride that stage applies there. Variable-node
columns are numbered 1 (channel side) to n+1 (priori side); stage c sits
between columns c and c+1 and carries stride 2^(c-1) in the canonical
wiring. Every valid schedule assigns each row the full set of strides
{1, 2, ..., N/2}, one per stage, with each stride's pairing confined to
aligned blocks of twice its size. Any such wiring realises the same
hard-bit transform, which is what makes decoding on permuted graphs sound.

Rows are 0-based array indices; stage and column numbers are 1-based.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScheduleError",
    "PermutationEvent",
    "StrideSchedule",
    "identity_schedule",
    "full_permute",
    "partial_permute",
    "event_applies",
    "modified_nodes",
    "graph_encode",
    "sample_partial_event",
]


class ScheduleError(ValueError):
    """A permutation event is malformed or incompatible with the wiring."""


@dataclass(frozen=True)
class PermutationEvent:
    """Reordering of the strides inside one window of stages on one row block.

    `level` is the first (channel-most) permuted stage, `span` the number of
    consecutive stages permuted, `block` the index of the affected aligned
    row block of width 2^(level+span-1), and `order` the strides assigned to
    stages level..level+span-1 after the event.
    """

    level: int
    span: int
    block: int
    order: tuple[int, ...]

    @property
    def block_width(self) -> int:
        return 1 << (self.level + self.span - 1)

    @property
    def scale_set(self) -> tuple[int, ...]:
        return tuple(1 << (self.level - 1 + k) for k in range(self.span))

    @property
    def invalidated_count(self) -> int:
        """Variable nodes whose stored beliefs the event makes stale."""
        return self.block_width * (self.span - 1)

    def validate(self, n: int, N: int) -> None:
        if self.span < 2 or self.span > n:
            raise ScheduleError(f"span must be in 2..{n}, got {self.span}")
        if self.level < 1 or self.level > n - self.span + 1:
            raise ScheduleError(
                f"level must be in 1..{n - self.span + 1} for span {self.span}, got {self.level}"
            )
        n_blocks = N >> (self.level + self.span - 1)
        if not 0 <= self.block < n_blocks:
            raise ScheduleError(f"block must be in 0..{n_blocks - 1}, got {self.block}")
        if tuple(sorted(self.order)) != self.scale_set:
            raise ScheduleError(
                f"order {self.order} is not a permutation of the window strides {self.scale_set}"
            )


class StrideSchedule:
    """Immutable stride table plus the per-stage run-length view used by sweeps."""

    __slots__ = ("n", "N", "strides", "history", "_runs", "_digest")

    def __init__(self, strides: np.ndarray, history: tuple = ()):
        strides = np.ascontiguousarray(strides, dtype=np.int64)
        n, N = strides.shape
        if N != 1 << n:
            raise ScheduleError(f"stride table shape {strides.shape} is not (log2 N, N)")
        strides.flags.writeable = False
        self.n = n
        self.N = N
        self.strides = strides
        self.history = history
        self._runs = tuple(_run_lengths(strides[c]) for c in range(n))
        self._digest = None

    def runs(self, stage: int) -> tuple[tuple[int, int, int], ...]:
        """(start, stop, stride) segments of 1-based stage `stage`."""
        return self._runs[stage - 1]

    def digest(self) -> int:
        if self._digest is None:
            h = hashlib.blake2b(self.strides.tobytes(), digest_size=8)
            self._digest = int.from_bytes(h.digest(), "big")
        return self._digest

    def validate(self) -> None:
        """Raise unless the table satisfies the wiring invariants."""
        expected = np.array([1 << c for c in range(self.n)], dtype=np.int64)
        per_row = np.sort(self.strides, axis=0)
        if not np.array_equal(per_row, np.broadcast_to(expected[:, None], per_row.shape)):
            raise ScheduleError("some row does not carry each kernel stride exactly once")
        for stage in range(1, self.n + 1):
            for start, stop, s in self.runs(stage):
                if start % (2 * s) != 0 or (stop - start) % (2 * s) != 0:
                    raise ScheduleError(
                        f"stage {stage}: stride {s} not aligned to blocks of {2 * s} at rows {start}..{stop}"
                    )

    def dump(self) -> str:
        """Run-length text rendering, one line per stage, for golden tests."""
        lines = []
        for stage in range(1, self.n + 1):
            parts = [f"{s}x{stop - start}" for start, stop, s in self.runs(stage)]
            lines.append(f"stage {stage}: " + " ".join(parts))
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        return isinstance(other, StrideSchedule) and np.array_equal(self.strides, other.strides)

    def __hash__(self):
        return self.digest()


def _run_lengths(row: np.ndarray) -> tuple[tuple[int, int, int], ...]:
    edges = np.flatnonzero(np.diff(row)) + 1
    bounds = [0, *edges.tolist(), row.shape[0]]
    return tuple(
        (bounds[i], bounds[i + 1], int(row[bounds[i]])) for i in range(len(bounds) - 1)
    )


def identity_schedule(N: int) -> StrideSchedule:
    """Canonical wiring: stage c applies stride 2^(c-1) on every row."""
    if N < 2 or N & (N - 1):
        raise ScheduleError(f"N must be a power of two >= 2, got {N}")
    n = N.bit_length() - 1
    strides = np.repeat([[1 << c for c in range(n)]], N, axis=0).T
    return StrideSchedule(strides)


def full_permute(sched: StrideSchedule, order) -> StrideSchedule:
    """Reassign the canonical strides across all stages, uniformly on every row.

    `order` maps stage c to canonical stage order[c-1], i.e. stage c gets
    stride 2^(order[c-1]-1).
    """
    order = tuple(int(v) for v in order)
    if tuple(sorted(order)) != tuple(range(1, sched.n + 1)):
        raise ScheduleError(f"order {order} is not a permutation of 1..{sched.n}")
    strides = np.repeat([[1 << (o - 1) for o in order]], sched.N, axis=0).T
    return StrideSchedule(strides, sched.history + (("full", order),))


def _window_view(sched: StrideSchedule, ev: PermutationEvent) -> np.ndarray:
    W = ev.block_width
    return sched.strides[ev.level - 1 : ev.level - 1 + ev.span, ev.block * W : (ev.block + 1) * W]


def event_applies(sched: StrideSchedule, ev: PermutationEvent) -> bool:
    """Whether the window currently holds exactly its own stride scales.

    Earlier events may have moved a wider stride into the window's stages,
    in which case its wiring spans beyond the event's row block and cannot
    be legally reordered there.
    """
    ev.validate(sched.n, sched.N)
    sub = _window_view(sched, ev)
    scales = np.array(ev.scale_set, dtype=np.int64)
    return bool(np.array_equal(np.sort(sub, axis=0), np.broadcast_to(scales[:, None], sub.shape)))


def partial_permute(sched: StrideSchedule, ev: PermutationEvent) -> StrideSchedule:
    """Apply one window permutation, leaving every other table entry unchanged."""
    ev.validate(sched.n, sched.N)
    sub = _window_view(sched, ev)
    if not event_applies(sched, ev):
        raise ScheduleError(
            f"window stages {ev.level}..{ev.level + ev.span - 1} of block {ev.block} "
            f"do not hold strides {ev.scale_set}; event cannot be applied"
        )
    target = np.array(ev.order, dtype=np.int64)
    if np.array_equal(sub, np.broadcast_to(target[:, None], sub.shape)):
        raise ScheduleError("event does not change the wiring (order equals current assignment)")
    strides = sched.strides.copy()
    W = ev.block_width
    strides[ev.level - 1 : ev.level - 1 + ev.span, ev.block * W : (ev.block + 1) * W] = target[:, None]
    return StrideSchedule(strides, sched.history + (("partial", ev),))


def modified_nodes(ev: PermutationEvent) -> frozenset[tuple[int, int]]:
    """Variable nodes invalidated by the event: (column, row) pairs.

    Only the columns strictly inside the permuted window change their
    defining wiring; both window boundary columns keep their values.
    """
    W = ev.block_width
    rows = range(ev.block * W, (ev.block + 1) * W)
    cols = range(ev.level + 1, ev.level + ev.span)
    return frozenset((c, r) for c in cols for r in rows)


def graph_encode(sched: StrideSchedule, u: np.ndarray) -> np.ndarray:
    """Hard-bit forward pass from the priori side to the channel side.

    XOR on the upper leg of each processing element, pass-through on the
    lower; equals the matrix encoding for every valid schedule.
    """
    u = np.asarray(u, dtype=np.uint8)
    if u.shape != (sched.N,):
        raise ValueError(f"u must have length {sched.N}")
    v = u.copy()
    for stage in range(sched.n, 0, -1):
        for start, stop, s in sched.runs(stage):
            blk = v[start:stop].reshape(-1, 2, s)
            blk[:, 0, :] ^= blk[:, 1, :]
    return v


def sample_partial_event(
    sched: StrideSchedule,
    rng: np.random.Generator,
    span_max: int,
    level_max: int,
    max_attempts: int = 10_000,
) -> PermutationEvent:
    """Draw a random applicable window permutation.

    Draw order: span uniform in 2..span_max, a level draw uniform in
    1..level_max clamped to n-span+1, block uniform over the available row
    blocks, then the stage order, resampled until it changes the wiring.
    Events incompatible with the current table (see `event_applies`) are
    rejected and redrawn; the most recent event's own window always remains
    applicable, so the loop terminates.
    """
    n = sched.n
    for _ in range(max_attempts):
        span = int(rng.integers(2, span_max + 1))
        draw = int(rng.integers(1, level_max + 1))
        level = min(draw, n - span + 1)
        n_blocks = sched.N >> (level + span - 1)
        block = int(rng.integers(0, n_blocks))
        probe = PermutationEvent(level=level, span=span, block=block, order=tuple(
            1 << (level - 1 + k) for k in range(span)
        ))
        if not event_applies(sched, probe):
            continue
        sub = _window_view(sched, probe)
        scales = probe.scale_set
        current = tuple(int(v) for v in sub[:, 0]) if np.all(sub == sub[:, :1]) else None
        while True:
            perm = rng.permutation(span)
            order = tuple(scales[i] for i in perm)
            if order != current:
                break
        return PermutationEvent(level=level, span=span, block=block, order=order)
    raise ScheduleError("failed to sample an applicable permutation event")
