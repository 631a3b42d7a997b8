"""Polar code construction, encoding and CRC handling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CodeSpec",
    "CrcConfig",
    "bhattacharyya_construct",
    "polar_transform",
    "encode",
    "crc_remainder",
    "crc_attach",
    "crc_check",
    "assemble_u",
    "extract_info",
    "save_spec",
    "load_spec",
]


def _is_pow2(x: int) -> bool:
    return x >= 2 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class CodeSpec:
    """An (N, K) polar code: frozen mask plus CRC bookkeeping.

    K counts every non-frozen position, i.e. information bits plus CRC
    bits. The code rate K/N therefore includes the CRC overhead, while
    energy normalisation in the channel model uses (K - crc_len)/N.
    """

    N: int
    K: int
    crc_len: int
    frozen: np.ndarray
    design_ebn0_db: float = 0.0

    def __post_init__(self):
        if not _is_pow2(self.N):
            raise ValueError(f"N must be a power of two >= 2, got {self.N}")
        if not 0 < self.K <= self.N:
            raise ValueError(f"K must be in 1..{self.N}, got {self.K}")
        if self.crc_len < 0 or (self.crc_len > 0 and self.crc_len >= self.K):
            raise ValueError(f"crc_len must be 0 or < K, got {self.crc_len}")
        frozen = np.asarray(self.frozen, dtype=bool)
        if frozen.shape != (self.N,):
            raise ValueError("frozen mask must have length N")
        if int(np.count_nonzero(~frozen)) != self.K:
            raise ValueError("frozen mask must leave exactly K open positions")
        frozen.flags.writeable = False
        object.__setattr__(self, "frozen", frozen)

    @property
    def n(self) -> int:
        return self.N.bit_length() - 1

    @property
    def info_len(self) -> int:
        """Number of payload bits per frame, CRC excluded."""
        return self.K - self.crc_len

    @property
    def rate(self) -> float:
        return self.K / self.N

    @property
    def energy_rate(self) -> float:
        return (self.K - self.crc_len) / self.N

    @property
    def info_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen)


@dataclass(frozen=True)
class CrcConfig:
    """Cyclic redundancy check parameters.

    `generator` holds the polynomial coefficients most-significant first,
    including the leading 1, so its length is `length + 1`.
    """

    length: int
    generator: tuple[int, ...]
    init: int = 0
    reflect: bool = False
    final_xor: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("CRC length must be >= 1")
        if len(self.generator) != self.length + 1:
            raise ValueError("generator degree must equal CRC length")
        if self.generator[0] != 1:
            raise ValueError("generator leading coefficient must be 1")
        if any(b not in (0, 1) for b in self.generator):
            raise ValueError("generator coefficients must be bits")

    @classmethod
    def from_poly(cls, length: int, poly: int, **kw) -> "CrcConfig":
        """Build from the conventional integer form with implicit leading 1."""
        bits = tuple((poly >> (length - 1 - i)) & 1 for i in range(length))
        return cls(length=length, generator=(1,) + bits, **kw)

    @classmethod
    def crc24(cls) -> "CrcConfig":
        """Default 24-bit CRC (generator 0x864CFB, zero init, no reflection)."""
        return cls.from_poly(24, 0x864CFB)

    @property
    def poly_int(self) -> int:
        """Generator without the leading coefficient, packed MSB first."""
        v = 0
        for b in self.generator[1:]:
            v = (v << 1) | b
        return v


_CRC_TABLES: dict[tuple[int, int], np.ndarray] = {}


def _crc_table(cfg: CrcConfig) -> np.ndarray:
    key = (cfg.length, cfg.poly_int)
    table = _CRC_TABLES.get(key)
    if table is None:
        deg, poly = cfg.length, cfg.poly_int
        top = 1 << (deg - 1)
        mask = (1 << deg) - 1
        table = np.empty(256, dtype=np.uint64)
        for byte in range(256):
            reg = byte << (deg - 8)
            for _ in range(8):
                reg = ((reg << 1) ^ poly if reg & top else reg << 1) & mask
            table[byte] = reg
        _CRC_TABLES[key] = table
    return table


def _crc_remainder_serial(cfg: CrcConfig, payload: np.ndarray) -> np.ndarray:
    """Bit-serial shift-register division; handles every config variant."""
    deg = cfg.length
    reg = [(cfg.init >> (deg - 1 - i)) & 1 for i in range(deg)]
    taps = cfg.generator[1:]
    stream = payload.tolist() + [0] * deg
    for bit in stream:
        msb = reg[0]
        reg = reg[1:] + [int(bit)]
        if msb:
            reg = [r ^ t for r, t in zip(reg, taps)]
    if cfg.final_xor:
        reg = [r ^ ((cfg.final_xor >> (deg - 1 - i)) & 1) for i, r in enumerate(reg)]
    if cfg.reflect:
        reg = reg[::-1]
    return np.array(reg, dtype=np.uint8)


def crc_remainder(cfg: CrcConfig, payload: np.ndarray) -> np.ndarray:
    """CRC parity bits of `payload`.

    Accepts bit arrays of shape (..., L); the parity is computed along the
    last axis, so a whole batch of frames can be checked in one call.
    """
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.shape[-1] < 1:
        raise ValueError("payload must contain at least one bit")
    plain = cfg.init == 0 and cfg.final_xor == 0 and not cfg.reflect
    if not plain or cfg.length < 8:
        if payload.ndim == 1:
            return _crc_remainder_serial(cfg, payload)
        flat = payload.reshape(-1, payload.shape[-1])
        rows = [_crc_remainder_serial(cfg, row) for row in flat]
        return np.stack(rows).reshape(payload.shape[:-1] + (cfg.length,))

    # Fast path: with a zero initial register, leading zero bits do not move
    # the register, so the payload can be left-padded to a byte boundary.
    deg = cfg.length
    pad = (-payload.shape[-1]) % 8
    if pad:
        shape = payload.shape[:-1] + (pad,)
        payload = np.concatenate([np.zeros(shape, dtype=np.uint8), payload], axis=-1)
    packed = np.packbits(payload, axis=-1)
    table = _crc_table(cfg)
    mask = np.uint64((1 << deg) - 1)
    shift_hi = np.uint64(deg - 8)
    shift8 = np.uint64(8)
    reg = np.zeros(packed.shape[:-1], dtype=np.uint64)
    for j in range(packed.shape[-1]):
        idx = ((reg >> shift_hi) ^ packed[..., j]) & np.uint64(0xFF)
        reg = ((reg << shift8) & mask) ^ table[idx.astype(np.intp)]
    out = np.empty(packed.shape[:-1] + (deg,), dtype=np.uint8)
    for i in range(deg):
        out[..., i] = (reg >> np.uint64(deg - 1 - i)) & np.uint64(1)
    return out


def crc_attach(cfg: CrcConfig, payload: np.ndarray) -> np.ndarray:
    """Append `cfg.length` parity bits so that `crc_check` passes."""
    payload = np.asarray(payload, dtype=np.uint8)
    return np.concatenate([payload, crc_remainder(cfg, payload)], axis=-1)


def crc_check(cfg: CrcConfig, bits):
    """True iff the trailing parity bits are consistent with the payload.

    `bits` may be (..., L); the result is a bool (1-D input) or bool array.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] <= cfg.length:
        raise ValueError("input shorter than CRC length plus one payload bit")
    expect = crc_remainder(cfg, bits[..., : -cfg.length])
    ok = np.all(expect == bits[..., -cfg.length :], axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


def bhattacharyya_construct(
    N: int, K: int, design_ebn0_db: float = 0.0, crc_len: int = 0
) -> CodeSpec:
    """Select the frozen set from Bhattacharyya bounds of the bit channels.

    Starts from Z0 = exp(-(Eb/N0)_linear) at the design point and applies
    the kernel recursion Z -> (2Z - Z^2, Z^2). The K most reliable
    positions are left open; ties freeze the higher index.
    """
    if not _is_pow2(N):
        raise ValueError(f"N must be a power of two >= 2, got {N}")
    if not 0 < K <= N:
        raise ValueError(f"K must be in 1..{N}, got {K}")
    n = N.bit_length() - 1
    z = np.empty(N, dtype=np.float64)
    z[0] = np.exp(-(10.0 ** (design_ebn0_db / 10.0)))
    for level in range(n):
        width = 1 << level
        upper = 2.0 * z[:width] - z[:width] ** 2
        lower = z[:width] ** 2
        z[0 : 2 * width : 2] = upper
        z[1 : 2 * width : 2] = lower
    open_idx = np.argsort(z, kind="stable")[:K]
    frozen = np.ones(N, dtype=bool)
    frozen[open_idx] = False
    return CodeSpec(N=N, K=K, crc_len=crc_len, frozen=frozen, design_ebn0_db=design_ebn0_db)


def polar_transform(u: np.ndarray) -> np.ndarray:
    """In-place-style butterfly computing u times the n-fold kernel power.

    Self-inverse over GF(2). Natural bit order; no bit-reversal step.
    """
    u = np.asarray(u, dtype=np.uint8)
    N = u.shape[0]
    if not _is_pow2(N) and N != 1:
        raise ValueError("input length must be a power of two")
    x = u.copy()
    stride = 1
    while stride < N:
        v = x.reshape(-1, 2, stride)
        v[:, 0, :] ^= v[:, 1, :]
        stride *= 2
    return x


def encode(spec: CodeSpec, u: np.ndarray) -> np.ndarray:
    """Codeword for a full input vector u (frozen positions must be 0)."""
    u = np.asarray(u, dtype=np.uint8)
    if u.shape != (spec.N,):
        raise ValueError(f"u must have length {spec.N}")
    if np.any(u[spec.frozen]):
        raise ValueError("frozen positions must carry 0")
    return polar_transform(u)


def assemble_u(spec: CodeSpec, info_bits: np.ndarray, cfg: CrcConfig | None = None) -> np.ndarray:
    """Place the CRC-extended payload on the open positions, zeros elsewhere."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape != (spec.K - spec.crc_len,):
        raise ValueError(f"expected {spec.K - spec.crc_len} payload bits, got {info_bits.shape}")
    if spec.crc_len > 0:
        if cfg is None or cfg.length != spec.crc_len:
            raise ValueError("CRC config must match spec.crc_len")
        payload = crc_attach(cfg, info_bits)
    else:
        payload = info_bits
    u = np.zeros(spec.N, dtype=np.uint8)
    u[~spec.frozen] = payload
    return u


def extract_info(spec: CodeSpec, u: np.ndarray) -> np.ndarray:
    """Payload bits of a full input vector, CRC stripped."""
    u = np.asarray(u, dtype=np.uint8)
    return u[~spec.frozen][: spec.K - spec.crc_len]


def save_spec(spec: CodeSpec, path: str | Path) -> None:
    """Write a CodeSpec as flat key=value text for reuse across runs."""
    mask_hex = np.packbits(spec.frozen.astype(np.uint8)).tobytes().hex()
    lines = [
        f"N={spec.N}",
        f"K={spec.K}",
        f"crc_len={spec.crc_len}",
        f"design_ebn0_db={spec.design_ebn0_db!r}",
        f"frozen_hex={mask_hex}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_spec(path: str | Path) -> CodeSpec:
    fields = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    missing = {"N", "K", "crc_len", "design_ebn0_db", "frozen_hex"} - set(fields)
    if missing:
        raise ValueError(f"{path}: missing fields {sorted(missing)}")
    N = int(fields["N"])
    raw_mask = np.frombuffer(bytes.fromhex(fields["frozen_hex"]), dtype=np.uint8)
    frozen = np.unpackbits(raw_mask)[:N].astype(bool)
    return CodeSpec(
        N=N,
        K=int(fields["K"]),
        crc_len=int(fields["crc_len"]),
        frozen=frozen,
        design_ebn0_db=float(fields["design_ebn0_db"]),
    )
