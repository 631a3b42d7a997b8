"""Gray-mapped QPSK over AWGN with soft LLR demapping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ChannelConfig", "modulate_qpsk", "awgn_llr", "COMPONENT_AMPLITUDE"]

# Unit-energy symbols carry one antipodal component of 1/sqrt(2) per dimension.
COMPONENT_AMPLITUDE = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class ChannelConfig:
    """Operating point of the link.

    `rate_for_energy` is the payload rate (K - crc_len)/N: energy per
    information bit is accounted against payload bits only, even though the
    code rate itself counts CRC bits. With per-dimension amplitude a and
    payload rate r, Eb = a^2/r and N0 = 2 sigma^2, so
    sigma^2 = a^2 / (2 r (Eb/N0)).
    """

    ebn0_db: float
    rate_for_energy: float
    noise_var_per_dim: float = field(init=False)

    def __post_init__(self):
        if self.rate_for_energy <= 0:
            raise ValueError("rate_for_energy must be positive")
        var = COMPONENT_AMPLITUDE**2 / (
            2.0 * self.rate_for_energy * 10.0 ** (self.ebn0_db / 10.0)
        )
        object.__setattr__(self, "noise_var_per_dim", var)


def modulate_qpsk(bits: np.ndarray) -> np.ndarray:
    """Map bits to per-dimension antipodal components (1 - 2b)/sqrt(2).

    Consecutive component pairs form one unit-energy symbol. An odd-length
    input is zero-padded by one bit.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1:
        raise ValueError("bits must be a 1-D vector")
    if bits.shape[0] % 2:
        bits = np.append(bits, 0)
    return (1.0 - 2.0 * bits.astype(np.float64)) * COMPONENT_AMPLITUDE


def awgn_llr(symbols: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Add white Gaussian noise and demap to LLRs, one per dimension.

    LLR_i = 2 a y_i / sigma^2 with a = 1/sqrt(2); positive favours bit 0.
    Output order matches the modulated bit order.
    """
    symbols = np.asarray(symbols, dtype=np.float64)
    var = cfg.noise_var_per_dim
    if var <= 0:
        raise ValueError("noise variance must be positive")
    y = symbols + rng.normal(0.0, np.sqrt(var), symbols.shape)
    return 2.0 * COMPONENT_AMPLITUDE * y / var
