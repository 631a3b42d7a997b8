import numpy as np
import pytest

from polarbp.bp import LLR_MAX
from polarbp.code import CrcConfig, assemble_u, bhattacharyya_construct, encode


def dense_generator(N: int) -> np.ndarray:
    """Independent dense generator matrix via repeated Kronecker products."""
    F = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    G = np.array([[1]], dtype=np.uint8)
    while G.shape[0] < N:
        G = np.kron(G, F)
    return G


def noiseless_llr(spec, info, crc_cfg=None):
    """Channel LLRs for a clean transmission of `info`, saturated at LLR_MAX."""
    u = assemble_u(spec, info, crc_cfg)
    return u, (1.0 - 2.0 * encode(spec, u).astype(np.float64)) * LLR_MAX


@pytest.fixture(scope="session")
def crc24():
    return CrcConfig.crc24()


@pytest.fixture(scope="session")
def spec64(crc24):
    return bhattacharyya_construct(64, 32 + 24, crc_len=24)
