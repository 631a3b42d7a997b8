"""Polar-code belief propagation on permuted factor graphs."""

from .bp import LLR_MAX, MessageState, boxplus, bp_iteration, check_stop, hard_decision, init_state
from .channel import ChannelConfig, awgn_llr, modulate_qpsk
from .code import (
    CodeSpec,
    CrcConfig,
    assemble_u,
    bhattacharyya_construct,
    crc_attach,
    crc_check,
    encode,
    extract_info,
    load_spec,
    polar_transform,
    save_spec,
)
from .decoders import (
    DecodeOutcome,
    DecoderParams,
    PermutationRecord,
    decode_bp,
    decode_fpbp,
    decode_nabp,
    decode_ppbp,
    decode_sc,
)
from .simulate import (
    StopRule,
    SweepStats,
    TrialRecord,
    classify_error,
    read_results_csv,
    run_trial,
    sweep,
    wilson_interval,
)
from .trellis import (
    PermutationEvent,
    StrideSchedule,
    full_permute,
    graph_encode,
    identity_schedule,
    modified_nodes,
    partial_permute,
)

__version__ = "0.1.0"
