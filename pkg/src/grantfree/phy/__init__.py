"""Coding and modulation chain: CRC-8, LDPC, Gray constellations, soft-bit calculus."""

from .constellation import Constellation, get_constellation
from .crc import CRC_LEN, crc_attach, crc_check
from .ldpc import LDPCCode, get_code
from .soft import (
    LLR_CLIP,
    bit_location,
    bit_posteriors_from_symbol_posteriors,
    extrinsic,
    hard_decision,
    soft_demod,
    symbol_priors_from_llrs,
)

__all__ = [
    "CRC_LEN", "Constellation", "LDPCCode", "LLR_CLIP", "bit_location",
    "bit_posteriors_from_symbol_posteriors", "crc_attach", "crc_check", "extrinsic",
    "get_code", "get_constellation", "hard_decision", "soft_demod", "symbol_priors_from_llrs",
]
