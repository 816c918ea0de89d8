"""CRC-8 with generator D^8 + D^7 + D^4 + D^3 + D + 1 (3GPP gCRC8).

Zero initial register, no final XOR, bits processed MSB first. Works on
single bit vectors or on 2-D arrays with one block per row.
"""

import numpy as np

CRC8_POLY = 0x19B  # includes the D^8 term
CRC_LEN = 8


def crc_remainder(bits) -> np.ndarray:
    """Remainder of bits(D) * D^8 modulo g(D), as 8 bits per row."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    reg = np.zeros(bits.shape[0], dtype=np.int64)
    low = CRC8_POLY & 0xFF
    for j in range(bits.shape[1]):
        top = ((reg >> 7) & 1) ^ bits[:, j]
        reg = ((reg << 1) & 0xFF) ^ (top * low)
    out = ((reg[:, None] >> np.arange(CRC_LEN - 1, -1, -1)) & 1).astype(np.uint8)
    return out


def crc_attach(payload, payload_bits: int | None = None) -> np.ndarray:
    payload = np.asarray(payload, dtype=np.uint8)
    if payload_bits is not None and payload.shape[-1] != payload_bits:
        raise ValueError(f"expected {payload_bits} payload bits, got {payload.shape[-1]}")
    rem = crc_remainder(payload)
    if payload.ndim == 1:
        return np.concatenate([payload, rem[0]])
    return np.concatenate([payload, rem], axis=1)


def crc_check(block, block_bits: int | None = None):
    """True where the block (payload + CRC) leaves a zero remainder."""
    block = np.asarray(block, dtype=np.uint8)
    if block_bits is not None and block.shape[-1] != block_bits:
        raise ValueError(f"expected {block_bits} block bits, got {block.shape[-1]}")
    if block.shape[-1] <= CRC_LEN:
        raise ValueError("block shorter than the CRC")
    ok = ~np.any(crc_remainder(block[..., :-CRC_LEN]) != np.atleast_2d(block[..., -CRC_LEN:]), axis=1)
    return bool(ok[0]) if block.ndim == 1 else ok
