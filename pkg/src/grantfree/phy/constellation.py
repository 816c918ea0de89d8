"""Gray-mapped QPSK and 16-QAM with the bit-set partition used by the soft demappers.

Point ``k`` carries the bit label whose big-endian integer value is ``k``;
bit position 0 is the leftmost (most significant) bit. For QPSK this gives
s0 <- "00", s1 <- "01", s2 <- "10", s3 <- "11", so X_0^0 = {s0, s1} and
X_1^1 = {s1, s3}.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Gray PAM-4 amplitudes indexed by the 2-bit label (first bit picks the sign).
_PAM4 = np.array([3.0, 1.0, -3.0, -1.0])


@dataclass(frozen=True)
class Constellation:
    name: str
    points: np.ndarray  # complex, shape (order,)
    labels: np.ndarray  # uint8, shape (order, bits_per_symbol)

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    def bit_set(self, position: int, bit: int) -> np.ndarray:
        """Indices of the points whose label has ``bit`` at ``position``."""
        return np.flatnonzero(self.labels[:, position] == bit)

    def point_set(self, position: int, bit: int) -> np.ndarray:
        return self.points[self.bit_set(position, bit)]

    def modulate(self, bits) -> np.ndarray:
        """Map a bit array (last axis a multiple of bits_per_symbol) to symbols."""
        bits = np.asarray(bits, dtype=np.uint8)
        b = self.bits_per_symbol
        if bits.shape[-1] % b:
            raise ValueError(f"bit count {bits.shape[-1]} not divisible by {b}")
        groups = bits.reshape(*bits.shape[:-1], -1, b)
        weights = 1 << np.arange(b - 1, -1, -1)
        return self.points[groups @ weights]

    def demodulate_hard(self, symbols) -> np.ndarray:
        """Nearest-point bit labels, flattened per row."""
        symbols = np.asarray(symbols)
        idx = np.argmin(np.abs(symbols[..., None] - self.points) ** 2, axis=-1)
        return self.labels[idx].reshape(*symbols.shape[:-1], -1)


def _labels(bits: int) -> np.ndarray:
    k = np.arange(2 ** bits)
    return ((k[:, None] >> np.arange(bits - 1, -1, -1)) & 1).astype(np.uint8)


@lru_cache(maxsize=None)
def get_constellation(name: str) -> Constellation:
    name = name.lower()
    if name == "qpsk":
        labels = _labels(2)
        points = ((1 - 2.0 * labels[:, 0]) + 1j * (1 - 2.0 * labels[:, 1])) / np.sqrt(2)
    elif name == "16qam":
        labels = _labels(4)
        re = _PAM4[2 * labels[:, 0] + labels[:, 1]]
        im = _PAM4[2 * labels[:, 2] + labels[:, 3]]
        points = (re + 1j * im) / np.sqrt(10)
    else:
        raise ValueError(f"unknown constellation {name!r}")
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(name, points, labels)
