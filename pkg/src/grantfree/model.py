"""Scenario ground truth and the received signal of one transmission block.

All signals are kept in the power-normalized form Y = H X + N / sqrt(gamma),
where H already carries activity and large-scale fading.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, db_to_linear
from .errors import ConfigError
from .phy import crc_attach, get_code, get_constellation


def path_loss_db(r_km):
    """Large-scale fading in dB at distance ``r_km`` (km)."""
    r = np.asarray(r_km, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    out = -128.1 - 36.7 * np.log10(r)
    return float(out) if out.ndim == 0 else out


def complex_normal(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """i.i.d. CN(0, var) samples."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent generator for block ``block`` of an experiment seeded with ``seed``.

    Streams depend only on (seed, block), so every scheme and every sweep point
    that reuses a block index sees the same draws.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, block]))


def synthesize(H, X, white, noise_power, tx_power, normalized=True):
    """Received block from unit-variance complex noise ``white``.

    ``normalized=False`` returns sqrt(gamma) H X + sigma W; dividing that by
    sqrt(gamma) reproduces the normalized output up to rounding.
    """
    sigma = np.sqrt(noise_power)
    if normalized:
        return H @ X + (sigma / np.sqrt(tx_power)) * white
    return np.sqrt(tx_power) * (H @ X) + sigma * white


@dataclass(frozen=True)
class ScenarioRealization:
    activity: np.ndarray  # bool (N,)
    distances_km: np.ndarray
    beta: np.ndarray  # linear large-scale fading (N,)
    F: np.ndarray  # M x N channel before activity masking
    H: np.ndarray  # effective channel, zero columns for inactive users
    payloads: np.ndarray  # K x N_b, rows ordered as active_users
    blocks: np.ndarray  # K x N_d
    codewords: np.ndarray  # K x N_c
    X_p: np.ndarray  # N x L
    X_d: np.ndarray  # N x L_d
    noise: np.ndarray  # M x T, already divided by sqrt(gamma)
    Y: np.ndarray  # M x T

    @property
    def active_users(self) -> np.ndarray:
        return np.flatnonzero(self.activity)

    @property
    def X(self) -> np.ndarray:
        return np.concatenate([self.X_p, self.X_d], axis=1)

    @property
    def pilot_len(self) -> int:
        return self.X_p.shape[1]

    @property
    def Y_p(self) -> np.ndarray:
        return self.Y[:, :self.pilot_len]

    @property
    def Y_d(self) -> np.ndarray:
        return self.Y[:, self.pilot_len:]

    def payload_of(self, user: int) -> np.ndarray:
        row = np.searchsorted(self.active_users, user)
        return self.payloads[row]

    def digest(self) -> str:
        """Short hash of the effective channel, logged to confirm shared draws."""
        return hashlib.sha256(np.ascontiguousarray(self.H).tobytes()).hexdigest()[:16]


def draw_user_distances(cfg: SystemConfig, rng, n=None) -> np.ndarray:
    """Uniform positions in the annulus [min_distance, cell_radius]."""
    n = cfg.n_users if n is None else n
    r0, r1 = cfg.min_distance_km, cfg.cell_radius_km
    return np.sqrt(rng.uniform(r0 ** 2, r1 ** 2, size=n))


def draw_scenario(cfg: SystemConfig, rng: np.random.Generator, payloads=None) -> ScenarioRealization:
    """Draw one block: placement, activity, Rayleigh channels, coded data, noise.

    Draw order is fixed (distances, activity, fading, payloads, pilots, noise)
    so a seeded generator always yields the same realization.
    """
    cfg.validate()
    N, M, K = cfg.n_users, cfg.n_antennas, cfg.n_active
    L, T = cfg.pilot_len, cfg.frame_len

    r = draw_user_distances(cfg, rng)
    beta = db_to_linear(path_loss_db(r))
    if cfg.first_k_active:
        active = np.arange(K)
    else:
        active = np.sort(rng.choice(N, size=K, replace=False))
    u = np.zeros(N, dtype=bool)
    u[active] = True

    F = complex_normal(rng, (M, N)) * np.sqrt(beta)
    H = F * u

    if payloads is None:
        payloads = rng.integers(0, 2, size=(K, cfg.payload_bits), dtype=np.uint8)
    payloads = np.asarray(payloads, dtype=np.uint8).reshape(K, -1)
    if payloads.shape[1] != cfg.payload_bits:
        raise ConfigError(f"payloads need {cfg.payload_bits} bits, got {payloads.shape[1]}")
    code = get_code(cfg.coded_bits, cfg.block_bits, cfg.ldpc_col_weight, cfg.ldpc_row_weight)
    blocks = crc_attach(payloads).reshape(K, -1)
    codewords = code.encode(blocks).reshape(K, -1)

    X_p = complex_normal(rng, (N, L))
    X_d = np.zeros((N, cfg.data_len), dtype=complex)
    X_d[active] = get_constellation(cfg.modulation).modulate(codewords)

    white = complex_normal(rng, (M, T))
    X = np.concatenate([X_p, X_d], axis=1)
    Y = synthesize(H, X, white, cfg.noise_power, cfg.tx_power)
    noise = np.sqrt(cfg.noise_var) * white

    return ScenarioRealization(u, r, beta, F, H, payloads, blocks, codewords, X_p, X_d, noise, Y)
