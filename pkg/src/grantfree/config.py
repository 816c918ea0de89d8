"""Scenario and algorithm constants.

Defaults reproduce the simulation setup of the reference system: 200 users,
64 BS antennas, 50 pilot + 150 data symbols, QPSK, rate-1/2 LDPC with CRC-8.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

CRC_BITS = 8
BITS_PER_SYMBOL = {"qpsk": 2, "16qam": 4}


@dataclass(frozen=True)
class SystemConfig:
    n_users: int = 200
    n_antennas: int = 64
    n_active: int = 40
    pilot_len: int = 50
    frame_len: int = 200

    tx_power_dbm: float = 23.0
    noise_density_dbm_hz: float = -169.0
    bandwidth_hz: float = 1e6
    cell_radius_km: float = 0.5
    min_distance_km: float = 0.05
    first_k_active: bool = False

    modulation: str = "qpsk"
    code_rate: float = 0.5
    ldpc_col_weight: int = 3
    ldpc_row_weight: int = 6
    bp_max_iters: int = 50
    llr_clip: float = 30.0

    theta: float = 0.4
    eps1: float = 1e-5
    eps2: float = 1e-5
    eps3: float = 1e-5
    q1: int = 6
    q2: int = 100
    q3: int = 6
    amp_max_iters: int = 100
    amp_tol: float = 1e-10
    damping: float = 0.6
    kappa: float = 0.5
    kappa1: float = 0.5
    kappa2: float = 0.5
    scale_symbols_by_activity: bool = True
    si_noise: str = "effective"
    estimator_noise: str = "em"
    si_warm_start: bool = True

    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- derived sizes -------------------------------------------------
    @property
    def data_len(self) -> int:
        return self.frame_len - self.pilot_len

    @property
    def bits_per_symbol(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    @property
    def modem_order(self) -> int:
        return 2 ** self.bits_per_symbol

    @property
    def coded_bits(self) -> int:
        return self.data_len * self.bits_per_symbol

    @property
    def block_bits(self) -> int:
        return int(round(self.coded_bits * self.code_rate))

    @property
    def payload_bits(self) -> int:
        return self.block_bits - CRC_BITS

    # -- powers (linear, mW) -------------------------------------------
    @property
    def tx_power(self) -> float:
        """Uplink transmit power in mW (gamma)."""
        return db_to_linear(self.tx_power_dbm)

    @property
    def noise_power(self) -> float:
        """Receiver noise power in mW (sigma^2)."""
        if math.isinf(self.noise_density_dbm_hz) and self.noise_density_dbm_hz < 0:
            return 0.0
        return db_to_linear(noise_power_dbm(self.noise_density_dbm_hz, self.bandwidth_hz))

    @property
    def noise_var(self) -> float:
        """Per-entry noise variance of the normalized model, sigma^2 / gamma."""
        return self.noise_power / self.tx_power

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if self.modulation not in BITS_PER_SYMBOL:
            bad(f"unsupported modulation {self.modulation!r}")
        if min(self.n_users, self.n_antennas, self.pilot_len, self.frame_len) < 1:
            bad("sizes must be positive")
        if not 0 <= self.n_active <= self.n_users:
            bad(f"need 0 <= K <= N, got K={self.n_active}, N={self.n_users}")
        if self.n_antennas < self.n_active:
            bad(f"need M >= K to avoid overloading, got M={self.n_antennas}, K={self.n_active}")
        if self.pilot_len >= self.frame_len:
            bad("pilot_len must be shorter than frame_len")
        if self.block_bits <= CRC_BITS:
            bad("code block too short for the CRC")
        for name in ("q1", "q2", "q3", "amp_max_iters", "bp_max_iters"):
            if getattr(self, name) < 1:
                bad(f"{name} must be >= 1")
        if not 0 < self.damping <= 1:
            bad("damping must lie in (0, 1]")
        for name in ("theta", "kappa", "kappa1", "kappa2", "code_rate"):
            if not 0 <= getattr(self, name) <= 1:
                bad(f"{name} must lie in [0, 1]")
        if not 0 < self.min_distance_km < self.cell_radius_km:
            bad("need 0 < min_distance_km < cell_radius_km")
        if self.bandwidth_hz <= 0:
            bad("bandwidth must be positive")
        if self.si_noise not in ("nominal", "effective"):
            bad(f"unknown si_noise {self.si_noise!r}")
        if self.estimator_noise not in ("nominal", "residual", "em"):
            bad(f"unknown estimator_noise {self.estimator_noise!r}")

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "SystemConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: coerce(known[k], v) for k, v in values.items()})


def coerce(f: dataclasses.Field, value):
    """Convert a string or number to the declared type of ``f``."""
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    if kind == "bool":
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{f.name}: cannot parse {value!r} as bool")
        return bool(value)
    try:
        if kind == "int":
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{f.name}: cannot parse {value!r} as {kind}") from None
    return str(value)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a TOML file; returns the raw table so callers can layer overrides."""
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


def noise_power_dbm(density_dbm_hz: float, bandwidth_hz: float) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return density_dbm_hz + 10.0 * math.log10(bandwidth_hz)
