"""Monte Carlo experiment engine.

Every scheme at every sweep point sees the same sequence of scenario draws
(block b always uses ``block_rng(seed, b)``), so scheme comparisons are paired.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .config import SystemConfig
from .errors import ConfigError
from .model import ScenarioRealization, block_rng, draw_scenario
from .phy import get_code
from .receivers import SCHEMES, ReceiverOutput, run_scheme

SWEEP_ALIASES = {
    "K": "n_active",
    "N": "n_users",
    "M": "n_antennas",
    "L": "pilot_len",
    "T": "frame_len",
}

CSV_COLUMNS = (
    "sweep_value", "scheme", "p_md", "p_fa", "p_md_plus_fa", "nmse_db", "bler",
    "mean_iters", "time_ratio",
    "p_md_ci", "p_fa_ci", "p_md_plus_fa_ci", "nmse", "nmse_ci", "bler_ci", "mean_iters_ci",
    "mean_time_s", "n_blocks",
)

# per-block quantities that are averaged over blocks
METRICS = ("p_md", "p_fa", "p_md_plus_fa", "nmse", "bler", "iterations", "wall_time")


@dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig
    sweep_var: str | None = None
    sweep_values: tuple = ()
    schemes: tuple = SCHEMES
    n_blocks: int = 100
    seed: int = 0
    out: str | Path | None = None
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ConfigError(f"unknown schemes: {sorted(unknown)}")
        if self.sweep_var is not None:
            var = SWEEP_ALIASES.get(self.sweep_var, self.sweep_var)
            object.__setattr__(self, "sweep_var", var)
            if not self.sweep_values:
                raise ConfigError("sweep needs at least one value")
            for cfg in self.configs():
                cfg.validate()

    def configs(self) -> list[SystemConfig]:
        if self.sweep_var is None:
            return [self.base]
        return [self.base.replace(**{self.sweep_var: v}) for v in self.sweep_values]

    def points(self) -> list:
        if self.sweep_var is None:
            return [None]
        return list(self.sweep_values)


@dataclass(frozen=True)
class TrialMetrics:
    missed: int
    false_alarms: int
    n_active: int
    n_inactive: int
    nmse: float
    block_errors: int
    iterations: int = 0
    wall_time: float = math.nan

    def __post_init__(self):
        assert 0 <= self.missed <= self.n_active
        assert 0 <= self.false_alarms <= self.n_inactive
        assert 0 <= self.block_errors <= self.n_active
        assert not self.nmse < 0

    @property
    def p_md(self) -> float:
        return self.missed / self.n_active if self.n_active else 0.0

    @property
    def p_fa(self) -> float:
        return self.false_alarms / self.n_inactive if self.n_inactive else 0.0

    @property
    def bler(self) -> float:
        return self.block_errors / self.n_active if self.n_active else 0.0


def compute_metrics(truth: ScenarioRealization, out: ReceiverOutput, wall_time=math.nan) -> TrialMetrics:
    """Detection errors, channel NMSE over the true active users, and block errors.

    A missed active user delivers no payload and counts as a block error.
    """
    active = truth.activity
    N = active.size
    detected = np.zeros(N, dtype=bool)
    detected[np.asarray(out.detected, dtype=int)] = True
    missed = int(np.sum(active & ~detected))
    false_alarms = int(np.sum(~active & detected))

    cols = truth.active_users
    err = np.sum(np.abs(out.h_hat[:, cols] - truth.H[:, cols]) ** 2)
    ref = np.sum(np.abs(truth.H[:, cols]) ** 2)
    nmse = float(err / ref) if ref > 0 else 0.0

    errors = 0
    for n in cols:
        got = out.payloads.get(int(n))
        if got is None or not np.array_equal(np.asarray(got), truth.payload_of(n)):
            errors += 1
    return TrialMetrics(missed, false_alarms, int(active.sum()), int(N - active.sum()),
                        nmse, errors, int(out.iterations), float(wall_time))


def metric_row(m: TrialMetrics) -> dict:
    return {
        "p_md": m.p_md,
        "p_fa": m.p_fa,
        "p_md_plus_fa": m.p_md + m.p_fa,
        "nmse": m.nmse,
        "bler": m.bler,
        "iterations": m.iterations,
        "wall_time": m.wall_time,
    }


def run_block(cfg: SystemConfig, schemes, seed: int, block: int, timing=False) -> list[dict]:
    """Run every scheme on block ``block``; one record per scheme."""
    sc = draw_scenario(cfg, block_rng(seed, block))
    digest = sc.digest()
    records = []
    for scheme in schemes:
        t0 = time.perf_counter()
        out = run_scheme(scheme, sc.Y, sc.X_p, sc.beta, cfg, activity=sc.activity)
        elapsed = time.perf_counter() - t0 if timing else math.nan
        m = compute_metrics(sc, out, elapsed)
        records.append({"block": block, "scheme": scheme, "h_digest": digest, **metric_row(m)})
    return records


def _run_block_args(args):
    return run_block(*args)


def ci_half_width(values, level=0.95) -> float:
    """Half-width of the t confidence interval of the mean."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 2:
        return math.nan
    return float(stats.t.ppf(0.5 + level / 2, n - 1) * v.std(ddof=1) / math.sqrt(n))


def paired_difference(a, b, level=0.95) -> tuple[float, float]:
    """Mean and CI half-width of the blockwise difference a - b."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(d.mean()), ci_half_width(d, level)


def to_db(x) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def aggregate(records: list[dict], schemes, point=None) -> list[dict]:
    """Collapse per-block records of one sweep point into one row per scheme.

    Each mean is the plain average of per-block values; records are sorted by
    block first, so the result does not depend on the order they arrived in.
    """
    records = sorted(records, key=lambda r: (r["block"], r["scheme"]))
    rows = []
    for scheme in schemes:
        mine = [r for r in records if r["scheme"] == scheme]
        col = {k: np.array([r[k] for r in mine], dtype=float) for k in METRICS}
        nmse = float(col["nmse"].mean())
        rows.append({
            "sweep_value": point,
            "scheme": scheme,
            "p_md": float(col["p_md"].mean()),
            "p_fa": float(col["p_fa"].mean()),
            "p_md_plus_fa": float(col["p_md_plus_fa"].mean()),
            "nmse_db": to_db(nmse),
            "bler": float(col["bler"].mean()),
            "mean_iters": float(col["iterations"].mean()),
            "time_ratio": math.nan,
            "p_md_ci": ci_half_width(col["p_md"]),
            "p_fa_ci": ci_half_width(col["p_fa"]),
            "p_md_plus_fa_ci": ci_half_width(col["p_md_plus_fa"]),
            "nmse": nmse,
            "nmse_ci": ci_half_width(col["nmse"]),
            "bler_ci": ci_half_width(col["bler"]),
            "mean_iters_ci": ci_half_width(col["iterations"]),
            "mean_time_s": float(col["wall_time"].mean()),
            "n_blocks": len(mine),
        })
    ref = [r["mean_time_s"] for r in rows if r["scheme"] == "separate"]
    if ref and ref[0] > 0:
        for r in rows:
            r["time_ratio"] = r["mean_time_s"] / ref[0]
    return rows


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list[dict]
    records: dict = field(default_factory=dict)  # sweep point -> per-block records

    def row(self, scheme, point=None) -> dict:
        for r in self.rows:
            if r["scheme"] == scheme and r["sweep_value"] == point:
                return r
        raise KeyError((scheme, point))

    def per_block(self, scheme, metric, point=None) -> np.ndarray:
        recs = sorted((r for r in self.records[point] if r["scheme"] == scheme), key=lambda r: r["block"])
        return np.array([r[metric] for r in recs], dtype=float)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run all schemes on all blocks at each sweep point; write CSV and metadata if ``spec.out`` is set."""
    rows, per_point = [], {}
    for point, cfg in zip(spec.points(), spec.configs()):
        jobs = [(cfg, spec.schemes, spec.seed, b, spec.timing) for b in range(spec.n_blocks)]
        if spec.workers > 1:
            with ProcessPoolExecutor(spec.workers) as pool:
                chunks = list(pool.map(_run_block_args, jobs))
        else:
            chunks = [_run_block_args(j) for j in jobs]
        records = [r for chunk in chunks for r in chunk]
        per_point[point] = records
        rows.extend(aggregate(records, spec.schemes, point))
    result = ExperimentResult(spec, rows, per_point)
    if spec.out is not None:
        write_outputs(result, spec.out)
    return result


def metadata(result: ExperimentResult) -> dict:
    spec = result.spec
    codes = {}
    for cfg in spec.configs():
        code = get_code(cfg.coded_bits, cfg.block_bits, cfg.ldpc_col_weight, cfg.ldpc_row_weight)
        codes[f"{code.n}x{code.n_data}"] = code.digest()
    return {
        "code_version": __version__,
        "config": spec.base.to_dict(),
        "sweep": {"variable": spec.sweep_var, "values": list(spec.sweep_values)},
        "schemes": list(spec.schemes),
        "n_blocks": spec.n_blocks,
        "seed": spec.seed,
        "timing": spec.timing,
        "parity_matrix_sha256": codes,
        "blocks": {str(p): recs for p, recs in result.records.items()},
    }


def write_outputs(result: ExperimentResult, out) -> tuple[Path, Path]:
    out = Path(out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(result.csv_text())
        meta = out.with_suffix(".meta.json")
        meta.write_text(json.dumps(metadata(result), indent=1, default=_json_default) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write results to {out}: {exc}") from exc
    return out, meta


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v))


def measure_runtime(spec: ExperimentSpec) -> dict:
    """Mean wall time per scheme relative to the separate design, per sweep point.

    Runs serially with one untimed warm-up block so code construction and
    caches are not charged to the first scheme.
    """
    if "separate" not in spec.schemes:
        raise ConfigError("runtime normalization needs the separate scheme")
    timed = ExperimentSpec(spec.base, spec.sweep_var, spec.sweep_values, spec.schemes,
                           spec.n_blocks, spec.seed, None, True, 1)
    for cfg in timed.configs():
        run_block(cfg, timed.schemes, timed.seed, 0)
    result = run_experiment(timed)
    return {p: {r["scheme"]: r["time_ratio"] for r in result.rows if r["sweep_value"] == p}
            for p in timed.points()}


def parse_sweep(text: str) -> tuple[str, tuple]:
    """Parse ``K=10:10:100`` (start:step:stop, inclusive) or ``theta=0.1,0.5,0.9``."""
    if "=" not in text:
        raise ConfigError(f"sweep must look like VAR=values, got {text!r}")
    name, values = (s.strip() for s in text.split("=", 1))
    name = SWEEP_ALIASES.get(name, name)
    if ":" in values:
        parts = [float(p) for p in values.split(":")]
        if len(parts) != 3 or parts[1] == 0:
            raise ConfigError(f"range must be start:step:stop, got {values!r}")
        start, step, stop = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + i * step, 12) for i in range(max(n, 0))]
    else:
        vals = [float(p) for p in values.split(",") if p.strip()]
    if not vals:
        raise ConfigError(f"empty sweep {text!r}")
    kind = SystemConfig.__dataclass_fields__.get(name)
    if kind is None:
        raise ConfigError(f"unknown sweep variable {name!r}")
    if kind.type in ("int", int):
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{name} takes integer values")
        vals = [int(v) for v in vals]
    return name, tuple(vals)
