"""Monte-Carlo calibration of the conditional null quantiles.

Under the null hypothesis and given N_L = n, the points are an i.i.d. uniform
n-sample, so every threshold can be estimated by simulation once per n. For
each n the null samples are split in two independent halves: half A gives the
empirical quantiles for every candidate level u on a grid, half B estimates the
family-wise rejection probability at each u, and the calibrated level is the
largest grid u whose estimated probability does not exceed alpha (never below
alpha itself, which is the Bonferroni choice).

Model selection: per-model level ``u * exp(-W_J)`` for the statistic T'_J.
Thresholding: per-coefficient level ``u / (2^j Jbar)`` for T_(j,k); the
quantile does not depend on k, so it is estimated from T_(j,0), while the
rejection event in half B looks at all 2^j coefficients of each level.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .errors import ConfigError, SchemaVersionError
from .haar import level_statistics, t_prime_batch

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_GRID_SIZE = 200
_GRID_TOP = 1 - 1e-4


@dataclass(frozen=True)
class ModelSelection:
    models: tuple
    weights: tuple

    kind = "model_selection"

    def __post_init__(self):
        models = tuple(int(J) for J in self.models)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "weights", weights)
        if not models or len(models) != len(weights):
            raise ConfigError("model selection needs one weight per model")
        if min(models) < 1 or len(set(models)) != len(models):
            raise ConfigError("models must be distinct positive integers")
        if any(w < 0 for w in weights):
            raise ConfigError("weights must be non-negative")
        if sum(math.exp(-w) for w in weights) > 1 + 1e-12:
            raise ConfigError("weights must satisfy sum_J exp(-W_J) <= 1")

    @classmethod
    def uniform(cls, models):
        """Weights W_J = ln |models| for every J."""
        models = tuple(models)
        return cls(models, (math.log(len(models)),) * len(models))

    @property
    def top_level(self):
        return max(self.models)

    @property
    def level_multipliers(self):
        return np.exp(-np.array(self.weights))

    @property
    def keys(self):
        return list(self.models)

    def to_dict(self):
        return {"type": self.kind, "models": list(self.models), "weights": list(self.weights)}


@dataclass(frozen=True)
class Thresholding:
    max_level: int

    kind = "thresholding"

    def __post_init__(self):
        if int(self.max_level) < 1:
            raise ConfigError("max_level (Jbar) must be >= 1")
        object.__setattr__(self, "max_level", int(self.max_level))

    @property
    def top_level(self):
        return self.max_level

    @property
    def weights(self):
        return (0.0,)

    @property
    def level_multipliers(self):
        return 1.0 / (2.0 ** np.arange(self.max_level) * self.max_level)

    @property
    def keys(self):
        return list(range(self.max_level))

    def to_dict(self):
        return {"type": self.kind, "max_level": self.max_level}


def procedure_from_dict(data):
    data = dict(data)
    kind = data.pop("type", None)
    if kind == ModelSelection.kind:
        models = data["models"]
        weights = data.get("weights", "uniform")
        if weights == "uniform":
            return ModelSelection.uniform(models)
        return ModelSelection(models, weights)
    if kind == Thresholding.kind:
        return Thresholding(data["max_level"])
    raise ConfigError(f"unknown procedure type {kind!r}")


def default_u_grid(alpha, procedure, size=DEFAULT_GRID_SIZE):
    """Geometric grid from alpha * exp(-max W) to 1 - 1e-4, plus alpha itself; decreasing."""
    low = alpha * math.exp(-max(procedure.weights))
    grid = np.union1d(np.geomspace(low, _GRID_TOP, size), [alpha])
    return tuple(float(u) for u in grid[::-1])


@dataclass(frozen=True)
class CalibrationConfig:
    L: float
    alpha: float
    procedure: ModelSelection | Thresholding
    n_min: int
    n_max: int
    mc_samples: int = 200_000
    u_grid: tuple = None
    master_seed: int = 0

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.n_min < 0 or self.n_max < self.n_min:
            raise ConfigError(f"empty n range [{self.n_min}, {self.n_max}]")
        if self.mc_samples < 2 or self.mc_samples % 2:
            raise ConfigError("mc_samples must be a positive even integer")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        if self.u_grid is None:
            object.__setattr__(self, "u_grid", default_u_grid(self.alpha, self.procedure))
        grid = tuple(float(u) for u in self.u_grid)
        if not grid or any(not 0 < u < 1 for u in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
            raise ConfigError("u_grid must be strictly decreasing inside (0, 1)")
        object.__setattr__(self, "u_grid", grid)
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_values(self):
        return range(self.n_min, self.n_max + 1)

    def to_dict(self):
        return {
            "L": self.L,
            "alpha": self.alpha,
            "procedure": self.procedure.to_dict(),
            "n_min": self.n_min,
            "n_max": self.n_max,
            "mc_samples": self.mc_samples,
            "u_grid": list(self.u_grid),
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        try:
            procedure = procedure_from_dict(data.pop("procedure"))
            return cls(procedure=procedure, **data)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid calibration config: {exc}") from None

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class NEntry:
    calibrated_level: float
    thresholds: tuple
    estimated_level: float = math.nan


@dataclass
class QuantileTable:
    """Calibrated levels and thresholds, one :class:`NEntry` per sample size n.

    Sample sizes outside the configured range are calibrated on first use with
    the same seed derivation, so they match what an eager run would produce.
    """

    config: CalibrationConfig
    per_n: dict
    _lazy: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def kind(self):
        return self.config.procedure.kind

    @property
    def L(self):
        return self.config.L

    @property
    def alpha(self):
        return self.config.alpha

    @property
    def keys(self):
        return self.config.procedure.keys

    def entry(self, n):
        n = int(n)
        if n in self.per_n:
            return self.per_n[n]
        if n not in self._lazy:
            log.info("calibrating n=%d on demand", n)
            self._lazy[n] = calibrate_n(self.config, n)
        return self._lazy[n]

    def threshold_matrix(self, ns):
        """Thresholds for each requested n, shape ``(len(ns), number of keys)``."""
        ns = np.asarray(ns, dtype=np.int64)
        uniq, inv = np.unique(ns, return_inverse=True)
        rows = np.array([self.entry(n).thresholds for n in uniq], dtype=float).reshape(len(uniq), -1)
        return rows[inv]

    def fingerprint(self):
        return self.config.fingerprint()


def empirical_quantile(sorted_samples, u):
    """Upper empirical (1 - u) quantile: the ceil((1 - u) m)-th order statistic."""
    m = len(sorted_samples)
    if m == 0:
        raise ValueError("empirical quantile of an empty sample")
    return sorted_samples[_order_index(m, u)]


def _order_index(m, u):
    # 0-based index of the ceil((1-u) m)-th order statistic; the 1e-9 guards
    # against (1-u)*m landing just above an integer through rounding
    k = np.ceil((1.0 - np.asarray(u, dtype=float)) * m - 1e-9).astype(np.int64)
    return np.clip(k, 1, m) - 1


def _chunk_rows(n, top_level):
    # bounded memory per chunk; depends only on (n, top_level) to keep seeds stable
    width = max(n, 1 << top_level, 1)
    return int(max(256, min(streams.CHUNK, (1 << 22) // width)))


def _uniform_counts(n, rows, top_level, rng):
    B = 1 << top_level
    if n == 0:
        return np.zeros((rows, B), dtype=np.int64)
    cells = (rng.random((rows, n)) * B).astype(np.int64)
    cells += (np.arange(rows, dtype=np.int64) * B)[:, None]
    return np.bincount(cells.ravel(), minlength=rows * B).reshape(rows, B)


def _family_columns(procedure, counts, L, per_k_max):
    if procedure.kind == ModelSelection.kind:
        return t_prime_batch(counts, L, procedure.models)
    stats = level_statistics(counts, L, procedure.max_level)
    if per_k_max:
        return np.stack([s.max(axis=-1) for s in stats], axis=-1)
    return np.stack([s[..., 0] for s in stats], axis=-1)


def null_statistic_samples(n, procedure, m, rng, L=1.0):
    """Statistics of ``m`` null n-samples: T'_J per model, or T_(j,0) per level."""
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    rows = _chunk_rows(n, procedure.top_level)
    out = []
    for _, size in streams.chunks(m, rows):
        counts = _uniform_counts(n, size, procedure.top_level, rng)
        out.append(_family_columns(procedure, counts, L, per_k_max=False))
    return np.concatenate(out, axis=0)


def _half_samples(config, n, half, per_k_max):
    proc = config.procedure
    ptag = streams.tag(proc.kind)
    rows = _chunk_rows(n, proc.top_level)
    out = []
    for c, size in streams.chunks(config.mc_samples // 2, rows):
        rng = streams.stream(config.master_seed, streams.CALIBRATION, ptag, n, half, c)
        counts = _uniform_counts(n, size, proc.top_level, rng)
        out.append(_family_columns(proc, counts, config.L, per_k_max))
    return np.concatenate(out, axis=0)


def calibrate_n(config, n):
    """Calibrated level and thresholds for a single sample size n."""
    proc = config.procedure
    mult = proc.level_multipliers
    half_a = np.sort(_half_samples(config, n, 0, per_k_max=False), axis=0)
    half_b = _half_samples(config, n, 1, per_k_max=True)
    m_a, m_b = half_a.shape[0], half_b.shape[0]
    ncol = half_a.shape[1]

    grid = np.array(config.u_grid[::-1])  # ascending
    cols = np.arange(ncol)
    # Q[g, c]: threshold of column c at grid level g, nonincreasing in g
    Q = half_a[_order_index(m_a, grid[:, None] * mult[None, :]), cols[None, :]]

    # first grid index at which each half-B sample rejects
    first = np.full(m_b, len(grid), dtype=np.int64)
    for c in range(ncol):
        idx = np.searchsorted(-Q[:, c], -half_b[:, c], side="right")
        np.minimum(first, idx, out=first)
    prob = np.cumsum(np.bincount(first, minlength=len(grid) + 1))[: len(grid)] / m_b

    ok = np.flatnonzero(prob <= config.alpha)
    u_star = grid[ok[-1]] if ok.size else 0.0
    level = float(max(config.alpha, u_star))
    thresholds = half_a[_order_index(m_a, level * mult), cols]
    estimated = float(np.mean(np.any(half_b > thresholds[None, :], axis=1)))
    return NEntry(level, tuple(float(t) for t in thresholds), estimated)


def _calibrate_many(args):
    config, ns = args
    return [(n, calibrate_n(config, n)) for n in ns]


def calibrate(config, threads=1, progress=None):
    """Calibrate every n of ``config.n_values``. Output does not depend on ``threads``."""
    ns = list(config.n_values)
    per_n = {}
    if threads > 1 and len(ns) > 1:
        batches = [(config, ns[i::threads]) for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(_calibrate_many, batches):
                per_n.update(result)
    else:
        for n in ns:
            per_n[n] = calibrate_n(config, n)
            if progress:
                progress(n, per_n[n])
    return QuantileTable(config, {n: per_n[n] for n in ns})


def calibrate_model_selection(config, threads=1, progress=None):
    if config.procedure.kind != ModelSelection.kind:
        raise ConfigError("configuration is not a model-selection procedure")
    return calibrate(config, threads, progress)


def calibrate_thresholding(config, threads=1, progress=None):
    if config.procedure.kind != Thresholding.kind:
        raise ConfigError("configuration is not a thresholding procedure")
    return calibrate(config, threads, progress)


def fresh_rejection_rate(table, n, m, rng):
    """Null rejection frequency at a fixed n on new samples (level diagnostic)."""
    proc = table.config.procedure
    thresholds = np.asarray(table.entry(n).thresholds)
    rows = _chunk_rows(n, proc.top_level)
    hits = 0
    for _, size in streams.chunks(m, rows):
        counts = _uniform_counts(n, size, proc.top_level, rng)
        stats = _family_columns(proc, counts, table.L, per_k_max=True)
        hits += int(np.count_nonzero(np.any(stats > thresholds[None, :], axis=1)))
    return hits / m


def table_to_dict(table):
    return {
        "schema_version": SCHEMA_VERSION,
        "config": table.config.to_dict(),
        "per_n": [
            {
                "n": n,
                "calibrated_level": e.calibrated_level,
                "estimated_level": e.estimated_level,
                "thresholds": {str(k): t for k, t in zip(table.keys, e.thresholds)},
            }
            for n, e in sorted(table.per_n.items())
        ],
    }


def save_table(table, path):
    """Write the versioned JSON table; floats use round-trip exact repr."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(table_to_dict(table), fh, indent=1)
        fh.write("\n")


def table_from_dict(data):
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported table schema version {version!r}, expected {SCHEMA_VERSION}")
    try:
        config = CalibrationConfig.from_dict(data["config"])
        keys = [str(k) for k in config.procedure.keys]
        per_n = {}
        for row in data["per_n"]:
            per_n[int(row["n"])] = NEntry(
                float(row["calibrated_level"]),
                tuple(float(row["thresholds"][k]) for k in keys),
                float(row.get("estimated_level", math.nan)),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"corrupted quantile table: {exc!r}") from None
    return QuantileTable(config, per_n)


def load_table(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"corrupted quantile table {path}: {exc}") from None
    return table_from_dict(data)
