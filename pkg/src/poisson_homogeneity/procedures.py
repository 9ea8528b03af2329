"""Homogeneity tests: model selection, thresholding, their combination, and the
Kolmogorov-Smirnov, Laplace and Z comparators.

Every test is implemented on a :class:`PatternBatch` so that power studies can
evaluate thousands of patterns at once; the single-pattern functions are thin
wrappers. The statistic reported for each test is the signed margin whose
positivity means rejection. An empty pattern is always accepted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .calibration import ModelSelection, Thresholding
from .distributions import chi2_quantile, irwin_hall_quantile, ks_critical_value
from .errors import TableMismatchError
from .haar import HaarIndex, dyadic_counts, level_statistics, t_prime_batch
from .poisson import PatternBatch

MODEL_SELECTION = "model_selection"
THRESHOLDING = "thresholding"
COMBINED = "combined"
KS = "ks"
LAPLACE = "laplace"
Z = "z"
ALL_PROCEDURES = (MODEL_SELECTION, THRESHOLDING, COMBINED, KS, LAPLACE, Z)
TABLE_FREE = (KS, LAPLACE, Z)


@dataclass(frozen=True)
class TestVerdict:
    __test__ = False  # not a pytest class

    procedure: str
    reject: bool
    statistic: float
    witness: Optional[object]
    n_observed: int

    CSV_HEADER = "procedure,n,statistic,witness,reject"

    def csv_row(self):
        if isinstance(self.witness, HaarIndex):
            witness = f"({self.witness.j};{self.witness.k})"
        else:
            witness = "" if self.witness is None else str(self.witness)
        return f"{self.procedure},{self.n_observed},{self.statistic!r},{witness},{int(self.reject)}"


@dataclass(frozen=True)
class BatchResult:
    """Per-pattern outcome of one test over a batch."""

    procedure: str
    reject: np.ndarray
    statistic: np.ndarray
    witness: list
    n_observed: np.ndarray

    def verdict(self, i):
        return TestVerdict(self.procedure, bool(self.reject[i]), float(self.statistic[i]),
                           self.witness[i], int(self.n_observed[i]))

    @property
    def rejections(self):
        return int(np.count_nonzero(self.reject))


def _check_table(table, batch, kind, alpha=None):
    if table.kind != kind:
        raise TableMismatchError(f"expected a {kind} table, got {table.kind}")
    if table.L != batch.scale_L:
        raise TableMismatchError(f"table calibrated for L={table.L}, pattern has L={batch.scale_L}")
    if alpha is not None and alpha != table.alpha:
        raise TableMismatchError(f"table calibrated at alpha={table.alpha}, requested {alpha}")


def _thresholds(table, ns):
    ncol = len(table.keys)
    out = np.zeros((ns.size, ncol))
    live = ns > 0
    if np.any(live):
        out[live] = table.threshold_matrix(ns[live])
    return out


def model_selection_batch(batch, table, alpha=None):
    _check_table(table, batch, ModelSelection.kind, alpha)
    proc = table.config.procedure
    counts = dyadic_counts(batch.points, proc.top_level, batch.groups, batch.size)
    diff = t_prime_batch(counts, batch.scale_L, proc.models) - _thresholds(table, batch.counts)
    best = np.argmax(diff, axis=1)
    stat = diff[np.arange(batch.size), best]
    empty = batch.counts == 0
    stat[empty] = 0.0
    witness = [None if e else proc.models[b] for b, e in zip(best, empty)]
    return BatchResult(MODEL_SELECTION, stat > 0, stat, witness, batch.counts)


def thresholding_batch(batch, table, alpha=None):
    _check_table(table, batch, Thresholding.kind, alpha)
    Jbar = table.config.procedure.max_level
    counts = dyadic_counts(batch.points, Jbar, batch.groups, batch.size)
    stats = level_statistics(counts, batch.scale_L, Jbar)
    thr = _thresholds(table, batch.counts)
    diff = np.concatenate([s - thr[:, [j]] for j, s in enumerate(stats)], axis=1)
    index = [HaarIndex(j, k) for j in range(Jbar) for k in range(2 ** j)]
    best = np.argmax(diff, axis=1)
    stat = diff[np.arange(batch.size), best]
    empty = batch.counts == 0
    stat[empty] = 0.0
    witness = [None if e else index[b] for b, e in zip(best, empty)]
    return BatchResult(THRESHOLDING, stat > 0, stat, witness, batch.counts)


def combined_batch(batch, table_ms, table_th, alpha=None):
    """Reject when either sub-test rejects; both tables must share level alpha / 2."""
    if table_ms.alpha != table_th.alpha:
        raise TableMismatchError("combined test needs both tables at the same level alpha/2")
    if alpha is not None and not np.isclose(2 * table_ms.alpha, alpha, rtol=0, atol=1e-15):
        raise TableMismatchError(f"combined test at alpha={alpha} needs tables at {alpha / 2}")
    a = model_selection_batch(batch, table_ms)
    b = thresholding_batch(batch, table_th)
    use_a = a.statistic >= b.statistic
    stat = np.where(use_a, a.statistic, b.statistic)
    witness = [(f"{MODEL_SELECTION}:{wa}" if ua else f"{THRESHOLDING}:{wb}") if wa is not None else None
               for ua, wa, wb in zip(use_a, a.witness, b.witness)]
    return BatchResult(COMBINED, a.reject | b.reject, stat, witness, batch.counts)


def _per_n(ns, fn):
    uniq, inv = np.unique(ns, return_inverse=True)
    return np.array([fn(int(n)) if n > 0 else 0.0 for n in uniq])[inv]


def ks_batch(batch, alpha):
    _check_alpha(alpha)
    ns = batch.counts
    groups = batch.groups
    x = batch.points
    rank = np.arange(x.size) - batch.offsets[:-1][groups]
    nn = ns[groups].astype(float)
    dev = np.maximum((rank + 1) / nn - x, x - rank / nn)
    D = np.zeros(batch.size)
    np.maximum.at(D, groups, dev)
    stat = D - _per_n(ns, lambda n: ks_critical_value(n, alpha))
    stat[ns == 0] = 0.0
    return BatchResult(KS, stat > 0, stat, [None] * batch.size, ns)


def laplace_batch(batch, alpha):
    _check_alpha(alpha)
    ns = batch.counts
    sums = np.bincount(batch.groups, weights=batch.points, minlength=batch.size)
    stat = sums - _per_n(ns, lambda n: irwin_hall_quantile(n, 1 - alpha))
    stat[ns == 0] = 0.0
    return BatchResult(LAPLACE, stat > 0, stat, [None] * batch.size, ns)


def z_batch(batch, alpha):
    _check_alpha(alpha)
    ns = batch.counts
    with np.errstate(divide="ignore"):
        logs = np.log(batch.points)  # a point at 0 gives -inf: accept
    sums = np.bincount(batch.groups, weights=logs, minlength=batch.size)
    stat = 2 * sums + _per_n(ns, lambda n: chi2_quantile(alpha, 2 * n))
    stat[ns == 0] = 0.0
    return BatchResult(Z, stat > 0, stat, [None] * batch.size, ns)


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")


def _single(pattern):
    return PatternBatch.from_patterns([pattern])


def test_model_selection(pattern, table, alpha=None):
    return model_selection_batch(_single(pattern), table, alpha).verdict(0)


def test_thresholding(pattern, table, alpha=None):
    return thresholding_batch(_single(pattern), table, alpha).verdict(0)


def test_combined(pattern, table_ms, table_th, alpha=None):
    return combined_batch(_single(pattern), table_ms, table_th, alpha).verdict(0)


def test_ks(pattern, alpha):
    return ks_batch(_single(pattern), alpha).verdict(0)


def test_laplace(pattern, alpha):
    return laplace_batch(_single(pattern), alpha).verdict(0)


def test_z(pattern, alpha):
    return z_batch(_single(pattern), alpha).verdict(0)


for _fn in (test_model_selection, test_thresholding, test_combined, test_ks, test_laplace, test_z):
    _fn.__test__ = False
del _fn


def run_batch(procedure, batch, alpha, tables):
    """Dispatch by procedure name. ``tables`` maps procedure name to table(s).

    For the combined test, ``tables[COMBINED]`` is a pair of tables at alpha/2.
    """
    if procedure == KS:
        return ks_batch(batch, alpha)
    if procedure == LAPLACE:
        return laplace_batch(batch, alpha)
    if procedure == Z:
        return z_batch(batch, alpha)
    if procedure == MODEL_SELECTION:
        return model_selection_batch(batch, tables[MODEL_SELECTION], alpha)
    if procedure == THRESHOLDING:
        return thresholding_batch(batch, tables[THRESHOLDING], alpha)
    if procedure == COMBINED:
        ms, th = tables[COMBINED]
        return combined_batch(batch, ms, th, alpha)
    raise ValueError(f"unknown procedure {procedure!r}")
