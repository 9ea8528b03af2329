import itertools
import math

import numpy as np
import pytest
from scipy import stats

from poisson_homogeneity import procedures as P
from poisson_homogeneity.calibration import (
    CalibrationConfig, ModelSelection, NEntry, QuantileTable, Thresholding, calibrate,
)
from poisson_homogeneity.errors import TableMismatchError
from poisson_homogeneity.haar import HaarIndex, IndexSet, t_lambda, t_prime
from poisson_homogeneity.intensity import S1, S2, S5, Constant
from poisson_homogeneity.poisson import PatternBatch, PointPattern, simulate_batch


def fixed_table(proc, thresholds, L=100.0, alpha=0.05, ns=range(0, 400)):
    """Table with the same thresholds at every n (no calibration)."""
    cfg = CalibrationConfig(L, alpha, proc, min(ns), max(ns), mc_samples=2, u_grid=(alpha,))
    entry = NEntry(alpha, tuple(thresholds))
    return QuantileTable(cfg, {n: entry for n in ns})


MS = ModelSelection.uniform(range(1, 4))
TH = Thresholding(3)


def random_batch(seed, size=300, L=100.0):
    rng = np.random.default_rng(seed)
    return simulate_batch(S2(2.0), L, size, rng)


def test_model_selection_statistic_is_max_margin():
    thr = (0.02, 0.05, 0.08)
    table = fixed_table(MS, thr)
    batch = random_batch(1)
    res = P.model_selection_batch(batch, table)
    for i in range(batch.size):
        pat = batch.pattern(i)
        margins = [t_prime(J, pat) - q for J, q in zip(MS.models, thr)]
        v = res.verdict(i)
        if pat.n == 0:
            assert not v.reject and v.statistic == 0.0
            continue
        assert v.statistic == pytest.approx(max(margins), rel=1e-12, abs=1e-15)
        assert v.reject == (v.statistic > 0)
        assert v.witness == MS.models[int(np.argmax(margins))]


def test_thresholding_statistic_is_max_margin():
    thr = (0.01, 0.02, 0.03)
    table = fixed_table(TH, thr)
    batch = random_batch(2)
    res = P.thresholding_batch(batch, table)
    for i in range(batch.size):
        pat = batch.pattern(i)
        margins = {lam: t_lambda(lam, pat) - thr[lam.j] for lam in IndexSet.full_levels(3)}
        v = res.verdict(i)
        assert v.statistic == pytest.approx(max(margins.values()), rel=1e-12, abs=1e-15)
        assert v.reject == (v.statistic > 0)
        assert margins[v.witness] == pytest.approx(v.statistic, rel=1e-12, abs=1e-15)


def test_subset_sums_reject_iff_a_single_index_does():
    rng = np.random.default_rng(3)
    for Jbar in (1, 2, 3):
        index = list(IndexSet.full_levels(Jbar))
        for trial in range(200):
            pat = PointPattern(rng.random(int(rng.integers(0, 150))) ** rng.uniform(0.5, 2), 100.0)
            thr = rng.uniform(0, 0.06, Jbar)
            T = {lam: t_lambda(lam, pat) for lam in index}
            any_subset = any(sum(T[l] for l in S) > sum(thr[l.j] for l in S)
                             for r in range(1, len(index) + 1) for S in itertools.combinations(index, r))
            v = P.test_thresholding(pat, fixed_table(Thresholding(Jbar), thr))
            assert any_subset == v.reject == any(T[l] > thr[l.j] for l in index)


def test_empty_pattern_accepted_by_all():
    empty = PointPattern([], 100.0)
    ms, th = fixed_table(MS, (-1, -1, -1)), fixed_table(TH, (-1, -1, -1))
    half_ms = fixed_table(MS, (-1, -1, -1), alpha=0.025)
    half_th = fixed_table(TH, (-1, -1, -1), alpha=0.025)
    verdicts = [P.test_model_selection(empty, ms), P.test_thresholding(empty, th),
                P.test_combined(empty, half_ms, half_th), P.test_ks(empty, 0.05),
                P.test_laplace(empty, 0.05), P.test_z(empty, 0.05)]
    for v in verdicts:
        assert not v.reject and v.n_observed == 0 and v.statistic == 0.0


def test_ks_single_point():
    v = P.test_ks(PointPattern([0.5], 100.0), 0.05)
    assert not v.reject
    assert v.statistic == pytest.approx(0.5 - 0.975, abs=1e-12)


def test_ks_batch_matches_scipy():
    batch = random_batch(4, size=200)
    res = P.ks_batch(batch, 0.05)
    for i in range(batch.size):
        x = batch.pattern(i).points
        if x.size == 0:
            continue
        ks = stats.kstest(x, "uniform")
        assert res.reject[i] == (ks.statistic > stats.kstwo(x.size).isf(0.05))


def test_laplace_rejects_points_near_one():
    pat = PointPattern(1 - np.random.default_rng(5).random(60) * 0.05, 100.0)
    assert P.test_laplace(pat, 0.05).reject
    assert not P.test_laplace(PointPattern(1 - pat.points, 100.0), 0.05).reject


def test_laplace_and_z_statistics():
    pat = PointPattern([0.2, 0.9, 0.95], 10.0)
    lap = P.test_laplace(pat, 0.05)
    assert lap.statistic == pytest.approx(2.05 - stats.irwinhall(3).ppf(0.95), abs=1e-9)
    z = P.test_z(pat, 0.05)
    assert z.statistic == pytest.approx(2 * np.log(pat.points).sum() + stats.chi2.ppf(0.05, 6), rel=1e-9)
    assert z.reject == (z.statistic > 0)


def test_z_point_at_zero_accepts():
    v = P.test_z(PointPattern([0.0, 0.99, 0.999], 10.0), 0.05)
    assert not v.reject and v.statistic == -np.inf


def test_combined_logic():
    pat = PointPattern(np.random.default_rng(6).random(100), 100.0)
    lo, hi = (-1.0,) * 3, (1e6,) * 3
    cases = {(lo, lo): True, (lo, hi): True, (hi, lo): True, (hi, hi): False}
    for (a, b), expected in cases.items():
        v = P.test_combined(pat, fixed_table(MS, a, alpha=0.025), fixed_table(TH, b, alpha=0.025))
        assert v.reject == expected


def test_combined_level_mismatch():
    pat = PointPattern([0.3], 100.0)
    with pytest.raises(TableMismatchError):
        P.test_combined(pat, fixed_table(MS, (0, 0, 0), alpha=0.025), fixed_table(TH, (0, 0, 0), alpha=0.05))
    with pytest.raises(TableMismatchError):
        P.test_combined(pat, fixed_table(MS, (0, 0, 0)), fixed_table(TH, (0, 0, 0)), alpha=0.05)


def test_table_mismatches():
    pat = PointPattern([0.3], 50.0)
    with pytest.raises(TableMismatchError):
        P.test_model_selection(pat, fixed_table(MS, (0, 0, 0)))
    pat = PointPattern([0.3], 100.0)
    with pytest.raises(TableMismatchError):
        P.test_model_selection(pat, fixed_table(TH, (0, 0, 0)))
    with pytest.raises(TableMismatchError):
        P.test_thresholding(pat, fixed_table(TH, (0, 0, 0)), alpha=0.1)


def test_verdict_csv_rows():
    v = P.TestVerdict(P.THRESHOLDING, True, 0.25, HaarIndex(2, 1), 17)
    assert v.csv_row() == "thresholding,17,0.25,(2;1),1"
    assert P.TestVerdict(P.KS, False, -0.1, None, 3).csv_row() == "ks,3,-0.1,,0"


def test_unknown_procedure():
    with pytest.raises(ValueError):
        P.run_batch("nope", random_batch(0, 2), 0.05, {})
    with pytest.raises(ValueError):
        P.test_ks(PointPattern([0.1], 1.0), 1.5)


def test_unseen_n_is_calibrated_on_demand():
    cfg = CalibrationConfig(100.0, 0.05, TH, 100, 100, mc_samples=2_000, master_seed=4)
    table = calibrate(cfg)
    pat = PointPattern(np.random.default_rng(7).random(7), 100.0)
    v = P.test_thresholding(pat, table)
    assert 7 in table._lazy and v.n_observed == 7


@pytest.mark.parametrize("procedure", [P.KS, P.LAPLACE, P.Z])
def test_table_free_levels(procedure):
    R = 20_000
    batch = simulate_batch(Constant(1.0), 100.0, R, np.random.default_rng(8))
    rate = P.run_batch(procedure, batch, 0.05, {}).rejections / R
    assert abs(rate - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / R)


def test_trend_tests_are_one_sided():
    # increasing intensity: Laplace and Z gain power; decreasing: they do not
    up = simulate_batch(S5(1.0, 2.0), 100.0, 2_000, np.random.default_rng(9))
    down = simulate_batch(S1(1.0), 100.0, 2_000, np.random.default_rng(9))
    for proc in (P.LAPLACE, P.Z):
        assert P.run_batch(proc, up, 0.05, {}).rejections / 2_000 > 0.9
        assert P.run_batch(proc, down, 0.05, {}).rejections / 2_000 < 0.05
