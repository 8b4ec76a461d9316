"""Pair-averaging blocking analysis for correlated series."""

import numpy as np
import pytest

from qsci_afqmc.afqmc import MIN_BLOCKING_SAMPLES, blocking_analysis

IID_REL_TOL = 0.25
AR1_REL_TOL = 0.35


def test_mean_is_arithmetic_mean():
    x = np.array([1.0, 2.0, 4.0, 5.0])
    res = blocking_analysis(x)
    assert res.mean == x.mean()


def test_iid_series_recovers_naive_error():
    rng = np.random.default_rng(42)
    x = rng.standard_normal(4096)
    res = blocking_analysis(x)
    true_error = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(res.error - true_error) < IID_REL_TOL * true_error
    assert res.converged
    assert res.plateau_level <= 2


def test_correlated_series_inflates_error():
    # AR(1) with phi = 0.9: integrated autocorrelation time (1+phi)/(1-phi) = 19,
    # so the true error of the mean is sqrt(19) ~ 4.4x the naive estimate.
    rng = np.random.default_rng(7)
    phi, n = 0.9, 2 ** 14
    eps = rng.standard_normal(n + 500)
    x = np.empty(n + 500)
    x[0] = eps[0]
    for i in range(1, n + 500):
        x[i] = phi * x[i - 1] + eps[i]
    x = x[500:]
    res = blocking_analysis(x)
    sigma_x2 = 1.0 / (1.0 - phi ** 2)
    tau_int = (1.0 + phi) / (1.0 - phi)
    true_error = np.sqrt(sigma_x2 * tau_int / n)
    naive = x.std(ddof=1) / np.sqrt(n)
    assert res.error > 2.0 * naive
    assert abs(res.error - true_error) < AR1_REL_TOL * true_error
    assert res.plateau_level >= 3


def test_constant_series():
    res = blocking_analysis(np.full(64, 1.25))
    assert res.mean == 1.25
    assert res.error == 0.0
    assert res.converged


def test_short_series_marked_unconverged():
    rng = np.random.default_rng(1)
    res = blocking_analysis(rng.standard_normal(MIN_BLOCKING_SAMPLES // 4))
    assert not res.converged
    assert res.error > 0.0


def test_levels_start_at_full_length():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(100)
    res = blocking_analysis(x)
    assert res.levels[0][0] == 100
    # each level halves the sample count (odd sizes drop the last point)
    sizes = [lv[0] for lv in res.levels]
    for a, b in zip(sizes, sizes[1:]):
        assert b == (a - a % 2) // 2


@pytest.mark.parametrize("bad", [
    np.zeros((3, 3)),
    np.array([1.0]),
    np.array([]),
])
def test_rejects_degenerate_input(bad):
    with pytest.raises(ValueError, match="1-d series"):
        blocking_analysis(bad)
