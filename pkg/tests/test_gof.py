from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from tradeshape.distfit import LogNormalFit, fit_lognormal
from tradeshape.gof import (
    GofResult,
    bootstrap_distribution,
    bootstrap_pvalue,
    cvm_from_uniform,
    cvm_statistic,
    ecdf,
    gof_profile,
    gof_test,
    ks_from_uniform,
    ks_statistic,
    pvalue_from_distribution,
    rejection_counts,
    seed_words,
)

STD = LogNormalFit(mu=0.0, sigma=1.0, n=0, log_likelihood=0.0, mu_se=0.0, sigma_se=0.0)


def sample_with_cdf(u):
    """Volumes whose standard log-normal CDF values are ``u``."""
    return np.exp(special.ndtri(np.asarray(u, dtype=float)))


def brute_ks(u):
    """sup |F_N - F| from left and right limits at every jump, exact."""
    n = len(u)
    best = Fraction(0)
    for x in u:
        below = sum(1 for v in u if v < x)
        upto = sum(1 for v in u if v <= x)
        best = max(best, abs(Fraction(upto, n) - x), abs(Fraction(below, n) - x))
    return best


def brute_cvm(u):
    """N * integral of (F_N(t) - t)^2 dt over [0, 1], piece by piece, exact."""
    n = len(u)
    pts = sorted(u)
    knots = [Fraction(0)] + pts + [Fraction(1)]
    total = Fraction(0)
    for a, b in zip(knots[:-1], knots[1:]):
        c = Fraction(sum(1 for v in pts if v <= a), n)
        total += ((c - a) ** 3 - (c - b) ** 3) / 3
    return n * total


def test_ecdf_examples():
    e = ecdf([3, 1, 2])
    assert e(2) == pytest.approx(2 / 3)
    assert e(0.5) == 0 and e(3) == 1 and e(10) == 1
    assert ecdf([1, 1, 1, 5])(1) == 0.75
    np.testing.assert_allclose(e.plateaus(), [1 / 3, 2 / 3, 1])
    with pytest.raises(ValueError):
        ecdf([])


@pytest.mark.parametrize(
    "u, d, w2",
    [
        ([0.5], 0.5, 1 / 12),
        ([0.25, 0.75], 0.25, 1 / 24),
        ([0.1, 0.9], 0.4, 1 / 24 + 0.0225 + 0.0225),
    ],
)
def test_hand_values(u, d, w2):
    x = sample_with_cdf(u)
    assert ks_statistic(x, STD) == pytest.approx(d, abs=1e-12)
    assert cvm_statistic(x, STD) == pytest.approx(w2, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5, 12, 100])
def test_analytic_minima(n):
    u = (2 * np.arange(1, n + 1) - 1) / (2 * n)
    assert ks_from_uniform(u) == pytest.approx(1 / (2 * n), abs=1e-12)
    assert cvm_from_uniform(u) == pytest.approx(1 / (12 * n), abs=1e-12)


fractions = st.lists(st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(999, 1000), max_denominator=1000), min_size=1, max_size=12)


@settings(max_examples=300, deadline=None)
@given(fractions)
def test_brute_force_oracle(us):
    u = sorted(us)
    uf = np.array([float(v) for v in u])
    assert float(ks_from_uniform(uf)) == pytest.approx(float(brute_ks(u)), abs=1e-12)
    assert float(cvm_from_uniform(uf)) == pytest.approx(float(brute_cvm(u)), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_lower_bounds(us):
    u = np.sort(us)
    n = u.size
    assert ks_from_uniform(u) >= 1 / (2 * n) - 1e-15
    assert cvm_from_uniform(u) >= 1 / (12 * n) - 1e-15


def test_pvalue_counting():
    boot = np.linspace(1, 2, 100)
    assert pvalue_from_distribution(0.5, boot) == 1.0
    assert pvalue_from_distribution(3.0, boot) == pytest.approx(1 / 101)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 3), st.floats(0, 3))
def test_pvalue_monotone(a, b):
    boot = np.random.default_rng(0).exponential(size=200)
    lo, hi = sorted((a, b))
    assert pvalue_from_distribution(hi, boot) <= pvalue_from_distribution(lo, boot)


def test_bootstrap_is_seeded_per_replicate():
    fit = fit_lognormal(np.exp(np.random.default_rng(0).normal(size=50)))
    a = bootstrap_distribution(fit, 50, 120, seed=4)
    b = bootstrap_distribution(fit, 50, 150, seed=4)
    np.testing.assert_array_equal(a["cvm"], b["cvm"][:120])
    c = bootstrap_distribution(fit, 50, 120, seed=5)
    assert not np.array_equal(a["cvm"], c["cvm"])


def test_bootstrap_pvalue_checks(lognormal_sample):
    with pytest.raises(ValueError):
        bootstrap_pvalue(lognormal_sample, "ks", replicates=10)
    with pytest.raises(ValueError):
        bootstrap_pvalue(lognormal_sample, "ad")
    obs, p = bootstrap_pvalue(lognormal_sample, "cvm", replicates=200, seed=1)
    assert 0 < p <= 1 and obs > 0


def test_gof_test_fields(lognormal_sample):
    r = gof_test(lognormal_sample, replicates=200, seed=9)
    assert r.calibration == "bootstrap" and r.bootstrap_replicates == 200
    assert r.seed == [9]
    assert 0 <= r.ks_stat <= 1 and r.cvm_stat > 0
    assert r.reject_ks == (r.ks_pvalue < 0.05)
    naive = gof_test(lognormal_sample, replicates=0)
    assert naive.calibration == "naive" and naive.cvm_pvalue == naive.cvm_pvalue_naive


def test_gof_detects_wrong_law():
    x = np.random.default_rng(8).exponential(size=500)
    assert gof_test(x, replicates=200).reject_cvm


def test_seed_words():
    assert seed_words(3, 7) == [3, 7]
    assert seed_words([1, 2], "ARG") == seed_words([1, 2], "ARG")
    assert seed_words(0, "ARG") != seed_words(0, "BRA")


def _res(cvm, ksp=0.5):
    return GofResult(n=10, ks_stat=0.1, cvm_stat=cvm, ks_pvalue=ksp, cvm_pvalue=0.5,
                     ks_pvalue_naive=0.5, cvm_pvalue_naive=0.5)


def test_profile_exact_parabola():
    ranks = {f"C{i}": i for i in range(1, 8)}
    res = {c: _res(0.3 * (r - 4) ** 2 + 0.1) for c, r in ranks.items()}
    prof = gof_profile(res, ranks)
    np.testing.assert_allclose(prof.cvm_residuals(), 0, atol=1e-12)
    assert prof.cvm_coef[0] == pytest.approx(0.3)
    assert prof.countries == [f"C{i}" for i in range(1, 8)]


def test_profile_constant():
    ranks = {f"C{i}": i for i in range(1, 6)}
    prof = gof_profile({c: _res(0.2) for c in ranks}, ranks)
    assert abs(prof.cvm_coef[0]) < 1e-9


def test_profile_needs_three():
    with pytest.raises(ValueError):
        gof_profile({"A": _res(1), "B": _res(2)}, {"A": 1, "B": 2})


def test_rejection_counts():
    rs = [_res(0.1, ksp=0.01), _res(0.1, ksp=0.5)]
    assert rejection_counts(rs) == {"ks": 1, "cvm": 0, "total": 2}
