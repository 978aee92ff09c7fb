import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funreg.exceptions import ConfigError, DataError, NormDivergenceError
from funreg.orlicz import (
    PsiSpec, conditional_contraction_check, norm_bound_from_tail, orlicz_norm, psi_eval, tail_bound,
)

from oracles import mean_psi_exp1

TOL = 1e-6


@pytest.fixture(scope="module")
def exp_draws():
    return np.random.default_rng(12345).exponential(size=100_000)


def test_psi_eval_formulas():
    assert psi_eval(PsiSpec.exponential(1), 1.0) == pytest.approx(math.e - 1, rel=1e-15)
    assert psi_eval(PsiSpec.power(2), 3.0) == 9.0
    for spec in (PsiSpec.power(1), PsiSpec.power(3.5), PsiSpec.exponential(2)):
        assert psi_eval(spec, 0.0) == 0.0


def test_psi_eval_rejects_negative():
    with pytest.raises(DataError):
        psi_eval(PsiSpec.power(2), -0.1)


def test_psi_spec_validation():
    with pytest.raises(ConfigError):
        PsiSpec.power(0.5)
    with pytest.raises(ConfigError):
        PsiSpec("cubic", 2)
    assert PsiSpec("exponential", 2) == PsiSpec.exponential(2)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 50), st.floats(0, 50))
def test_psi_monotone(a, b):
    spec = PsiSpec.exponential(1.5)
    lo, hi = sorted((a, b))
    assert psi_eval(spec, lo) <= psi_eval(spec, hi)


def test_constant_samples_power():
    est = orlicz_norm(np.full(50, 3.0), PsiSpec.power(2), TOL)
    assert abs(est.value - 3.0) <= 2 * TOL * 3.0
    lo, hi = est.bracket
    assert lo <= est.value <= hi
    assert hi - lo <= TOL * max(1.0, est.value)


def test_constant_samples_exponential():
    # exp((3/C)^p) - 1 = 1  <=>  C = 3 / (log 2)^(1/p)
    est = orlicz_norm(np.full(10, 3.0), PsiSpec.exponential(2), TOL)
    assert est.value == pytest.approx(3.0 / math.sqrt(math.log(2)), rel=2 * TOL)


def test_exp1_draws_have_psi1_norm_two(exp_draws):
    est = orlicz_norm(exp_draws, PsiSpec.exponential(1), TOL)
    assert abs(est.value - 2.0) <= 0.05
    # the returned C solves the plug-in criterion (independent evaluation)
    assert mean_psi_exp1(exp_draws, est.bracket[1]) <= 1.0 <= mean_psi_exp1(exp_draws, est.bracket[0])


def test_half_normal_power2_is_one():
    s = np.abs(np.random.default_rng(7).standard_normal(100_000))
    assert abs(orlicz_norm(s, PsiSpec.power(2)).value - 1.0) <= 0.02


def test_power_norm_is_lp_norm():
    s = np.random.default_rng(8).uniform(0, 3, 1000)
    for p in (1.0, 2.0, 3.5):
        expect = np.mean(s**p) ** (1 / p)
        assert orlicz_norm(s, PsiSpec.power(p)).value == pytest.approx(expect, rel=2 * TOL)


def test_all_zero_is_degenerate():
    est = orlicz_norm(np.zeros(5), PsiSpec.exponential(1))
    assert est.value == 0.0 and est.degenerate


def test_rejects_bad_samples():
    with pytest.raises(DataError):
        orlicz_norm([], PsiSpec.power(2))
    with pytest.raises(DataError):
        orlicz_norm([1.0, -1.0], PsiSpec.power(2))


def test_huge_dynamic_range_stays_finite():
    # one enormous sample: exp family must not overflow during the bracket search
    s = np.r_[np.zeros(999), 1e200]
    est = orlicz_norm(s, PsiSpec.exponential(2))
    assert np.isfinite(est.value) and est.value > 0


def test_divergent_norm_raises():
    with pytest.raises(NormDivergenceError):
        orlicz_norm([np.finfo(float).max] * 3, PsiSpec.exponential(1))


@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
@pytest.mark.parametrize("spec", [PsiSpec.power(2), PsiSpec.exponential(1), PsiSpec.exponential(2)])
def test_scaling(exp_draws, lam, spec):
    s = exp_draws[:5000]
    base = orlicz_norm(s, spec, TOL).value
    scaled = orlicz_norm(lam * s, spec, TOL).value
    assert abs(scaled - lam * base) <= 2 * TOL * max(1.0, lam * base)


@pytest.mark.parametrize("a", [1.0, 2.0, 5.0])
def test_domination_for_scaled_power(exp_draws, a):
    # psi~ = a * x^2 has the closed-form norm sqrt(a * E X^2)
    s = exp_draws[:5000]
    norm_psi = orlicz_norm(s, PsiSpec.power(2), TOL).value
    norm_tilde = math.sqrt(a * np.mean(s**2))
    assert norm_tilde <= a * norm_psi + TOL


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
def test_power_of_sample(exp_draws, p):
    s = exp_draws[:20000]
    lhs = orlicz_norm(s**p, PsiSpec.power(2), TOL).value
    rhs = orlicz_norm(s, PsiSpec.power(2 * p), TOL).value ** p
    assert lhs <= rhs * (1 + 2 * p * TOL) + TOL


def test_norm_hierarchy(exp_draws):
    l2 = orlicz_norm(exp_draws, PsiSpec.power(2)).value
    psi1 = orlicz_norm(exp_draws, PsiSpec.exponential(1)).value
    assert l2 <= 2.0 * psi1


def test_tail_bound_values():
    assert tail_bound(2.0, PsiSpec.exponential(1), 0.0) == 1.0
    assert tail_bound(2.0, PsiSpec.exponential(1), 4.0) == pytest.approx(1 / (math.e**2 - 1), rel=1e-14)
    assert tail_bound(2.0, PsiSpec.exponential(1), 4.0) == pytest.approx(0.15651764274966565, abs=1e-4)
    assert tail_bound(1.0, PsiSpec.power(2), 10.0) == pytest.approx(0.01, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 20), st.floats(0, 20))
def test_tail_bound_decreasing(x, y):
    lo, hi = sorted((x, y))
    spec = PsiSpec.exponential(1)
    assert tail_bound(1.3, spec, hi) <= tail_bound(1.3, spec, lo)


def test_tail_bound_dominates_empirical_tail(exp_draws):
    norm = orlicz_norm(exp_draws, PsiSpec.exponential(1)).value
    n = exp_draws.size
    for x in np.arange(0.5, 8.01, 0.5):
        p = np.mean(exp_draws > x)
        se = math.sqrt(max(p * (1 - p), 1 / n) / n)
        assert p <= tail_bound(norm, PsiSpec.exponential(1), x) + 3 * se


def test_norm_bound_from_tail():
    assert norm_bound_from_tail(1, 1, 1) == 2.0
    assert norm_bound_from_tail(1, 1, 2) == pytest.approx(math.sqrt(2), rel=1e-15)
    with pytest.raises(ConfigError):
        norm_bound_from_tail(0, 1, 1)


def test_norm_bound_tight_for_exponential(exp_draws):
    bound = norm_bound_from_tail(1, 1, 1)
    assert orlicz_norm(exp_draws, PsiSpec.exponential(1)).value == pytest.approx(bound, abs=0.05)


def _signed(draws, seed):
    signs = np.random.default_rng(seed).choice([-1.0, 1.0], size=draws.size)
    return signs * draws


@pytest.mark.parametrize("spec", [PsiSpec.power(2), PsiSpec.exponential(1)])
def test_contraction_sign_partition_exponential(exp_draws, spec):
    x = _signed(exp_draws[:20000], 1)
    nx, nc = conditional_contraction_check(x, np.sign(x), spec)
    assert nc < nx


@pytest.mark.parametrize("spec", [PsiSpec.power(2), PsiSpec.exponential(2)])
def test_contraction_sign_partition_gaussian(spec):
    x = np.random.default_rng(4).standard_normal(20000)
    nx, nc = conditional_contraction_check(x, x > 0, spec)
    assert nc < nx


def test_contraction_single_group_gives_abs_mean():
    x = np.random.default_rng(5).normal(1.0, 1.0, 500)
    nx, nc = conditional_contraction_check(x, np.zeros(500), PsiSpec.power(2))
    assert nc == pytest.approx(abs(x.mean()), rel=2 * TOL)
    assert nc <= nx


def test_contraction_constant_values_exact():
    x = np.full(100, 0.7)
    nx, nc = conditional_contraction_check(x, np.arange(100) % 2, PsiSpec.exponential(1))
    assert nx == nc


def test_contraction_missing_group():
    with pytest.raises(DataError, match="empty group"):
        conditional_contraction_check(np.ones(40), np.zeros(40), PsiSpec.power(2), labels=[0, 1])


def test_contraction_warns_on_small_groups():
    with pytest.warns(UserWarning):
        conditional_contraction_check(np.arange(10.0), np.arange(10) % 2, PsiSpec.power(2))
