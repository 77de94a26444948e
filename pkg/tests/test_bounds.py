import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdfkit.bounds import (
    CATALOG,
    E98,
    BoundReport,
    ExpDecay,
    Margins,
    PolyDecay,
    Quantity,
    WeibullDecay,
    azuma_finite_n,
    azuma_special_cases,
    azuma_suite,
    baum_katz_bound,
    bounded_slln_bound,
    branching_bounds,
    decay_moment_bound,
    decay_tail_bound,
    freedman_bound,
    freedman_tail,
    gcrp_normalizer,
    gcrp_normalizer_limit,
    kyfan_corollaries,
    kyfan_eta,
    kyfan_weight,
    lesigne_volny_suite,
    m_estimator_bounds,
    poly_tail_optimum,
    pythagoras_rate,
    slln_lp_bound,
    slln_lp_constant,
    weibull_constant,
    weibull_optimized_tail,
)
from mdfkit.sequences import (
    Constant,
    Exponential,
    LogPower,
    Power,
    ShiftedPower,
    tail_sum,
)

ONE = Constant(1.0, 1)

# sum_{n >= 2} 1/(n ln^2(n+1)): direct sum of 10^7 terms plus integral brackets
LOGWEIGHT_FROM_2 = (1.3063665504095863, 1.3063665569987148)
# sum_{n >= 1} (3 + 2 sqrt(n)) exp(-sqrt(n)/2), the Gamma-form Weibull constant for
# c = 1, b = 1/e, alpha = 1/2, p = 1/2 (4*10^6 terms, remainder below 1e-400)
WEIBULL_GAMMA_FORM = 86.44339582448995


# --- reports ----------------------------------------------------------------


def test_invalid_report_carries_infinite_value():
    rep = BoundReport("x", Quantity.TAIL, {}, 0.3, valid=False, reason="bad")
    assert rep.value == math.inf
    assert rep.reason == "bad"


def test_display_clips_probabilities_but_keeps_raw_value():
    rep = BoundReport("x", Quantity.TAIL, {}, 3.5)
    assert rep.value == 3.5
    assert rep.display_value == 1.0
    assert BoundReport("y", Quantity.MOMENT_SA, {}, 3.5).display_value == 3.5


def test_negative_value_is_rejected():
    with pytest.raises(ValueError):
        BoundReport("x", Quantity.TAIL, {}, -1.0)


def test_record_is_flat():
    rec = decay_moment_bound(PolyDecay(1.0, 5.0), 1.0).record()
    assert set(rec) >= {"bound_id", "quantity", "params", "value", "valid", "reason"}
    assert rec["quantity"] == "moment E[O^(p+1)]"


def test_catalog_ids_are_unique_and_reference_free():
    ids = [e.bound_id for e in CATALOG]
    assert len(ids) == len(set(ids))
    for e in CATALOG:
        text = (e.description + e.domain).lower()
        for word in ("theorem", "lemma", "corollary", "eq.", "example", "paper"):
            assert word not in text


# --- decay families ---------------------------------------------------------


def test_poly_moment_example():
    rep = decay_moment_bound(PolyDecay(1.0, 5.0), 1.0, 1)
    assert rep.valid
    assert rep.quantity is Quantity.MOMENT_POWER
    assert rep.value == pytest.approx(5.0 * float(mp.zeta(3)), rel=1e-12)
    assert rep.value == pytest.approx(6.010284, abs=1e-6)


def test_exp_moment_example():
    rep = decay_moment_bound(ExpDecay(1.0, 0.5), 0.5, 1)
    assert rep.value == pytest.approx(1.0 + 1.0 / (1.0 - 2.0**-0.5), rel=1e-14)
    assert rep.value == pytest.approx(4.414214, abs=1e-6)


def test_poly_moment_outside_range_is_invalid():
    rep = decay_moment_bound(PolyDecay(1.0, 3.0), 1.5, 1)
    assert not rep.valid
    assert rep.value == math.inf
    assert "q-2" in rep.reason


@pytest.mark.parametrize("p", [0.0, 1.0, -0.5])
def test_exp_moment_needs_open_interval(p):
    assert not decay_moment_bound(ExpDecay(1.0, 0.5), p, 1).valid


def test_exp_tail_example():
    rep = decay_tail_bound(ExpDecay(1.0, math.exp(-1.0)), 1, 10)
    assert rep.value == pytest.approx(2 * math.exp(9 / 8) * 21 * math.exp(-10), rel=1e-14)
    assert rep.value == pytest.approx(0.00587, rel=1e-3)


def test_weibull_constant_against_gamma_series_and_double_sum():
    b = math.exp(-1.0)
    k_const = weibull_constant(1.0, b, 0.5, 0.5, 1)
    assert WEIBULL_GAMMA_FORM <= k_const <= WEIBULL_GAMMA_FORM * (1 + 1e-10)
    # the inner integral comparison makes K an upper bound on the double sum
    n = np.arange(1, 400_001, dtype=float)
    x = np.sqrt(n)
    inner = np.cumsum(np.exp(-x)[::-1])[::-1]
    brute = math.fsum(np.exp(x / 2) * inner)
    assert brute <= k_const


def test_weibull_tail_example_chains_with_partial_sum():
    b = math.exp(-1.0)
    rep = decay_tail_bound(WeibullDecay(1.0, b, 0.5), 1, 2, p=0.5)
    k_const = weibull_constant(1.0, b, 0.5, 0.5, 1)
    s2 = b**-0.5 + b ** (-0.5 * math.sqrt(2.0))
    assert rep.value == pytest.approx(k_const / s2, rel=1e-12)
    # never worse than the single-term Markov form b^{p (k-1)^alpha} K
    assert rep.value <= b**0.5 * k_const
    assert rep.details["single_term_form"] == pytest.approx(b**0.5 * k_const)


def test_weibull_moment_reports_exp_moment_detail():
    rep = decay_moment_bound(WeibullDecay(1.0, 0.5, 0.5), 0.3, 3)
    assert rep.quantity is Quantity.MOMENT_SA
    assert rep.details["exp_moment_bound"] == pytest.approx(rep.value + 0.5 ** (-0.3 * 2**0.5))


def test_tail_without_p_needs_optimize():
    assert not decay_tail_bound(PolyDecay(1.0, 5.0), 1, 3).valid


def test_weibull_optimized_tail_needs_k_two():
    assert not decay_tail_bound(WeibullDecay(1.0, 0.5, 0.5), 1, 1, optimize=True).valid


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.1, 10.0),
    st.floats(2.2, 12.0),
    st.integers(1, 40),
    st.integers(2, 10**6),
)
def test_poly_optimized_tail_matches_markov_at_optimizer(c, q, n0, k):
    rep = decay_tail_bound(PolyDecay(c, q), n0, k, optimize=True)
    assert rep.valid
    name, p_star = rep.optimizer
    assert name == "p" and 0.0 <= p_star < q - 2
    plain = decay_tail_bound(PolyDecay(c, q), n0, k, p=p_star)
    assert rep.value <= plain.value * (1 + 1e-12)
    if "closed_form" in rep.details:
        assert poly_tail_optimum(q, n0, k) == pytest.approx(p_star)
        assert rep.details["closed_form"] > 0


def test_poly_optimizer_falls_back_below_its_range():
    # e^{1/(q-2) + psi(1)} > 2 for q = 2.5
    rep = decay_tail_bound(PolyDecay(1.0, 2.5), 1, 2, optimize=True)
    assert poly_tail_optimum(2.5, 1, 2) is None
    assert rep.valid and "search" in rep.details["method"]
    grid = [decay_tail_bound(PolyDecay(1.0, 2.5), 1, 2, p=p).value for p in np.linspace(0.0, 0.49, 50)]
    assert rep.value <= min(grid) * (1 + 1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.2, 0.8), st.integers(2, 400), st.integers(1, 5))
def test_weibull_optimized_tail_dominates_markov_at_p_star(b, alpha, k, n0):
    value, d, big_d = weibull_optimized_tail(1.0, b, alpha, n0, k)
    p_star = 1.0 - (k - 1) ** -alpha
    markov = b ** (p_star * (k - 1) ** alpha) * weibull_constant(1.0, b, p_star, alpha, n0)
    assert markov <= value * (1 + 1e-9)
    assert d > 0 and big_d > 0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(3.0, 8.0), st.floats(0.0, 0.9), st.integers(1, 50))
def test_poly_tail_chains_with_moment(c, q, frac, k):
    p = frac * (q - 2)
    moment = decay_moment_bound(PolyDecay(c, q), p, 1).value
    tail = decay_tail_bound(PolyDecay(c, q), 1, k, p=p).value
    assert tail <= moment / k ** (p + 1) * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 0.8), st.floats(0.1, 0.9), st.floats(0.3, 0.7), st.integers(1, 60))
def test_weibull_tail_chains_with_moment(b, p, alpha, k):
    from mdfkit.sequences import PartialSum, Weibull, partial_sum

    moment = decay_moment_bound(WeibullDecay(1.0, b, alpha), p, 1).value
    tail = decay_tail_bound(WeibullDecay(1.0, b, alpha), 1, k, p=p).value
    s_k = partial_sum(PartialSum(Weibull(b, -p, alpha, 1.0, 1), 1), k)
    assert tail <= moment / s_k * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.1, 5.0), st.integers(1, 10))
def test_exp_tail_nonincreasing_beyond_computable_index(b, c, n0):
    start = int(math.ceil(b / (1.0 - b))) + 1
    vals = [decay_tail_bound(ExpDecay(c, b), n0, k).value for k in range(start, start + 50)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))


# --- Pythagoras -------------------------------------------------------------


def test_pythagoras_example_constant():
    q = 5.0
    rate, const = pythagoras_rate(Power(-(q - 1), 1 / (q - 1)), Power(-0.5), ONE, 1)
    # rate n^{-3}/4 summed against A(m) = m gives zeta(2)/4
    exact = float(mp.zeta(2)) / 4
    assert const.valid
    assert exact <= const.value <= exact + const.details["abs_error_bound"] + 1e-15
    assert rate.value == pytest.approx(0.25)


def test_pythagoras_constant_eps_gives_pi_as_rate():
    rate, _ = pythagoras_rate(Exponential(0.5, 1.0, 1.0, 1), ONE, ONE, 1, n=7)
    assert rate.value == pytest.approx(2.0**-7)


def test_pythagoras_nonconvergent_martingale_diverges():
    _, const = pythagoras_rate(ONE, ONE, ONE, 1)
    assert not const.valid and "diverge" in const.reason


def test_pythagoras_rejects_increasing_pi():
    rate, const = pythagoras_rate(Power(1.0), ONE, ONE, 1)
    assert not rate.valid and not const.valid


# --- Azuma ------------------------------------------------------------------


def test_kyfan_eta_at_unit_residual():
    eta = kyfan_eta(1.0)
    assert eta == pytest.approx(math.sqrt(float(mp.lambertw(1))), abs=1e-14)
    assert eta == pytest.approx(0.753089, abs=1e-6)
    assert abs(eta - math.exp(-eta * eta / 2)) < 1e-10


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e4))
def test_kyfan_eta_fixed_point(r):
    eta = kyfan_eta(r)
    assert abs(eta - math.exp(-eta * eta / (2 * r))) < 1e-10


def test_azuma_huge_tolerance_gives_zero():
    rate, const, _ = azuma_suite(Power(-1.0), Constant(1e9, 1), ONE, 1)
    assert rate.value == 0.0
    assert const.valid and const.value == 0.0


def test_azuma_suite_on_polya_increments():
    c = ShiftedPower(-1.0, 2.0, 2.0)
    rate, const, eta = azuma_suite(c, Constant(0.25, 1), ONE, 1, n=10)
    r10 = 4 * float(mp.zeta(2, 13))
    assert rate.details["r_n"] == pytest.approx(r10, rel=1e-10)
    assert rate.value == pytest.approx(math.exp(-0.0625 / (2 * r10)), rel=1e-9)
    assert const.valid and const.details["certified"]
    assert eta.value == pytest.approx(kyfan_eta(r10), rel=1e-9)


def test_polya_residual_bound_three_over_n():
    # r(n) = 2 zeta(2; n + N) with N = 2
    for n in list(range(2, 200)) + [10**3, 10**4, 10**6]:
        r = tail_sum(ShiftedPower(-2.0, 2.0, 2.0), n).value
        assert n * r <= 3.0


def test_azuma_finite_n_sign_walk():
    rep = azuma_finite_n(ONE, 20.0, 100)
    assert rep.value == pytest.approx(math.exp(-2.0), rel=1e-14)
    assert azuma_finite_n(ONE, 20.0, 100, two_sided=True).value == pytest.approx(2 * math.exp(-2.0))


def test_azuma_divergent_increments_invalidate_suite():
    reports = azuma_suite(Power(-0.5), ONE, ONE, 1)
    assert all(not r.valid for r in reports)


def test_azuma_case_d_at_origin():
    rep = azuma_special_cases(1.0, 1.0, "d", n=0)
    assert rep.value == pytest.approx(0.753089, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(0.1, 1.0), st.integers(0, 10**6))
def test_azuma_case_d_is_kyfan_level(C, q, n):
    rep = azuma_special_cases(C, q, "d", n=n)
    assert rep.value == pytest.approx(kyfan_eta(C / (n + 1) ** q), rel=1e-12)


def test_azuma_case_a_invalid_when_p_reaches_theta():
    assert not azuma_special_cases(1.0, 1.0, "a", theta=1.0, p=1.0).valid


def test_azuma_case_a_moment_and_tail():
    rep = azuma_special_cases(1.0, 1.0, "a", theta=1.0, p=0.5, n0=1)
    assert rep.value == pytest.approx(2 * 1.5 / 2 * float(mp.zeta(1.5)), rel=1e-12)
    tail = azuma_special_cases(1.0, 1.0, "a", theta=1.0, p=0.5, k=10)
    assert tail.value == pytest.approx(rep.value / 10**1.5, rel=1e-12)
    opt = azuma_special_cases(1.0, 1.0, "a", theta=1.0, k=10**4)
    assert opt.optimizer[0] == "p" and opt.value <= azuma_special_cases(1.0, 1.0, "a", theta=1.0, p=0.5, k=10**4).value


def test_azuma_case_c_tail_formula():
    C, eps, k = 2.0, 0.7, 9
    lam = eps * eps / (2 * C)
    rep = azuma_special_cases(C, 1.0, "c", eps=eps, k=k, n0=1)
    assert rep.value == pytest.approx(E98 * (3 * k + 1) * math.exp(-lam * k), rel=1e-14)


def test_azuma_case_c_needs_unit_q():
    assert not azuma_special_cases(1.0, 0.5, "c", eps=1.0, k=3).valid


def test_azuma_case_b_moment_and_tail():
    rep = azuma_special_cases(1.0, 0.5, "b", eps=1.0, p=0.5)
    b = math.exp(-0.5)
    assert rep.value == pytest.approx(2 * weibull_constant(1.0, b, 0.5, 0.5, 1))
    tail = azuma_special_cases(1.0, 0.5, "b", eps=1.0, k=20)
    assert tail.value == pytest.approx(2 * weibull_optimized_tail(1.0, b, 0.5, 1, 20)[0])


def test_azuma_unknown_case():
    assert not azuma_special_cases(1.0, 1.0, "z").valid


# --- strong laws ------------------------------------------------------------


def test_slln_constant_p_two():
    assert slln_lp_constant(2.0) == 256.0


def test_slln_finite_constant_against_zeta():
    rate, const = slln_lp_bound(8.0, ONE, ONE, ONE, 1)
    # rate m^{-3} against A(m) = m gives zeta(2)
    c8 = slln_lp_constant(8.0)
    exact = float(mp.zeta(2))
    k_val = const.details["K_a_eps_p"]
    assert exact * (1 - 1e-14) <= k_val <= exact + const.details["abs_error_bound"] / c8
    assert const.value >= c8 * exact * (1 - 1e-14)
    assert rate.value == pytest.approx(c8)


def test_slln_unit_rate_p_six_diverges():
    # rate m^{-2} against A(m) = m is the harmonic series
    _, const = slln_lp_bound(6.0, ONE, ONE, ONE, 1)
    assert not const.valid


def test_slln_slow_tolerance_diverges():
    _, const = slln_lp_bound(2.0, ONE, Power(-0.25), ONE, 1)
    assert not const.valid


def test_slln_needs_p_at_least_two():
    assert not slln_lp_bound(1.5, ONE, ONE, ONE, 1)[1].valid


def test_bounded_slln_forms():
    lam = 0.5**2 / 2
    assert bounded_slln_bound(1.0, 0.5, n=10).value == pytest.approx(2 * math.exp(-10 * lam))
    assert bounded_slln_bound(1.0, 0.5, k=4).value == pytest.approx(E98 * (4 * 3 + 1) * math.exp(-4 * lam))
    assert bounded_slln_bound(1.0, 0.5, p=0.5).value == pytest.approx(1 + 2 / (1 - math.exp(-lam / 2)))
    assert not bounded_slln_bound(1.0, 0.5, p=1.0).valid


def test_baum_katz_example():
    rep = baum_katz_bound(4.0, 4.0, 0.5, 1.0, 1, 1.0)
    assert rep.value == pytest.approx(3 * float(mp.zeta(1.5)), rel=1e-12)
    assert rep.value == pytest.approx(7.837126, abs=1e-6)
    assert rep.details["eps_exponent"] == 0.0


def test_baum_katz_range():
    assert not baum_katz_bound(3.5, 4.0, 1.0, 1.0).valid
    assert not baum_katz_bound(4.0, 10.0, 0.5, 1.0).valid


def test_baum_katz_nested():
    rep = baum_katz_bound(3.5, 4.0, 1.2, 1.0, nested=True)
    assert rep.valid
    assert rep.value == pytest.approx(float(mp.zeta(1.3)), rel=1e-12)
    assert baum_katz_bound(4.0, 4.0, 1.2, 1.0, nested=True).value == pytest.approx(float(mp.zeta(1.8)), rel=1e-12)


def test_baum_katz_tail():
    m = baum_katz_bound(4.0, 4.0, 0.5, 1.0).value
    assert baum_katz_bound(4.0, 4.0, 0.5, 1.0, k=9).value == pytest.approx(m / 27.0)


# --- exponential strong law -------------------------------------------------


def test_lesigne_volny_fixed_eps_example():
    rep = lesigne_volny_suite(1.0, 0.5, "fixed_eps", eps=1.0, n=8)
    assert rep.value == pytest.approx(math.exp(-0.5), rel=1e-14)


def test_lesigne_volny_as_rate_example():
    rep = lesigne_volny_suite(1.0, 0.5, "as_rate", n0=2, theta=1.0)
    assert rep.valid and rep.details["dominated"]
    lo, hi = LOGWEIGHT_FROM_2
    assert lo <= rep.value
    assert rep.value - rep.details["abs_error_bound"] <= hi


def test_lesigne_volny_weibull_boundary_invalid():
    # p must stay below (1 - delta)/2 lam^{2/3} eps^{2/3} = 1/4
    assert not lesigne_volny_suite(1.0, 0.5, "weibull_mdf", eps=1.0, p=0.25).valid
    assert lesigne_volny_suite(1.0, 0.5, "weibull_mdf", eps=1.0, p=0.2499).valid


def test_lesigne_volny_weibull_moment_matches_decay():
    c = 0.25
    rep = lesigne_volny_suite(1.0, 0.5, "weibull_mdf", eps=1.0, p=0.1)
    assert rep.details["c"] == pytest.approx(c)
    ref = decay_moment_bound(WeibullDecay(1.0, math.exp(-c), 1 / 3), 0.1 / c, 1)
    assert rep.value == pytest.approx(ref.value)


@pytest.mark.parametrize("n", [1, 10, 1000, 10**6])
def test_lesigne_volny_kyfan_fixed_point(n):
    lam, delta = 1.0, 0.5
    rep = lesigne_volny_suite(lam, delta, "ky_fan", n=n)
    eta = rep.value
    rhs = math.exp(-(1 - delta) / 2 * lam ** (2 / 3) * eta ** (2 / 3) * n ** (1 / 3))
    assert abs(eta - rhs) < 1e-12


def test_lesigne_volny_unknown_mode():
    assert not lesigne_volny_suite(1.0, 0.5, "nope").valid


# --- branching --------------------------------------------------------------


def test_subcritical_example():
    rep = branching_bounds("subcritical", m=0.5, v=0.25, K=4, k=3)
    stated = 2 * math.exp(9 / 8) / (0.5 * 0.5 * 4) * (3 * (min(0.25 / 1.0, 1) + 1) + 1) * 0.125
    assert rep.details["stated_form"] == pytest.approx(stated, rel=1e-14)
    assert rep.value >= stated


def test_supercritical_rate_example():
    rep = branching_bounds("supercritical_rate", m=2.0, v=1.0, theta=2.0, k=1)
    assert rep.value == pytest.approx(math.pi**2 / 6, rel=1e-12)


def test_supercritical_tail_uses_decaying_power():
    a = branching_bounds("supercritical_tail", m=2.0, v=1.0, eps=0.5, k=5).value
    b = branching_bounds("supercritical_tail", m=2.0, v=1.0, eps=0.5, k=25).value
    assert b < a


def test_critical_poly_range():
    assert not branching_bounds("critical_poly", r=5.0, v=1.0, eta=0.1, p=1.6, c_inf=1.0).valid
    rep = branching_bounds("critical_poly", r=5.0, v=1.0, eta=0.1, p=0.5, c_inf=1.0)
    q = 5.0 - 1.0 - 0.4
    assert rep.value == pytest.approx(2.0 * q * float(mp.zeta(q - 1.5)), rel=1e-12)


def test_critical_moment_tail_chains():
    m = branching_bounds("critical_moment", v=1.0)
    t = branching_bounds("critical_moment", v=1.0, k=10)
    s = sum(1 / math.log1p(j) ** 2 for j in range(1, 11))
    assert t.value == pytest.approx(m.value / s)


def test_critical_exp_modes():
    rep = branching_bounds("critical_exp", v=1.0, c_inf=1.0, mode="sqrt_log", k=5)
    b = math.exp(-2.0)
    assert rep.value == pytest.approx(E98 * (5 * (4.0 + 1) + 1) * b**5)
    assert not branching_bounds("critical_exp", v=1.0, c_inf=1.0, mode="other").valid


def test_unknown_regime():
    assert not branching_bounds("hypercritical").valid


# --- Freedman ---------------------------------------------------------------


def test_freedman_single_term():
    assert freedman_tail(2.0, 1.0, 0.0) == pytest.approx(math.exp(-2.0), rel=1e-15)


def test_freedman_log_square_example():
    rep = freedman_bound(0.25, 1.0, LogPower(2.0), ONE, 1)
    oracle = 1.99477233129374202475595064122  # mpmath nsum of the same series
    assert rep.valid and rep.details["certified"]
    assert rep.value == pytest.approx(oracle, rel=1e-9)
    assert rep.value >= oracle * (1 - 1e-14)


def test_freedman_conditional_division():
    full = freedman_bound(0.25, 1.0, LogPower(2.0), ONE, 1, qv_prob=0.5)
    assert full.value == pytest.approx(2 * full.details["K"])


def test_freedman_log_example_diverges():
    rep = freedman_bound(1.0, 1.0, LogPower(1.0), ONE, 1)
    assert not rep.valid
    # partial sums grow like sqrt(n)
    def partial(n):
        u = np.log1p(np.arange(1, n + 1, dtype=float))
        return math.fsum(np.exp(-u * u / (2 * (1 + u))))

    assert partial(10**6) / partial(10**4) > 5.0


def test_freedman_zero_probability_invalid():
    assert not freedman_bound(0.25, 1.0, LogPower(2.0), ONE, 1, qv_prob=0.0).valid


# --- Ky Fan corollaries -----------------------------------------------------


def test_kf_to_mdf_example():
    rep = kyfan_corollaries("kf_to_mdf", 2, eps=Exponential(0.5, 1.0, 1.0, 1), theta=1.0)
    lo, hi = LOGWEIGHT_FROM_2
    assert lo <= rep.value
    assert rep.value - rep.details["abs_error_bound"] <= hi


def test_kf_to_mdf_needs_summable_eps():
    assert not kyfan_corollaries("kf_to_mdf", 1, eps=Power(-1.0), theta=1.0).valid


def test_kyfan_weight_definition():
    w = kyfan_weight(Exponential(0.5, 1.0, 1.0, 1), 1.0)
    n = 5
    expected = 1.0 / (n * math.log(n + 1) ** 2 * (2.0**-n / (1 - 0.5)))
    assert w(n) == pytest.approx(expected, rel=1e-12)


def test_mdf_to_kf_balance_holds():
    rep = kyfan_corollaries("mdf_to_kf", 1, eps=Power(-1.0), a=Power(1.0), n=4)
    assert rep.valid and rep.value == pytest.approx(0.25)


def test_mdf_to_kf_balance_fails_at_first_index():
    rep = kyfan_corollaries("mdf_to_kf", 1, eps=Exponential(0.5, 1.0, 1.0, 1), a=ONE)
    assert not rep.valid
    assert rep.details["first_violation"] == 1


def test_mdf_to_kf_checks_tradeoff_constant():
    rep = kyfan_corollaries("mdf_to_kf", 1, eps=Power(-1.0), a=Power(1.0), rate=Power(-1.5))
    assert not rep.valid
    ok = kyfan_corollaries("mdf_to_kf", 1, eps=Power(-1.0), a=Power(1.0), rate=Power(-4.0))
    # A(m) = m(m+1)/2 against m^{-4} sums to (zeta(2) + zeta(3))/2
    exact = float(mp.zeta(2) + mp.zeta(3)) / 2
    assert ok.valid
    assert exact * (1 - 1e-14) <= ok.details["K"] <= exact * (1 + 1e-5)


# --- M-estimators -----------------------------------------------------------


@settings(max_examples=80, deadline=None)
@given(st.floats(6.5, 40.0), st.floats(0.51, 1.0), st.floats(0.0, 0.99), st.floats(0.1, 5.0), st.integers(1, 20))
def test_lp_bounded_equals_baum_katz(p, frac, pt_frac, c_est, n0):
    alpha = max(frac * p, 3.0 + 1e-3)
    if not (p / 2 < alpha <= p):
        return
    p_tilde = pt_frac * (alpha - 3.0)
    m = m_estimator_bounds("lp_bounded", p=p, ell=1, alpha=alpha, p_tilde=p_tilde, eta=1.0, C_est=c_est, n0=n0)
    b = baum_katz_bound(alpha, p, p_tilde, 1.0, n0, c_est)
    assert m.valid == b.valid
    assert m.value == b.value


def test_lp_bounded_range():
    assert not m_estimator_bounds("lp_bounded", p=6, ell=1, alpha=5, p_tilde=0.5).valid


def test_exp_moments_reduces_to_lesigne_volny():
    margins = Margins(1.0, 1.0, 1.0)
    for k in (10, 100, 1000):
        m = m_estimator_bounds("exp_moments", gamma=1.0, alpha=0.0, ell=1, margins=margins, k=k)
        lv = lesigne_volny_suite(1.0, 0.5, "weibull_mdf", eps=1.0, k=k)
        assert m.value == pytest.approx(lv.value, rel=1e-14)
        assert m.details["weibull_alpha"] == pytest.approx(1 / 3)


def test_gartner_ellis_exponent():
    margins = Margins(1.0, 0.5, 0.5)
    rep = m_estimator_bounds("gartner_ellis", hessian_norm=2.0, alpha=0.25, margins=margins, k=10)
    assert rep.valid
    assert rep.details["weibull_alpha"] == pytest.approx(0.5)
    assert rep.details["b"] == pytest.approx(math.exp(-0.5 / 2 * 2.0 * 0.25**2))


def test_missing_margins_invalid():
    assert not m_estimator_bounds("exp_moments", gamma=1.0, alpha=0.0, ell=1, k=10).valid


def test_cesaro_quarter_power_example_diverges():
    rep = m_estimator_bounds("cesaro", p=13, ell=2, beta_star=ONE, eps=Power(-0.25), a=ONE, margins=Margins(1.0, 1.0, 1.0))
    assert not rep.valid and "not summable" in rep.reason


def test_cesaro_constant_tolerance_against_zeta():
    margins = Margins(1.0, 0.5, 0.5)
    rep = m_estimator_bounds("cesaro", p=13, ell=2, beta_star=ONE, eps=ONE, a=ONE, margins=margins)
    r = 6.5
    c_r = (8 * (r - 1) * 2 ** (r - 1)) ** r
    c_tilde = c_r * 2 ** (r - 1) * 2 ** (r / 2 - 1) * 2 ** (r - 1) * 2
    exact = 0.25**-r * c_tilde * 2 * float(mp.zeta(1.25))
    assert rep.valid
    assert exact * (1 - 1e-12) <= rep.value
    assert rep.value - rep.details["abs_error_bound"] <= exact * (1 + 1e-12)


def test_as_bounded_finite():
    rep = m_estimator_bounds("as_bounded", c_seq=Power(-1.0), eps=Constant(0.5, 1), a=ONE, ell=1,
                             margins=Margins(1.0, 1.0, 1.0))
    assert rep.valid and rep.value > 0


def test_margins_from_jacobian():
    m = Margins.from_jacobian([[2.0, 0.0], [0.0, 0.5]], safety=0.1)
    assert m.lam == pytest.approx(0.4)
    with pytest.raises(ValueError):
        Margins.from_jacobian([[0.05]], safety=0.1)


# --- Chinese restaurant normalizer ------------------------------------------


def test_gcrp_first_value_is_one():
    assert gcrp_normalizer(0.3, 1.7, 1) == pytest.approx(1.0, abs=1e-14)


def test_gcrp_example_against_product_form():
    # phi_4 = prod_{j=1}^{3} (j + 1/2) / j
    assert gcrp_normalizer(0.5, 0.0, 4) == pytest.approx(1.5 * 2.5 * 3.5 / 6.0, rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.0, 5.0), st.integers(1, 10**5))
def test_gcrp_ratio(alpha, theta_shift, n):
    theta = -alpha + 0.01 + theta_shift
    ratio = gcrp_normalizer(alpha, theta, n + 1) / gcrp_normalizer(alpha, theta, n)
    assert ratio == pytest.approx((n + alpha + theta) / (n + theta), rel=1e-9)


def test_gcrp_growth_rate():
    alpha, theta = 0.5, 0.0
    limit = gcrp_normalizer_limit(alpha, theta)
    assert 0.5 <= limit <= 2.0
    ratios = [gcrp_normalizer(alpha, theta, n) / n**alpha for n in range(1, 10**4)]
    assert all(0.5 <= r <= 2.0 for r in ratios)
    assert ratios[-1] == pytest.approx(limit, rel=1e-4)
