import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degenwave import (STRONG, WEAK, ConstantWeight, DomainSpec, SymmetricPower, Tabulated,
                       TwoSidedPower, analyze, check_slope_conditions, classify, compute_mu_kappa,
                       envelope_lower_bounds, evaluate, friedrichs_constants,
                       observability_constant, observability_time)
from degenwave.errors import DomainError, InvalidExponentError, WeightError

DOM = DomainSpec(0.0, 2.0)


def ta_closed_form(p):
    """Both branches of the power-weight critical time on (0, 2), written out by hand."""
    if p < 1.75:
        return (p + 4.0 * math.sqrt(2.0 - p)) / ((2.0 - p) * math.sqrt(2.0 - p))
    return 2.0 * (2.0 + p) / (2.0 - p)


def ta_left_branch(p):
    return (p + 4.0 * math.sqrt(2.0 - p)) / ((2.0 - p) * math.sqrt(2.0 - p))


def ta_right_branch(p):
    return 2.0 * (2.0 + p) / (2.0 - p)


# -- evaluation ---------------------------------------------------------------

def test_eval_symmetric_power_left_side():
    assert SymmetricPower(1.0).eval(0.5) == pytest.approx((0.5, -1.0), abs=1e-15)


def test_eval_two_sided_vanishes_at_one():
    assert TwoSidedPower(0.5, 0.5).eval(1.0)[0] == 0.0


def test_eval_half_power_right_side():
    a, da = SymmetricPower(0.5).eval(1.25)
    assert a == pytest.approx(0.5, abs=1e-15)
    assert da == pytest.approx(1.0, abs=1e-15)


def test_evaluate_rejects_points_outside_domain():
    with pytest.raises(DomainError):
        evaluate(SymmetricPower(1.0), 2.5, DOM)


@pytest.mark.parametrize("p", [0.0, 2.0, 2.5, -1.0])
def test_symmetric_power_rejects_bad_exponent(p):
    with pytest.raises(WeightError):
        SymmetricPower(p)


def test_tabulated_requires_zero_at_one():
    x = np.linspace(0, 2, 11)
    with pytest.raises(WeightError):
        Tabulated(x, np.abs(x - 1) + 0.1)


def test_tabulated_rejects_interior_zero():
    x = np.linspace(0, 2, 11)
    a = np.abs(x - 1) ** 0.5
    a[2] = 0.0
    with pytest.raises(WeightError):
        Tabulated(x, a)


def test_tabulated_reproduces_power_law():
    x = np.linspace(0, 2, 201)
    w = Tabulated.from_function(lambda s: np.abs(s - 1) ** 0.5, x)
    xs = np.array([0.013, 0.5, 0.9993, 1.0004, 1.31, 1.97])
    np.testing.assert_allclose(w.eval(xs)[0], np.abs(xs - 1) ** 0.5, rtol=1e-3)


# -- exponents and classification ----------------------------------------------

@pytest.mark.parametrize("p", [0.25, 0.5, 1.0, 1.5, 1.9])
def test_mu_kappa_symmetric_power(p):
    assert tuple(compute_mu_kappa(SymmetricPower(p), DOM)) == (p, 1.0, p, 1.0)


def test_mu_two_sided_power():
    mk = compute_mu_kappa(TwoSidedPower(0.2, 0.7), DOM)
    assert (mk.mu1, mk.mu2) == pytest.approx((0.4, 1.4), abs=1e-15)


def test_tabulated_mu_close_to_analytic():
    x = np.linspace(0, 2, 2001)
    w = Tabulated.from_function(lambda s: np.abs(s - 1) ** 0.5, x)
    mk = compute_mu_kappa(w, DOM)
    assert abs(mk.mu1 - 0.5) <= 1e-2
    assert abs(mk.mu2 - 0.5) <= 1e-2
    assert analyze(w, DOM).sampling_tolerance >= 0.0


@pytest.mark.parametrize("p, expected", [(0.5, WEAK), (1.5, STRONG), (1.75, STRONG), (1.0, STRONG)])
def test_classify(p, expected):
    assert classify(SymmetricPower(p), DOM) == expected


def test_classify_tabulated_by_regression():
    x = np.linspace(0, 2, 401)
    weak = Tabulated.from_function(lambda s: np.abs(s - 1) ** 0.6, x)
    strong = Tabulated.from_function(lambda s: np.abs(s - 1) ** 1.4, x)
    assert classify(weak, DOM) == WEAK
    assert classify(strong, DOM) == STRONG


def test_constant_weight_has_no_degeneracy_constants():
    with pytest.raises(WeightError):
        compute_mu_kappa(ConstantWeight(1.0), DOM)


# -- Friedrichs constants and critical time ---------------------------------------

@pytest.mark.parametrize("p", [0.25, 0.5, 1.0, 1.5, 1.9])
def test_friedrichs_constants_power(p):
    rep = analyze(SymmetricPower(p), DOM)
    assert rep.Ca2 == pytest.approx(4.0, abs=1e-12)
    assert rep.Da2 == pytest.approx(1.0 / (2.0 - p), abs=1e-12)


def test_poincare_at_p_one():
    assert friedrichs_constants(SymmetricPower(1.0), DOM).poincare == pytest.approx(1.0, abs=1e-15)


def test_da_squared_near_two():
    assert analyze(SymmetricPower(1.9), DOM).Da2 == pytest.approx(10.0, rel=1e-12)


def test_friedrichs_rejects_exponent_two():
    with pytest.raises(InvalidExponentError):
        friedrichs_constants(SymmetricPower(1.0), DOM, mu1=2.0, mu2=1.0)


@pytest.mark.parametrize("p", [1e-3, 0.25, 0.5, 1.0, 1.5, 1.75, 1.8, 1.95])
def test_observability_time_matches_closed_form(p):
    assert observability_time(SymmetricPower(p), DOM) == pytest.approx(ta_closed_form(p), rel=1e-12)


def test_observability_time_at_p_one():
    assert observability_time(SymmetricPower(1.0), DOM) == pytest.approx(5.0, abs=1e-12)


def test_observability_time_branches_agree():
    p = 7.0 / 4.0
    assert ta_left_branch(p) == pytest.approx(30.0, abs=1e-10)
    assert ta_right_branch(p) == pytest.approx(30.0, abs=1e-10)
    assert observability_time(SymmetricPower(p), DOM) == pytest.approx(30.0, abs=1e-10)


def test_observability_time_small_p_limit():
    assert abs(observability_time(SymmetricPower(1e-6), DOM) - 2.0) <= 1e-4


def test_observability_time_continuous_across_branch_point():
    eps = 1e-7
    lo = observability_time(SymmetricPower(1.75 - eps), DOM)
    hi = observability_time(SymmetricPower(1.75 + eps), DOM)
    assert abs(hi - lo) < 1e-4


def test_observability_constant_examples():
    rep = analyze(SymmetricPower(1.0), DOM)
    assert observability_constant(rep, DOM, 6.0) == pytest.approx(1.0, abs=1e-12)
    assert observability_constant(rep, DOM, rep.Ta) == pytest.approx(0.0, abs=1e-12)
    assert observability_constant(rep, DOM, rep.Ta - 0.5) < 0


# -- slope conditions and envelopes ------------------------------------------------

@pytest.mark.parametrize("w", [SymmetricPower(0.5), SymmetricPower(1.5), TwoSidedPower(0.3, 0.8)])
def test_slope_conditions_vacuous_on_full_domain(w):
    assert check_slope_conditions(w, DOM)


def test_slope_conditions_sampled_for_tabulated_weight():
    x = np.linspace(0, 2, 801)
    bump = 0.5 * np.where(np.abs(x - 1) > 0.5, np.sin(np.pi * (np.abs(x - 1) - 0.5)) ** 2, 0.0)
    w = Tabulated(x, np.abs(x - 1) ** 0.5 + bump * (np.abs(x - 1) > 0))
    dom = DomainSpec(0.0, 2.0, x1star=0.5, x2star=1.5)
    first = check_slope_conditions(w, dom)
    assert isinstance(first, bool)
    assert check_slope_conditions(w, dom) == first


def test_envelope_attained_by_power_weight():
    glob, inner = envelope_lower_bounds(SymmetricPower(1.0), DOM, 0.5)
    assert glob == pytest.approx(0.5, abs=1e-15)
    assert inner == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("w", [SymmetricPower(0.7), TwoSidedPower(0.25, 0.6)])
def test_envelope_vanishes_at_singularity(w):
    assert envelope_lower_bounds(w, DOM, 1.0) == (0.0, 0.0)


def test_envelope_below_tabulated_near_power_weight():
    x = np.linspace(0, 2, 1001)
    w = Tabulated(x, np.abs(x - 1) ** 0.8 * (1.0 + 0.1 * np.cos(3 * x)))
    xs = np.random.default_rng(5).uniform(0, 2, 64)
    glob, _ = envelope_lower_bounds(w, DOM, xs)
    assert np.all(w.eval(xs)[0] >= glob - 1e-12)


# -- properties -------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.01, 1.99), x=st.floats(0.0, 2.0))
def test_envelope_lower_bound_property(p, x):
    w = SymmetricPower(p)
    glob, inner = envelope_lower_bounds(w, DOM, x)
    a = w.eval(x)[0]
    assert a >= glob - 1e-12
    assert a >= inner - 1e-12


@settings(max_examples=40, deadline=None)
@given(p1=st.floats(0.01, 0.99), p2=st.floats(0.01, 0.99))
def test_exponents_in_admissible_range(p1, p2):
    mk = compute_mu_kappa(TwoSidedPower(p1, p2), DOM)
    assert 0 < mk.mu1 < 2 and 0 < mk.mu2 < 2


@settings(max_examples=15, deadline=None)
@given(k=st.floats(0.1, 10.0), p=st.sampled_from([0.4, 0.9, 1.3]))
def test_scaling_invariance_of_exponents_and_class(k, p):
    x = np.linspace(0, 2, 401)
    w = Tabulated.from_function(lambda s: np.abs(s - 1) ** p * (1 + 0.2 * s), x)
    ws = Tabulated.from_function(lambda s: k * np.abs(s - 1) ** p * (1 + 0.2 * s), x)
    mk, mks = compute_mu_kappa(w, DOM), compute_mu_kappa(ws, DOM)
    np.testing.assert_allclose(tuple(mks), tuple(mk), rtol=1e-9)
    assert classify(w, DOM) == classify(ws, DOM)


def test_report_serialises():
    d = analyze(SymmetricPower(1.0), DOM).to_dict()
    assert d["class"] == STRONG
    assert d["Ta"] == pytest.approx(5.0)
    assert math.isfinite(d["Ca2"])
