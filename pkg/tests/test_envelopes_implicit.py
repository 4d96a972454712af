import math

import mpmath as mp
import numpy as np
import pytest

from lagrangian.envelopes_implicit import (
    H_report,
    PhaseEnvelope,
    audit_envelope,
    build_envelopes,
    canonical_phase_field,
    dH_dw_finite_difference,
    dH_dw_limit,
    dh_dw_finite_difference,
    dh_dw_limit,
    find_root,
    h_report,
    h_zero_clamp,
    j_factor,
    phase_excess,
    solve_H,
    solve_h,
    solve_w_over,
    solve_w_under,
    w_over_report,
    w_under_deviation,
    w_under_report,
)
from lagrangian.errors import ConfigurationError, DomainError, InternalError
from lagrangian.phase_core import PhaseParams, m_of_a

G_ISO = 3.0 * math.pi / 4.0
ONES = (1.0, 1.0, 1.0)


def test_zero_amplitude_gives_constant_envelopes(flat_envelope):
    for s in (0.0, 1.0, 1e3, 1e12):
        assert flat_envelope.upper(s) == pytest.approx(G_ISO, abs=1e-15)
        assert flat_envelope.lower(s) == pytest.approx(G_ISO, abs=1e-15)
    assert flat_envelope.upper_constant and flat_envelope.lower_constant


def test_two_sided_envelope_decreases_to_limit(two_sided_envelope):
    env = two_sided_envelope
    assert env.K == pytest.approx(0.1)
    values = [env.upper(s) for s in (0.0, 1.0, 10.0, 1e6)]
    assert values[0] <= G_ISO + 0.1 + 1e-15
    assert all(b < a for a, b in zip(values, values[1:]))
    lows = [env.lower(s) for s in (0.0, 1.0, 10.0, 1e6)]
    assert all(b > a for a, b in zip(lows, lows[1:]))
    ok, issues = audit_envelope(env)
    assert ok, issues


def test_band_violation_rejected(iso_params):
    with pytest.raises(ConfigurationError):
        build_envelopes(iso_params, 2.5, "two_sided")
    with pytest.raises(ConfigurationError):
        build_envelopes(iso_params, 0.1, "sideways")
    with pytest.raises(ConfigurationError):
        build_envelopes(iso_params, -0.1)


def test_one_sided_envelopes(iso_params):
    above = build_envelopes(iso_params, 0.1, "above")
    below = build_envelopes(iso_params, 0.1, "below")
    assert above.lower_constant and not above.upper_constant
    assert below.upper_constant and not below.lower_constant
    assert below.lower(0.0) == pytest.approx(G_ISO - 0.1)


@pytest.mark.parametrize("a", [(1.0, 1.0, 1.0), (1.0, 2.0, 3.0), (0.5, 1.0, 4.0)])
@pytest.mark.parametrize("sign", ["above", "below", "two_sided"])
def test_canonical_field_stays_inside_envelopes(a, sign):
    params = PhaseParams.diagonal(a, 4.0)
    env = build_envelopes(params, 0.05, sign)
    g = canonical_phase_field(params, 0.05, sign)
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(2000, 3)) * np.geomspace(1e-2, 1e2, 2000)[:, None]
    s = params.quadratic_form(pts)
    values = g(pts)
    assert np.all(values <= env.upper(s) + 1e-15)
    assert np.all(values >= env.lower(s) - 1e-15)
    assert g.is_monotone == (sign != "two_sided")



def test_oscillating_field_changes_sign(iso_params):
    g = canonical_phase_field(iso_params, 0.1, "two_sided")
    assert g.radial_tail(1.0) > 0.0 > g.radial_tail(2.0)
    assert not g.is_monotone

def test_audit_flags_increasing_upper_envelope():
    env = PhaseEnvelope.from_callables(
        G_ISO, 4.0, 3,
        lower=lambda s: G_ISO - 0.1 * (1.0 + s) ** -2.0,
        upper=lambda s: G_ISO + 0.1 * (1.0 - (1.0 + s) ** -2.0),
        K=0.1,
    )
    ok, issues = audit_envelope(env)
    assert not ok
    assert any("nonincreasing" in issue for issue in issues)


def test_find_root_rejects_bad_bracket():
    with pytest.raises(InternalError):
        find_root(lambda x: x - 5.0, lambda x: 1.0, 0.0, 1.0)


def test_phase_excess_matches_direct_difference():
    assert phase_excess(ONES, 0.1) == pytest.approx(3 * math.atan(1.1) - G_ISO, abs=1e-15)
    assert phase_excess(ONES, 0.0) == 0.0


def test_w_under_and_over_at_origin(two_sided_envelope):
    mp.mp.dps = 30
    expected_under = float(mp.tan(mp.pi / 4 + mp.mpf(1) / 30))
    expected_over = float(mp.tan(mp.pi / 4 - mp.mpf(1) / 30))
    assert solve_w_under(two_sided_envelope, ONES, 0.0) == pytest.approx(expected_under, abs=1e-12)
    assert solve_w_over(two_sided_envelope, ONES, 0.0) == pytest.approx(expected_over, abs=1e-12)
    assert expected_under == pytest.approx(1.0690, abs=1e-4)
    assert expected_over == pytest.approx(0.9355, abs=1e-4)
    assert abs(w_under_report(two_sided_envelope, ONES, 0.0).residual) <= 1e-12
    assert abs(w_over_report(two_sided_envelope, ONES, 0.0).residual) <= 1e-12


def test_w_limits(flat_envelope, two_sided_envelope):
    for s in (0.0, 3.0, 1e5):
        assert solve_w_under(flat_envelope, ONES, s) == pytest.approx(1.0, abs=1e-14)
        assert solve_w_over(flat_envelope, ONES, s) == pytest.approx(1.0, abs=1e-14)
    assert solve_w_under(two_sided_envelope, ONES, 1e10) == pytest.approx(1.0, abs=1e-12)
    assert solve_w_over(two_sided_envelope, ONES, 1e10) == pytest.approx(1.0, abs=1e-12)
    assert abs(w_under_deviation(two_sided_envelope, ONES, 1e10)) <= 1e-15


def test_w_rejects_negative_s(two_sided_envelope):
    with pytest.raises(DomainError):
        solve_w_under(two_sided_envelope, ONES, -1.0)


def test_h_examples(flat_envelope):
    assert solve_h(flat_envelope, ONES, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    expected = math.tan(G_ISO - 2.0 * math.atan(1.2))
    report = h_report(flat_envelope, ONES, 0.0, 1.2)
    assert report.value == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.6901408, abs=1e-5)
    assert abs(report.residual) <= 1e-12


@pytest.mark.parametrize("s", [0.0, 1.0, 100.0])
def test_h_at_w_under_equals_a1_w(s):
    params = PhaseParams.diagonal((1.0, 2.0, 3.0), 4.0)
    env = build_envelopes(params, 0.05)
    w = solve_w_under(env, params.a, s)
    assert solve_h(env, params.a, s, w) == pytest.approx(1.0 * w, rel=1e-10)


def test_h_below_w_under_rejected(two_sided_envelope):
    with pytest.raises(DomainError):
        solve_h(two_sided_envelope, ONES, 0.0, 1.0)
    with pytest.raises(DomainError):
        solve_h(two_sided_envelope, ONES, 0.0, -1.0)


def test_h_zero_clamp():
    assert h_zero_clamp(-0.5) == 0.0
    assert h_zero_clamp(0.0) == 0.0
    assert h_zero_clamp(0.3) == 0.3


def test_dh_dw_limit_examples():
    assert dh_dw_limit(ONES) == pytest.approx(-2.0, abs=1e-15)
    assert (dh_dw_limit(ONES) - 1.0) / 2.0 == pytest.approx(-m_of_a(ONES))
    for t in (0.5, 1.0, 3.0):
        assert dh_dw_limit((t, t, t)) == pytest.approx(-2.0 * t, rel=1e-13)


def test_dh_dw_limit_identity_on_random_spectra():
    rng = np.random.default_rng(29)
    for _ in range(100):
        a = np.sort(rng.uniform(0.1, 10.0, size=rng.integers(2, 7)))
        value = dh_dw_limit(a)
        assert (value - a[0]) / (2.0 * a[-1]) == pytest.approx(-m_of_a(a), abs=1e-10)


def test_dh_dw_difference_quotient_matches_limit(two_sided_envelope):
    fd = dh_dw_finite_difference(two_sided_envelope, ONES, s=1e8, step=1e-4)
    assert fd == pytest.approx(dh_dw_limit(ONES), abs=1e-5)


def test_j_factor_examples():
    assert j_factor(ONES, 1.0, 0.25) == pytest.approx((3 + 2 * math.sqrt(2)) * 0.75 - 1, abs=1e-12)
    assert j_factor(ONES, 1.0, 0.25) == pytest.approx(3.37132, abs=1e-5)
    rng = np.random.default_rng(31)
    for _ in range(50):
        a = np.sort(rng.uniform(0.2, 5.0, 3))
        w = rng.uniform(0.1, 5.0)
        assert abs(j_factor(a, w, 0.0)) <= 1e-14
        values = [j_factor(a, w, H) for H in (0.0, 0.1, 1.0, 10.0)]
        assert all(b > a_ for a_, b in zip(values, values[1:]))


def test_j_factor_domain():
    with pytest.raises(DomainError):
        j_factor(ONES, 0.0, 1.0)
    with pytest.raises(DomainError):
        j_factor(ONES, 1.0, -0.1)


def test_H_examples(flat_envelope, two_sided_envelope):
    assert abs(solve_H(flat_envelope, ONES, 0.0, 1.0)) <= 1e-14
    for s in (0.0, 1.0, 1e4):
        w = solve_w_over(two_sided_envelope, ONES, s)
        assert abs(solve_H(two_sided_envelope, ONES, s, w)) <= 1e-12
    report = H_report(flat_envelope, ONES, 0.0, 0.95)
    assert report.value > 0
    assert abs(report.residual) <= 1e-12


def test_H_above_w_over_rejected(flat_envelope):
    with pytest.raises(DomainError):
        solve_H(flat_envelope, ONES, 0.0, 1.05)
    with pytest.raises(DomainError):
        solve_H(flat_envelope, ONES, 0.0, 0.0)


def test_H_increases_with_s(two_sided_envelope):
    values = [solve_H(two_sided_envelope, ONES, s, 0.9) for s in (0.0, 1.0, 10.0, 100.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_dH_dw_difference_quotient_matches_limit(two_sided_envelope):
    fd = dH_dw_finite_difference(two_sided_envelope, ONES, s=1e8, step=1e-4)
    assert dH_dw_limit(ONES) == pytest.approx(-1.5)
    assert fd == pytest.approx(-1.5, abs=1e-4)


def test_sampled_residuals():
    params = PhaseParams.diagonal((0.8, 1.1, 1.5), 4.0)
    env = build_envelopes(params, 0.05)
    rng = np.random.default_rng(37)
    for s in np.geomspace(1e-3, 1e6, 300):
        w_lo = solve_w_under(env, params.a, s)
        w = w_lo * (1.0 + rng.uniform(0.0, 2.0))
        assert abs(h_report(env, params.a, s, w).residual) <= 1e-12
        w_hi = solve_w_over(env, params.a, s)
        w = w_hi * rng.uniform(0.05, 1.0)
        assert abs(H_report(env, params.a, s, w).residual) <= 1e-12
