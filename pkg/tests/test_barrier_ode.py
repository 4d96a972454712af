import math

import numpy as np
import numpy.testing as npt
import pytest

from lagrangian.barrier_ode import (
    _integrate_log_deviation,
    build_barrier_pair,
    default_t_grid,
    fit_barrier_asymptotics,
    fit_decay_rate,
    fit_power_law,
    integrate_sub_profile,
    integrate_super_profile,
    make_barrier,
    quadratic_barrier,
    sample_points,
    verify_subsolution,
    verify_supersolution,
)
from lagrangian.envelopes_implicit import build_envelopes, solve_w_over, solve_w_under
from lagrangian.errors import DomainError, FitError, IntegrationError, KindError, PreconditionError
from lagrangian.phase_core import PhaseParams

ONES = (1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def beta4():
    params = PhaseParams.diagonal(ONES, 4.0)
    envelope = build_envelopes(params, 0.1, "two_sided")
    sub = integrate_sub_profile(envelope, params.a)
    sup = integrate_super_profile(envelope, params.a)
    return params, envelope, sub, sup


def test_constant_envelope_fixed_point(flat_envelope, iso_params):
    profile = integrate_sub_profile(flat_envelope, iso_params.a, w0=1.0)
    assert profile.constant
    npt.assert_array_equal(profile.w_values, 1.0)
    barrier = make_barrier(profile, iso_params, flat_envelope)
    assert barrier.C == 0.0
    pts = sample_points(3, count=200)
    npt.assert_allclose(barrier.value(pts), iso_params.quadratic_form(pts), rtol=1e-15)
    report = verify_subsolution(barrier, pts)
    assert report.passed
    assert abs(report.worst_margin) <= 1e-12


def test_quadratic_barriers_for_flat_envelope(flat_envelope, iso_params):
    sub, sup = build_barrier_pair(iso_params, flat_envelope)
    assert sub.kind == "sub" and sup.kind == "super"
    assert verify_subsolution(sub).passed
    report = verify_supersolution(sup)
    assert report.passed
    assert abs(report.worst_margin) <= 1e-12


def test_start_values_rejected(two_sided_envelope, flat_envelope, iso_params):
    w_under0 = solve_w_under(two_sided_envelope, iso_params.a, 0.0)
    with pytest.raises(DomainError):
        integrate_sub_profile(two_sided_envelope, iso_params.a, w0=w_under0)
    with pytest.raises(DomainError):
        integrate_super_profile(flat_envelope, iso_params.a, w0=1.0)
    with pytest.raises(DomainError):
        integrate_super_profile(two_sided_envelope, iso_params.a, w0=0.0)


def test_start_values_at_implicit_bounds(two_sided_envelope, flat_envelope, iso_params):
    with pytest.raises(DomainError):
        integrate_super_profile(two_sided_envelope, iso_params.a, w0=solve_w_over(two_sided_envelope, iso_params.a, 0.0))
    with pytest.raises(DomainError):
        integrate_sub_profile(two_sided_envelope, iso_params.a, w0=solve_w_under(two_sided_envelope, iso_params.a, 0.0))
    flat = integrate_sub_profile(flat_envelope, iso_params.a, w0=solve_w_under(flat_envelope, iso_params.a, 0.0))
    assert flat.constant


def test_super_slope_above_w_over_is_an_error(beta4):
    _, envelope, _, sup = beta4
    phi_over0 = solve_w_over(envelope, ONES, 0.0) - 1.0
    with pytest.raises(DomainError):
        sup.slope_fn(0.0, phi_over0 + 0.01)


def test_domain_error_during_integration_keeps_last_state():
    def slope(s, phi):
        if s > 1.0:
            raise DomainError("outside")
        return -phi / (s + 1.0)

    with pytest.raises(IntegrationError) as info:
        _integrate_log_deviation("super", slope, 0.0, -0.5, -1.0, default_t_grid(), 1e-8, 1e-10)
    assert info.value.last_t is not None
    assert 0.0 <= math.expm1(info.value.last_t) <= 1.0
    assert -0.5 <= info.value.last_state < 0.0


def test_barrier_preconditions(flat_envelope):
    profile = integrate_sub_profile(flat_envelope, ONES, w0=1.0)
    with pytest.raises(PreconditionError):
        make_barrier(profile, PhaseParams.diagonal(ONES, 2.0), flat_envelope)
    with pytest.raises(PreconditionError):
        make_barrier(profile, PhaseParams.diagonal((1.0, 2.0, 3.0), 4.0), flat_envelope)


def test_verify_rejects_wrong_kind(flat_envelope, iso_params):
    sup = quadratic_barrier(iso_params, flat_envelope, "super")
    sub = quadratic_barrier(iso_params, flat_envelope, "sub")
    with pytest.raises(KindError):
        verify_subsolution(sup)
    with pytest.raises(KindError):
        verify_supersolution(sub)


def test_quadratic_barrier_needs_constant_side(two_sided_envelope, iso_params):
    with pytest.raises(PreconditionError):
        quadratic_barrier(iso_params, two_sided_envelope, "sub")


def test_fit_power_law_recovers_exponent():
    x = np.geomspace(1.0, 1e6, 400)
    fit = fit_power_law(x, 3.0 * x ** -1.5, (10.0, 1e5))
    assert fit.exponent == pytest.approx(1.5, abs=1e-10)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-8)
    assert fit.accepted and not fit.log_flag

    log_fit = fit_power_law(x, x ** -2.0 * np.log(x), (10.0, 1e5), try_log=True)
    assert log_fit.log_flag
    assert log_fit.exponent == pytest.approx(2.0, abs=1e-8)


def test_fit_power_law_underpopulated_window():
    x = np.geomspace(1.0, 10.0, 50)
    with pytest.raises(FitError):
        fit_power_law(x, x ** -2.0, (1e3, 1e4))


def test_sample_points_are_deterministic():
    a = sample_points(3, count=100, seed=5)
    b = sample_points(3, count=100, seed=5)
    npt.assert_array_equal(a, b)
    assert a.shape == (100 + 3 * 6 * 2, 3)
    radii = np.linalg.norm(a, axis=1)
    assert np.all(radii > 0) and np.all(radii <= 1e3 * (1 + 1e-12))


def test_default_t_grid():
    t = default_t_grid()
    assert t[0] == 0.0
    assert math.expm1(t[-1]) == pytest.approx(1e10, rel=1e-12)
    assert t.size == 4000


def test_profiles_are_monotone(beta4):
    _, envelope, sub, sup = beta4
    assert sub.w0 == pytest.approx(1.05 * solve_w_under(envelope, ONES, 0.0))
    assert sup.w0 == pytest.approx(0.95 * solve_w_over(envelope, ONES, 0.0))
    assert np.all(np.diff(sub.w_values) <= 1e-15)
    assert np.all(np.diff(sup.w_values) >= -1e-15)
    assert np.all(sub.w_values > 1.0)
    assert np.all(sup.w_values < 1.0)
    assert sub.terminal_gap() < 1e-6 and sup.terminal_gap() < 1e-6


def test_profiles_respect_implicit_bounds(beta4):
    _, envelope, sub, sup = beta4
    for s in (0.0, 1.0, 1e2, 1e5):
        assert sub.w(s) >= solve_w_under(envelope, ONES, s)
        assert sup.w(s) <= solve_w_over(envelope, ONES, s)


def test_profile_frame_columns(beta4):
    frame = beta4[2].to_frame()
    assert list(frame.columns) == ["s", "W", "U"]
    assert len(frame) == 4000


def test_decay_rates_beta4(beta4):
    params, _, sub, sup = beta4
    for profile in (sub, sup):
        fit = fit_decay_rate(profile, params.beta, params.m_of_a)
        assert fit.exponent == pytest.approx(1.5, abs=0.05)
        assert fit.accepted


def test_barrier_constants_and_verification(beta4):
    params, envelope, sub, sup = beta4
    lower = make_barrier(sub, params, envelope)
    upper = make_barrier(sup, params, envelope)
    assert lower.C < 0
    assert upper.C > 0
    pts = sample_points(3, count=1000)
    sub_report = verify_subsolution(lower, pts)
    sup_report = verify_supersolution(upper, pts)
    assert sub_report.passed, sub_report.issues
    assert sub_report.worst_margin >= -1e-8
    assert sup_report.passed, sup_report.issues
    assert sup_report.spectral_bound_worst >= -1e-8


def test_barrier_approaches_quadratic(beta4):
    params, envelope, sub, _ = beta4
    barrier = make_barrier(sub, params, envelope)
    far = np.array([[1e4, 0.0, 0.0], [0.0, 1e5, 0.0]])
    assert np.all(np.abs(barrier.deviation(far)) < 1e-3)
    fit = fit_barrier_asymptotics(barrier)
    assert fit.exponent == pytest.approx(1.0, abs=0.1)


def test_gradient_vanishes_at_origin(beta4):
    params, envelope, sub, _ = beta4
    barrier = make_barrier(sub, params, envelope)
    norms = [np.linalg.norm(barrier.gradient(np.array([r, r, 0.0]))) for r in (1e-2, 1e-4, 1e-6)]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-5


@pytest.mark.slow
@pytest.mark.parametrize(
    "beta, expected, log_flag",
    [(4.0, 1.5, False), (2.5, 1.25, False), (3.0, 1.5, True)],
)
def test_decay_rate_sweep(beta, expected, log_flag):
    params = PhaseParams.diagonal(ONES, beta)
    envelope = build_envelopes(params, 0.1, "two_sided")
    for integrate in (integrate_sub_profile, integrate_super_profile):
        fit = fit_decay_rate(integrate(envelope, params.a), beta, params.m_of_a)
        assert fit.exponent == pytest.approx(expected, abs=0.05)
        assert fit.log_flag == log_flag
