import math

import numpy as np
import numpy.testing as npt
import pytest

from lagrangian.barrier_ode import build_barrier_pair
from lagrangian.dirichlet_fd import (
    DIRECTIONS,
    GridSolution,
    barrier_midpoint,
    build_grid,
    discrete_hessian,
    discrete_hessians,
    entire_limit_study,
    far_field_fit,
    newton_solve,
    oracle_max_error,
    radial_reduction_solve,
    residual_certificate,
    sandwich_check,
    symmetry_defect,
)
from lagrangian.envelopes_implicit import build_envelopes, canonical_phase_field
from lagrangian.errors import ConfigurationError, ConvergenceError, InputError, PreconditionError
from lagrangian.phase_core import PhaseParams
from utils.file_handler import read_grid_dump

H = 0.125


@pytest.fixture(scope="module")
def radial_case():
    """A = I, two-sided canonical phase with beta = 4, c = 0.1, solved on the unit ball."""
    params = PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)
    g = canonical_phase_field(params, 0.1, "two_sided")
    grid = build_grid(params, 0.5, H)
    return params, g, newton_solve(grid, g)


def test_direction_table():
    assert DIRECTIONS.shape == (9, 3)
    npt.assert_array_equal(DIRECTIONS[:3], np.eye(3, dtype=int))
    npt.assert_array_equal(DIRECTIONS[3], [1, 1, 0])
    npt.assert_array_equal(DIRECTIONS[4], [1, -1, 0])


def test_ball_node_count(iso_params):
    grid = build_grid(iso_params, 0.5, H)
    volume = 4.0 / 3.0 * math.pi / H ** 3
    assert abs(grid.size - volume) <= 0.1 * volume
    assert np.all(iso_params.quadratic_form(grid.points) < 0.5)
    assert grid.node_at((0, 0, 0)) >= 0
    assert grid.node_at((9, 0, 0)) == -1


def test_clip_points_lie_on_the_boundary():
    params = PhaseParams.diagonal((1.0, 2.0, 3.0), 4.0)
    grid = build_grid(params, 1.0, 0.1)
    clips = grid.clip_points()
    assert clips.shape[0] == np.count_nonzero(grid.neighbors < 0)
    npt.assert_allclose(params.quadratic_form(clips), 1.0, rtol=0, atol=1e-12)
    assert np.all((grid.theta > 0) & (grid.theta <= 1.0))


def test_coarse_grid_rejected(iso_params):
    with pytest.raises(ConfigurationError):
        build_grid(iso_params, 0.5, 0.6)
    with pytest.raises(ConfigurationError):
        build_grid(iso_params, -1.0, 0.1)
    with pytest.raises(ConfigurationError):
        build_grid(PhaseParams.diagonal((1.0, 1.0), 4.0), 0.5, 0.1)


def test_quadratic_exactness_with_clipped_arms():
    params = PhaseParams.diagonal((1.0, 2.0, 3.0), 4.0)
    grid = build_grid(params, 1.0, 0.1)
    hess = discrete_hessians(params.quadratic_form(grid.points), grid)
    npt.assert_allclose(hess, np.broadcast_to(params.A.entries, hess.shape), atol=1e-7)


def test_general_quadratic_on_unclipped_stencils(iso_params):
    grid = build_grid(iso_params, 0.5, H)
    B = np.array([[2.0, 0.3, -0.4], [0.3, 1.0, 0.7], [-0.4, 0.7, 3.0]])
    u = 0.5 * np.einsum("bi,ij,bj->b", grid.points, B, grid.points)
    hess = discrete_hessians(u, grid)
    interior = np.all(grid.neighbors >= 0, axis=(1, 2))
    assert np.count_nonzero(interior) > 100
    npt.assert_allclose(hess[interior], np.broadcast_to(B, hess[interior].shape), atol=1e-10)


def test_mixed_product(iso_params):
    grid = build_grid(iso_params, 0.5, H)
    u = grid.points[:, 0] * grid.points[:, 1]
    hess = discrete_hessian(u, grid, grid.node_at((0, 0, 0))).entries
    expected = np.zeros((3, 3))
    expected[0, 1] = expected[1, 0] = 1.0
    npt.assert_allclose(hess, expected, atol=1e-12)


def test_quartic_hessian_is_second_order():
    h = 0.01
    params = PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)
    grid = build_grid(params, 0.5 * 0.33 ** 2, h)
    u = np.sum(grid.points ** 2, axis=1) ** 2
    hess = discrete_hessian(u, grid, grid.node_at((30, 0, 0))).entries
    expected = np.diag([1.08, 0.36, 0.36])
    npt.assert_allclose(hess, expected, atol=5 * h * h)


def test_hessian_input_shape(iso_params):
    grid = build_grid(iso_params, 0.5, H)
    with pytest.raises(InputError):
        discrete_hessians(np.zeros(3), grid)
    with pytest.raises(InputError):
        discrete_hessian(np.zeros(grid.size), grid, grid.size)


def test_constant_phase_recovers_quadratic(iso_params):
    grid = build_grid(iso_params, 0.5, H)
    sol = newton_solve(grid, iso_params.g_inf)
    assert sol.iterations <= 2
    assert np.max(np.abs(sol.deviation())) <= 1e-10


def test_constant_phase_from_perturbed_start():
    params = PhaseParams.diagonal((1.0, 2.0, 3.0), 4.0)
    grid = build_grid(params, 1.0, 0.1)
    s = params.quadratic_form(grid.points)
    start = s + 0.05 * (1.0 - s)
    sol = newton_solve(grid, params.g_inf, u_init=start, backend="direct")
    assert sol.residual <= 1e-8
    assert np.max(np.abs(sol.deviation())) <= 1e-7


def test_subcritical_phase_rejected(iso_params):
    grid = build_grid(iso_params, 0.5, H)
    with pytest.raises(ConfigurationError):
        newton_solve(grid, math.pi / 2)
    with pytest.raises(ConfigurationError):
        newton_solve(grid, iso_params.g_inf, backend="cholesky")


def test_restart_guess_matches_boundary_data():
    params = PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)
    pair = build_barrier_pair(params, build_envelopes(params, 0.1, "two_sided"))
    grid = build_grid(params, 0.5, H)
    npt.assert_allclose(barrier_midpoint(grid, pair, grid.clip_points()), 0.5, atol=1e-10)
    start = barrier_midpoint(grid, pair)
    assert start.shape == (grid.size,)
    shift = start - 0.5 * (pair[0].value(grid.points) + pair[1].value(grid.points))
    # barriers depend on s only, so the match is a constant shift
    assert np.ptp(shift) <= 1e-10


def test_non_convergence_reports_history(iso_params):
    grid = build_grid(iso_params, 0.5, H)
    g = canonical_phase_field(iso_params, 0.1, "two_sided")
    with pytest.raises(ConvergenceError) as info:
        newton_solve(grid, g, tol=1e-30, max_iter=1)
    assert len(info.value.residual_history) >= 1
    assert info.value.residual_history[0] > 0


def test_newton_residual_and_oracle(radial_case):
    params, g, sol = radial_case
    assert sol.residual <= 1e-8
    assert residual_certificate(sol, g) <= 1e-8
    oracle = radial_reduction_solve(params, g, 0.5)
    assert oracle.radius == pytest.approx(1.0)
    assert oracle.U(oracle.radius) == pytest.approx(0.5, abs=1e-12)
    assert oracle_max_error(sol, oracle) <= 20 * H * H


def test_backends_agree(radial_case):
    params, g, sol = radial_case
    direct = newton_solve(sol.grid, g, backend="direct")
    assert np.max(np.abs(direct.u - sol.u)) <= 1e-7


def test_symmetry_defect(radial_case):
    assert symmetry_defect(radial_case[2]) <= 1e-7


def test_symmetry_needs_diagonal_matrix():
    params = PhaseParams.from_matrix([[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 2.0]], 4.0)
    grid = build_grid(params, 0.5, 0.2)
    sol = GridSolution(grid, params.quadratic_form(grid.points), 0, 0.0)
    with pytest.raises(PreconditionError):
        symmetry_defect(sol)


def test_radial_reduction_constant_phase(iso_params):
    oracle = radial_reduction_solve(iso_params, iso_params.g_inf, 2.0)
    r = np.linspace(0.0, oracle.radius, 50)
    npt.assert_allclose(oracle.U(r), 0.5 * r * r, atol=1e-14)
    with pytest.raises(PreconditionError):
        radial_reduction_solve(PhaseParams.diagonal((1.0, 2.0, 3.0), 4.0), math.pi, 1.0)


def test_solution_exports(radial_case, tmp_path):
    sol = radial_case[2]
    frame = sol.to_frame()
    assert list(frame.columns) == ["x", "y", "z", "u"]
    assert len(frame) == sol.grid.size
    assert sol.value_at((0.0, 0.0, 0.0)) == sol.u[sol.grid.node_at((0, 0, 0))]

    values, header = read_grid_dump(sol.dump(str(tmp_path / "grid.bin")))
    assert header["h"] == H
    assert header["s_level"] == 0.5
    assert values.shape == sol.grid.lookup.shape
    assert np.count_nonzero(~np.isnan(values)) == sol.grid.size


def test_sandwich_for_flat_phase(iso_params, flat_envelope):
    sol = newton_solve(build_grid(iso_params, 0.5, H), iso_params.g_inf)
    report = sandwich_check(sol, *build_barrier_pair(iso_params, flat_envelope))
    assert report.passed
    assert report.beta_minus == 0.0 and report.beta_plus == 0.0


def test_sandwich_rejects_swapped_barriers(iso_params, flat_envelope):
    sol = newton_solve(build_grid(iso_params, 0.5, H), iso_params.g_inf)
    sub, sup = build_barrier_pair(iso_params, flat_envelope)
    with pytest.raises(PreconditionError):
        sandwich_check(sol, sup, sub)


def test_far_field_rate_beta4():
    params = PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)
    report = far_field_fit(params, canonical_phase_field(params, 0.1, "above"))
    assert report["expected_exponent"] == pytest.approx(1.0)
    assert report["fit"]["exponent"] == pytest.approx(1.0, abs=0.15)
    assert report["ok"]


def test_far_field_prefers_log_model_when_beta_equals_n():
    params = PhaseParams.diagonal((1.0, 1.0, 1.0), 3.0)
    report = far_field_fit(params, canonical_phase_field(params, 0.1, "above"))
    assert report["fit"]["log_flag"]
    assert report["fit"]["exponent"] == pytest.approx(1.0, abs=0.15)


def test_far_field_constant_phase(iso_params):
    report = far_field_fit(iso_params, canonical_phase_field(iso_params, 0.0, "above"))
    assert report["c_inf"] == 0.0 and report["ok"]


def test_limit_study_probes():
    params = PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)
    g = canonical_phase_field(params, 0.1, "above")
    report = entire_limit_study(params, g, [0.5, 1.0, 2.0], [0.25], H)
    assert np.array(report["probe_values"]).shape == (3, 1)
    assert len(report["cauchy_differences"]) == 2
    assert report["monotone"]
    assert report["far_field"]["ok"]
    assert all(run["residual"] <= 1e-8 for run in report["runs"])


def test_limit_study_configuration_errors(iso_params):
    g = canonical_phase_field(iso_params, 0.1, "above")
    with pytest.raises(ConfigurationError):
        entire_limit_study(iso_params, g, [1.0, 0.5], [0.1], H)
    with pytest.raises(ConfigurationError):
        entire_limit_study(iso_params, g, [0.5, 1.0], [0.9], H)


@pytest.mark.slow
def test_sandwich_and_oracle_on_growing_balls():
    params = PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)
    envelope = build_envelopes(params, 0.1, "two_sided")
    g = canonical_phase_field(params, 0.1, "two_sided")
    sub, sup = build_barrier_pair(params, envelope)
    bounds = []
    for s_level in (2.0, 4.0, 8.0):
        sol = newton_solve(build_grid(params, s_level, H), g, barriers=(sub, sup))
        assert residual_certificate(sol, g) <= 1e-8
        oracle = radial_reduction_solve(params, g, s_level)
        assert oracle_max_error(sol, oracle) <= 20 * H * H
        report = sandwich_check(sol, sub, sup)
        assert report.passed, report.to_dict()
        bounds.append(report.C1)
    assert max(bounds) - min(bounds) <= 1e-12
