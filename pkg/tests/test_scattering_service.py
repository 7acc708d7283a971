from dataclasses import replace

import numpy as np
import pytest

from exceptions import CoverageGap, InadmissiblePair, InvalidAlpha, InvalidParameter, NotConverged
from schemas import CutoffSpec, MonomialTerm, NonlinearitySpec, ProjectionParams
from services.dilation_service import dilation_service
from services.dynamics_service import dynamics_service
from services.radial_service import radial_service
from services.scattering_service import default_delta, scattering_service
from utils.numeric_utils import trapezoid_weights
from conftest import free_config


@pytest.fixture
def box_domain():
    scattering_service.configure("box")
    yield scattering_service


def test_default_delta():
    assert default_delta(2.5) == pytest.approx(0.0125)
    assert default_delta(4.0) == pytest.approx(0.0125)
    assert default_delta(2.2) == pytest.approx(0.5 * (0.11 - 0.1))
    with pytest.raises(InvalidParameter):
        default_delta(2.0)


def test_configure_rejects_unknown_domain():
    with pytest.raises(InvalidParameter):
        scattering_service.configure("sphere")


def test_alpha_and_admissible_pairs():
    scattering_service.check_alpha(0.3, 5)
    with pytest.raises(InvalidAlpha):
        scattering_service.check_alpha(0.7, 5)
    with pytest.raises(InvalidAlpha):
        scattering_service.check_alpha(0.0, 5)
    scattering_service.check_admissible(2.0, 10.0 / 3.0, 5)
    scattering_service.check_admissible(np.inf, 2.0, 5)
    with pytest.raises(InadmissiblePair):
        scattering_service.check_admissible(2.0, 3.0, 5)
    with pytest.raises(InadmissiblePair):
        scattering_service.check_admissible(1.5, 10.0, 5)


def test_cauchy_acceptance():
    shrinking = [(float(s), 1e-3 * 0.5 ** s) for s in range(8)]
    assert scattering_service.cauchy_accepted(shrinking, reference=1.0)
    growing = [(float(s), 1e-6 * 2.0 ** s) for s in range(8)]
    assert not scattering_service.cauchy_accepted(growing, reference=1.0)
    assert scattering_service.cauchy_accepted([(1.0, 1e-8)], reference=1.0)
    assert not scattering_service.cauchy_accepted([], reference=1.0)


def test_state_at_coverage(free_run, free_reversed):
    _, traj = free_run
    state, t_k = scattering_service.state_at(traj, 1.0)
    assert abs(t_k - 1.0) <= traj.dt * 4
    with pytest.raises(CoverageGap):
        scattering_service.state_at(traj, -0.5)
    with pytest.raises(CoverageGap):
        scattering_service.state_at(traj, traj.t_end + 1.0)
    back, t_back = scattering_service.state_at(traj, -0.5, free_reversed)
    assert t_back < 0
    expected = radial_service.free_propagate(traj.initial, t_back)
    np.testing.assert_allclose(back.values, expected.values, atol=1e-10)


def test_default_s_grid(free_run):
    _, traj = free_run
    s_grid = scattering_service.default_s_grid(traj, 0.0)
    assert s_grid[-1] == pytest.approx(0.5 * traj.t_end)
    assert np.all(np.diff(s_grid) > 0)
    with pytest.raises(CoverageGap):
        scattering_service.default_s_grid(traj, traj.t_end)


def test_compute_psi_D(free_run):
    _, traj = free_run
    assert radial_service.l2_norm(scattering_service.compute_psi_D(traj, 0.0)) == 0.0
    assert radial_service.l2_norm(scattering_service.compute_psi_D(traj, 1.0)) <= 1e-10


def test_free_run_has_no_localized_part(box_domain, free_run, params):
    _, traj = free_run
    result = box_domain.extract_free_pplus(traj, 0.0, params)
    reference = radial_service.l2_norm(traj.initial)
    assert result.route == "pplus_filtered"
    assert result.accepted
    assert not result.details["incoming_available"]
    assert radial_service.l2_norm(result.psi_free - traj.initial) <= 1e-6 * reference

    psi_loc, record = box_domain.compute_psi_loc(traj, result, traj.t_end, params)
    assert record["l2"] <= 1e-6 * reference
    assert set(record) == {"t", "l2", "wdelta", "a1", "a2"}
    assert result.psi_loc_series[-1] is record


def test_pplus_uses_backward_run(box_domain, free_run, free_reversed, params):
    _, traj = free_run
    result = box_domain.extract_free_pplus(traj, 0.0, params, reversed_traj=free_reversed)
    assert result.details["incoming_available"]
    reference = radial_service.l2_norm(traj.initial)
    assert radial_service.l2_norm(result.psi_free - traj.initial) <= 1e-6 * reference


def test_pplus_rejects_short_runs(free_run, params):
    _, traj = free_run
    with pytest.raises(CoverageGap):
        scattering_service.extract_free_pplus(traj, 0.0, params, s_grid=[0.5, 1.0, 2.0 * traj.t_end])
    with pytest.raises(InvalidParameter):
        scattering_service.extract_free_pplus(traj, 0.0, params, s_grid=[1.0, 0.5])


def test_phase_space_route(box_domain, free_run):
    _, traj = free_run
    result = box_domain.extract_free_phase_space(traj, 0.3, t_grid=[0.5, 1.0, 2.0],
                                                 require_convergence=False)
    assert result.route == "phase_space_cutoff"
    assert [t for t, _ in result.cauchy_history] == [1.0, 2.0]
    assert radial_service.l2_norm(result.psi_free) <= radial_service.l2_norm(traj.initial) * (1 + 1e-10)
    with pytest.raises(InvalidAlpha):
        box_domain.extract_free_phase_space(traj, 0.7)
    with pytest.raises(InvalidParameter):
        box_domain.extract_free_phase_space(traj, 0.3, t_grid=[0.0, 1.0])


def test_required_convergence_raises(box_domain, free_run):
    _, traj = free_run
    # the growing ball F(|x| <= t^alpha) keeps adding mass, so a tight run cannot settle
    with pytest.raises(NotConverged) as info:
        box_domain.extract_free_phase_space(traj, 0.55, t_grid=[0.25, 0.4, 0.6, 0.9, 1.3, 2.0])
    assert info.value.exit_code == 4
    assert len(info.value.history) == 5


def test_decompose_free_run(box_domain, free_run, free_reversed, params):
    _, traj = free_run
    result = box_domain.decompose(traj, params, reversed_traj=free_reversed, record_count=3)
    assert result.delta == pytest.approx(default_delta(2.5))
    assert len(result.psi_loc_series) == 3
    assert len(result.residual_series) == 3
    assert all(np.isfinite(r) for _, r in result.residual_series)
    assert abs(result.details["mass_budget"]) <= 1e-6
    with pytest.raises(InvalidParameter):
        box_domain.decompose(traj, params, route="sideways")


def test_cook_correction_validates_sign(free_run, params):
    _, traj = free_run
    with pytest.raises(InvalidParameter):
        scattering_service.cook_correction(traj, 0.0, 1.0, params, NonlinearitySpec(), 0)
    with pytest.raises(InvalidParameter):
        scattering_service.cook_correction(traj, 0.0, -1.0, params, NonlinearitySpec(), 1)


def test_smooth_correction_vanishes_without_duhamel_part(box_domain, free_run, params):
    _, traj = free_run
    spec = NonlinearitySpec()
    correction = box_domain.smooth_correction(traj, 0.0, 1.0, params, spec, 1)
    assert radial_service.l2_norm(correction) == 0.0


def test_base_time_consistency_order(free_run, params):
    _, traj = free_run
    with pytest.raises(InvalidParameter):
        scattering_service.base_time_consistency(traj, params, 0.5, 0.5)


def test_strichartz_sweep_is_linear_for_free_flow(small_grid):
    config = free_config(small_grid, t_end=0.5)
    report = scattering_service.strichartz_sweep(config, [0.5, 1.0, 2.0], 2.0, 10.0 / 3.0)
    assert report.scales == [0.5, 1.0, 2.0]
    assert report.data_norms[2] == pytest.approx(4.0 * report.data_norms[0], rel=1e-12)
    assert report.spread <= 1e-8
    with pytest.raises(InadmissiblePair):
        scattering_service.strichartz_sweep(config, [1.0], 2.0, 3.0)


def test_cook_correction_telescopes_on_free_flow(box_domain, small_grid):
    # for free flow the integral collapses to P+ F psi(t) - P+ e^{iTH0} F psi(t + T)
    initial = radial_service.gaussian(small_grid, width=1.5, center=7.0)
    config = replace(free_config(small_grid, t_end=1.0, stride=1), initial=initial)
    traj = dynamics_service.evolve(config)
    params = ProjectionParams(M=0.0, R=2.0)
    T = float(traj.times[-1])
    far = CutoffSpec.lower(10.0)

    correction = box_domain.cook_correction(traj, 0.0, T, params, NonlinearitySpec(), 1, radius=10.0)
    start = radial_service.spatial_cutoff_apply(traj.states[0], far)
    end = radial_service.free_propagate(radial_service.spatial_cutoff_apply(traj.states[-1], far), -T)
    expected = dilation_service.apply_halfspace_projection(start - end, params, 1)

    reference = radial_service.l2_norm(initial)
    commutator = radial_service.commutator_h0(initial, far)
    assert radial_service.l2_norm(commutator) >= 0.05 * reference
    assert radial_service.l2_norm(expected) >= 0.03 * reference
    assert radial_service.l2_norm(correction - expected) <= 2e-3 * reference


def test_smooth_correction_is_bounded_by_the_duhamel_source(box_domain, small_grid, params):
    config = replace(free_config(small_grid, t_end=0.5, stride=1),
                     nonlinearity=NonlinearitySpec((MonomialTerm(sign=-1, lam=1.0, p=2.0),)))
    traj = dynamics_service.evolve(config)
    T = float(traj.times[-1])

    sources = []
    for t in traj.times:
        psi_D = box_domain.compute_psi_D(traj, float(t))
        V_D = dynamics_service.evaluate_nonlinearity(traj.nonlinearity, psi_D, float(t)).values
        sources.append(radial_service.l2_norm(psi_D * V_D))
    bound = float(np.sum(trapezoid_weights(traj.times) * np.asarray(sources)))

    for sign, start in ((1, 0.0), (-1, T)):
        correction = box_domain.smooth_correction(traj, start, T, params, traj.nonlinearity, sign)
        size = radial_service.l2_norm(correction)
        assert 0.0 < size <= bound * (1 + 1e-8)


def test_routes_agree_once_the_ball_covers_the_data(box_domain, small_grid, params, free_run):
    reference = radial_service.l2_norm(free_run[1].initial)
    short = box_domain.extract_free_phase_space(free_run[1], 0.3, require_convergence=False)
    # at t = 2 the ball |x| <= t^alpha still cuts through the unit Gaussian
    assert radial_service.l2_norm(short.psi_free - free_run[1].initial) >= 0.1 * reference

    traj = dynamics_service.evolve(free_config(small_grid, t_end=50.0, stride=50))
    cutoff_route = box_domain.extract_free_phase_space(traj, 0.55, require_convergence=False)
    filtered_route = box_domain.extract_free_pplus(traj, 0.0, params, require_convergence=False)
    gap = radial_service.l2_norm(cutoff_route.psi_free - filtered_route.psi_free)
    assert gap <= 5e-3 * reference
    assert radial_service.l2_norm(filtered_route.psi_free - traj.initial) <= 1e-6 * reference
