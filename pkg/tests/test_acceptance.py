import numpy as np
import pytest

from schemas import (
    BenchContext,
    EvolutionConfig,
    MonomialTerm,
    NonlinearitySpec,
    ObservableSpec,
    PotentialTerm,
    ProjectionParams,
    RadialField,
    SaturatedTerm,
)
from services.dilation_service import dilation_service
from services.dynamics_service import dynamics_service
from services.estimate_service import estimate_service
from services.observable_service import observable_service
from services.radial_service import radial_service
from services.scattering_service import default_delta, scattering_service

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("n", [5, 7])
@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_gaussian_free_flow_oracle(n, t):
    grid = radial_service.build_grid(n, 60.0, 1024)
    evolved = radial_service.free_propagate(radial_service.gaussian(grid), t)
    exact = radial_service.gaussian_free_field(grid, t)
    inside = grid.nodes <= 0.5 * grid.r_max
    weight = grid.sqrt_measure[inside]
    error = np.linalg.norm(weight * (evolved.values - exact.values)[inside])
    assert error <= 1e-5 * np.linalg.norm(weight * exact.values[inside])


def test_unitarity_and_partition():
    grid = radial_service.build_grid(5, 40.0, 512)
    rng = np.random.default_rng(21)
    f = RadialField(grid, np.exp(-grid.nodes / 6.0) * (rng.standard_normal(512) + 1j * rng.standard_normal(512)))
    spectral = radial_service.to_spectral(f)
    assert abs(np.linalg.norm(spectral.coeffs) - radial_service.l2_norm(f)) <= 1e-10 * radial_service.l2_norm(f)

    smooth = radial_service.gaussian(grid, width=3.0, center=8.0)
    params = ProjectionParams(M=10.0, R=2.0)
    plus = dilation_service.apply_halfspace_projection(smooth, params, 1)
    minus = dilation_service.apply_halfspace_projection(smooth, params, -1)
    assert radial_service.l2_norm(plus + minus - smooth) <= 1e-8 * radial_service.l2_norm(smooth)


@pytest.mark.parametrize("sign", [1, -1])
def test_mass_drift_over_long_monomial_run(sign):
    grid = radial_service.build_grid(5, 30.0, 256)
    config = EvolutionConfig(
        grid=grid,
        nonlinearity=NonlinearitySpec((MonomialTerm(sign=sign, lam=1.0, p=1.2),)),
        initial=radial_service.gaussian(grid, amplitude=0.5),
        dt=dynamics_service.default_dt(grid),
        t_end=10.0,
        snapshot_stride=100,
    )
    traj = dynamics_service.evolve(config)
    masses = np.array([m["mass"] for m in traj.monitors])
    assert np.max(np.abs(masses - masses[0])) <= 1e-9 * masses[0] * traj.t_end


@pytest.mark.parametrize("N", [1, 2])
def test_projection_weight_agrees_on_two_grids(N):
    grid = radial_service.build_grid(5, 30.0, 256)
    ctx = BenchContext(params=ProjectionParams(M=10.0, R=1.5 * 2.0 * N / np.pi), seed=N)
    report = estimate_service.verify_projection_weight_bound(grid, ctx, N=float(N), sign=1)
    assert np.isfinite(report.fit["coarse"]) and np.isfinite(report.fit["fine"])
    assert report.fit["relative_change"] < 0.10
    assert report.verdict == "PASS"
    assert len(report.rows) == 2


def bench_grid():
    # wide enough to hold inputs at r ~ 2|P| t for t up to 100
    return radial_service.build_grid(5, 250.0, 512)


def test_high_energy_decay_slope():
    ctx = BenchContext(params=ProjectionParams(M=0.0, R=2.0), seed=3)
    report = estimate_service.verify_high_energy(bench_grid(), ctx, sigma=3.0, l=0.0, c=1.0)
    assert -3.5 <= report.fit["slope"] <= -2.5
    assert report.fit["r2"] >= 0.95
    assert report.verdict == "PASS"


def test_near_threshold_decay_slope():
    ctx = BenchContext(params=ProjectionParams(M=0.0, R=2.0), seed=4)
    report = estimate_service.verify_near_threshold(bench_grid(), ctx, sigma=2.5, l=0.0, epsilon=0.1)
    assert report.predicted_slope == pytest.approx(-1.5)
    assert report.fit["slope"] <= -1.0
    assert report.verdict == "PASS"


def test_weight_absorption_integral_settles():
    grid = radial_service.build_grid(5, 30.0, 256)
    ctx = BenchContext(params=ProjectionParams(M=10.0, R=2.0), seed=5)
    report = estimate_service.verify_weight_absorption(grid, ctx, sigma=2.5)
    assert report.params["delta"] == pytest.approx(0.0125)
    assert report.fit["integral"] > 0
    assert report.fit["last_decade_fraction"] <= 0.05
    assert report.verdict == "PASS"


# Soliton branch: focusing, mass-subcritical p = 0.5 < 4/n

@pytest.fixture(scope="module")
def soliton_run():
    Q = dynamics_service.shoot_ground_state(5, p=0.5)
    dt = dynamics_service.default_dt(Q.grid)
    config = EvolutionConfig(
        grid=Q.grid,
        nonlinearity=NonlinearitySpec((MonomialTerm(sign=-1, lam=1.0, p=0.5),)),
        initial=Q,
        dt=dt,
        t_end=200.0,
        snapshot_stride=max(1, int(round(200.0 / dt / 400))),
    )
    return Q, dynamics_service.evolve(config), dynamics_service.time_reversed_trajectory(config)


def test_soliton_stays_rigid(soliton_run):
    Q, traj, _ = soliton_run
    reference = radial_service.l2_norm(Q)
    early = [s for t, s in zip(traj.times, traj.states) if t <= 5.0]
    assert len(early) >= 5
    drift = max(radial_service.l2_norm(RadialField(Q.grid, np.abs(s.values) - Q.values)) for s in early)
    assert drift <= 1e-3 * reference


def test_soliton_branch_has_no_free_part(soliton_run):
    Q, traj, backward = soliton_run
    scattering_service.configure("open", open_ceiling=8.0)
    reference = radial_service.l2_norm(Q)
    params = ProjectionParams(M=10.0, R=2.0)
    s_grid = [25.0, 50.0, 100.0, 150.0, traj.t_end]
    result = scattering_service.extract_free_pplus(traj, 0.0, params, s_grid=s_grid, reversed_traj=backward,
                                                   require_convergence=False)
    assert result.details["incoming_available"]
    assert radial_service.l2_norm(result.psi_free) <= 0.05 * reference

    result.delta = default_delta(2.5)
    times = [float(t) for t in traj.times if t <= 20.0][::4]
    records = [scattering_service.compute_psi_loc(traj, result, t, params)[1] for t in times]
    wdelta = np.array([row["wdelta"] for row in records])
    a2 = np.array([row["a2"] for row in records])
    assert wdelta.max() / np.median(wdelta) <= 1.5
    assert a2.max() / np.median(a2) <= 2.0


# Radiation branch: defocusing p = 1.2, small Gaussian data, box pulls on a box the waves never reach

@pytest.fixture(scope="module")
def radiation_run():
    grid = radial_service.build_grid(5, 300.0, 512)
    config = EvolutionConfig(
        grid=grid,
        nonlinearity=NonlinearitySpec((MonomialTerm(sign=1, lam=1.0, p=1.2),)),
        initial=radial_service.gaussian(grid, amplitude=0.01),
        dt=dynamics_service.default_dt(grid),
        t_end=50.0,
        snapshot_stride=1,
    )
    return dynamics_service.evolve(config), dynamics_service.time_reversed_trajectory(config)


def test_radiation_branch_scatters(radiation_run):
    traj, backward = radiation_run
    scattering_service.configure("box")
    reference = radial_service.l2_norm(traj.initial)
    params = ProjectionParams(M=10.0, R=2.0)

    result = scattering_service.decompose(traj, params, route="pplus_filtered", reversed_traj=backward,
                                          record_count=12, require_convergence=False)
    assert radial_service.l2_norm(result.psi_free) >= 0.9 * reference
    assert result.details["residual_trend"] <= 1e-3 * reference
    assert result.residual_series[-1][1] <= 0.1 * reference

    cutoff_route = scattering_service.extract_free_phase_space(traj, 0.55, require_convergence=False)
    assert radial_service.l2_norm(cutoff_route.psi_free - result.psi_free) <= 5e-2 * reference


def test_radiation_branch_relative_propagation(radiation_run):
    traj, _ = radiation_run
    scattering_service.configure("box")
    mass = radial_service.l2_norm(traj.initial) ** 2
    series = observable_service.observable_series(traj, ObservableSpec(kind="phase_space_cutoff", alpha=0.3))
    report = observable_service.rpres_check(series, 1e-2 * mass)
    assert report.verdict == "PASS"
    assert report.remainder_abs_sum <= 1e-2 * mass


def test_saturated_smooth_correction_stays_bounded():
    grid = radial_service.build_grid(5, 30.0, 128)
    config = EvolutionConfig(
        grid=grid,
        nonlinearity=NonlinearitySpec((SaturatedTerm(lam=2.0, p=4.0),)),
        initial=radial_service.gaussian(grid, amplitude=2.0, width=1.5),
        dt=dynamics_service.default_dt(grid),
        t_end=10.0,
        snapshot_stride=5,
    )
    traj = dynamics_service.evolve(config)
    params = ProjectionParams(M=10.0, R=2.0)
    for sign in (1, -1):
        sizes = []
        for T in np.linspace(2.5, 5.0, 5):
            correction = scattering_service.smooth_correction(traj, 5.0, float(T), params, traj.nonlinearity, sign)
            sizes.append(radial_service.l2_norm(dilation_service.apply_dilation_power(correction, params, 2)))
        sizes = np.asarray(sizes)
        assert np.all(np.isfinite(sizes)) and sizes.max() > 0
        assert sizes.max() / np.median(sizes) <= 2.0


def test_strichartz_ratio_under_quasi_periodic_potential():
    grid = radial_service.build_grid(5, 40.0, 256)
    config = EvolutionConfig(
        grid=grid,
        nonlinearity=NonlinearitySpec((
            PotentialTerm("gaussian", amplitude=1.0, width=1.0, temporal="sin", omega=1.0),
            PotentialTerm("gaussian", amplitude=0.5, width=2.0, temporal="cos", omega=float(np.sqrt(2.0))),
            MonomialTerm(sign=1, lam=1.0, p=1.2),
        )),
        initial=radial_service.gaussian(grid, amplitude=0.02),
        dt=dynamics_service.default_dt(grid),
        t_end=10.0,
        snapshot_stride=10,
    )
    report = scattering_service.strichartz_sweep(config, [0.5, 1.0, 2.0], 2.0, 10.0 / 3.0)
    assert all(np.isfinite(report.ratios)) and min(report.ratios) > 0
    assert report.spread <= 0.25
