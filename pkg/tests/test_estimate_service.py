import numpy as np
import pytest

from exceptions import DegenerateInput, InvalidParameter
from schemas import BenchContext, CutoffSpec, OperatorProbe, ProbeFactor, ProjectionParams
from services.estimate_service import estimate_service
from services.radial_service import radial_service


@pytest.fixture
def ctx(params):
    return BenchContext(params=params, seed=11)


def test_composition_adjoint(small_grid, params):
    factors = [
        ProbeFactor(kind="weight", power=1.0),
        ProbeFactor(kind="projection", sign=1),
        ProbeFactor(kind="cutoff", cutoff=CutoffSpec.lower(1.0)),
        ProbeFactor(kind="free_flow", time=0.7),
        ProbeFactor(kind="multiplier", symbol=np.sqrt),
        ProbeFactor(kind="weight", power=-2.0),
    ]
    rng = np.random.default_rng(0)
    f = estimate_service.random_field(small_grid, rng)
    g = estimate_service.random_field(small_grid, rng)
    lhs = radial_service.inner(g, estimate_service.apply_composition(f, factors, params))
    rhs = radial_service.inner(estimate_service.apply_composition(g, factors, params, adjoint=True), f)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_open_flow_adjoint(small_grid, params):
    flow = [ProbeFactor(kind="free_flow", time=1.5, domain="open", ceiling=4.0)]
    rng = np.random.default_rng(1)
    f = estimate_service.random_field(small_grid, rng)
    g = estimate_service.random_field(small_grid, rng)
    lhs = radial_service.inner(g, estimate_service.apply_composition(f, flow, params))
    rhs = radial_service.inner(estimate_service.apply_composition(g, flow, params, adjoint=True), f)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_unknown_factor_is_rejected(small_grid, params):
    f = radial_service.gaussian(small_grid)
    with pytest.raises(InvalidParameter):
        estimate_service.apply_factor(f, ProbeFactor(kind="rotation"), params)


def test_random_field_is_normalized(small_grid):
    f = estimate_service.random_field(small_grid, np.random.default_rng(5))
    assert radial_service.l2_norm(f) == pytest.approx(1.0, rel=1e-12)


def test_bump_family_normalization(small_grid):
    family = estimate_service.bump_family(small_grid, 6, 2.5, np.random.default_rng(2))
    for bump in family:
        scale = max(radial_service.weighted_norm(bump, 2.5), radial_service.lp_norm(bump, 1.0))
        assert scale == pytest.approx(1.0, rel=1e-10)


def test_unitary_flow_has_unit_norm(small_grid, params):
    probe = OperatorProbe(factors=[ProbeFactor(kind="free_flow", time=2.0)])
    estimate, stderr = estimate_service.estimate_operator_norm(probe, small_grid, params, seed=3)
    assert estimate == pytest.approx(1.0, rel=1e-10)
    assert stderr <= 1e-10


def test_weight_norm_is_bounded(small_grid, params):
    probe = OperatorProbe(factors=[ProbeFactor(kind="weight", power=-2.0)])
    estimate, _ = estimate_service.estimate_operator_norm(probe, small_grid, params, seed=4)
    assert 0.0 < estimate <= 1.0 + 1e-12


def test_estimates_are_reproducible(small_grid, params):
    probe = OperatorProbe(factors=[ProbeFactor(kind="projection", sign=1), ProbeFactor(kind="weight", power=-1.0)])
    first = estimate_service.estimate_operator_norm(probe, small_grid, params, seed=9)
    second = estimate_service.estimate_operator_norm(probe, small_grid, params, seed=9)
    assert first == second


def test_operator_estimate_limits():
    with pytest.raises(ValueError):
        OperatorProbe(factors=[], num_probes=4)
    with pytest.raises(ValueError):
        OperatorProbe(factors=[], power_iters=10)


def test_decay_rate_fit():
    t = np.geomspace(1.0, 100.0, 12)
    fit = estimate_service.decay_rate_fit(t, 5.0 * t ** -3.0)
    assert fit["slope"] == pytest.approx(-3.0, abs=1e-10)
    assert fit["r2"] == pytest.approx(1.0)
    with pytest.raises(DegenerateInput):
        estimate_service.decay_rate_fit(t[:4], t[:4] ** -3.0)
    with pytest.raises(DegenerateInput):
        estimate_service.decay_rate_fit(t, np.zeros_like(t))


def test_item_parameter_checks(small_grid, ctx):
    with pytest.raises(DegenerateInput):
        estimate_service.verify_high_energy(small_grid, ctx, t_grid=[1.0, 2.0, 3.0, 4.0])
    with pytest.raises(InvalidParameter):
        estimate_service.verify_high_energy(small_grid, ctx, t_grid=[1.0, 2.0, 2.0, 4.0, 5.0])
    with pytest.raises(InvalidParameter):
        estimate_service.verify_high_energy(small_grid, ctx, sigma=1.0)
    with pytest.raises(InvalidParameter):
        estimate_service.verify_near_threshold(small_grid, ctx, epsilon=0.6)
    with pytest.raises(InvalidParameter):
        estimate_service.verify_time_smoothing(small_grid, ctx, l=1.5)
    with pytest.raises(InvalidParameter):
        estimate_service.verify_time_smoothing(small_grid, ctx, variant="quarter_derivative")
    with pytest.raises(InvalidParameter):
        estimate_service.verify_weight_absorption(small_grid, ctx, sigma=2.0)


def test_integration_grid():
    t = estimate_service.integration_grid(100.0)
    assert t[0] == 0.0 and t[-1] == pytest.approx(100.0)
    assert np.all(np.diff(t) > 0)


def test_projection_weight_report(small_grid, ctx):
    report = estimate_service.verify_projection_weight_bound(small_grid, ctx, N=1.0, sign=1)
    assert report.lemma_item == "projection_weight"
    assert len(report.rows) == 2
    assert report.rows[0].params.endswith("N_grid=64")
    assert report.rows[1].params.endswith("N_grid=128")
    assert set(report.fit) == {"coarse", "fine", "relative_change"}
    coarse, fine = report.fit["coarse"], report.fit["fine"]
    assert 0.0 < coarse < np.inf and 0.0 < fine < np.inf
    assert report.fit["relative_change"] == pytest.approx(abs(fine - coarse) / max(coarse, fine))
    assert report.verdict == ("PASS" if report.fit["relative_change"] < 0.10 else "FAIL")


def test_projection_weight_out_of_hypothesis(small_grid):
    ctx = BenchContext(params=ProjectionParams(M=10.0, R=1.0))
    report = estimate_service.verify_projection_weight_bound(small_grid, ctx, N=2.0, sign=-1)
    assert report.verdict == "OUT_OF_RANGE"
    assert report.notes


def test_smooth_weight_absorption_is_informational(small_grid, ctx):
    report = estimate_service.verify_weight_absorption(small_grid, ctx, t_max=10.0, smooth_inputs=True)
    assert report.lemma_item == "weight_absorption_h32"
    assert report.verdict == "INFO"
    assert any("n >= 45" in note for note in report.notes)
    assert report.fit["integral"] > 0
