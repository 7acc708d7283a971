import pytest

from exceptions import ConfigParseError, ConfigValidationError, StorageError
from schemas import RunConfig
from services.config_service import config_service
from utils.config_utils import format_float, parse_flat_document

FULL_DOCUMENT = """
# five-dimensional focusing run
run.seed = 42
grid.n = 5
grid.r_max = 30
grid.N = 256
evolution.t_end = 4.0
evolution.mask = yes
initial.kind = ground_state
initial.omega = 1.5
nonlinearity.terms = focus, wave
nonlinearity.focus.kind = monomial
nonlinearity.focus.p = 1.2
nonlinearity.wave.kind = potential
nonlinearity.wave.temporal = sin
nonlinearity.wave.omega = 2  # rad per unit time
scattering.route = pplus_filtered
scattering.s_grid = 0.5, 1, 2
bench.items = projection_weight
bench.variant = high_frequency
bench.signs = 1, -1
"""


def test_defaults():
    config = config_service.parse_config("")
    assert config == RunConfig()
    assert config.grid.n == 5 and config.grid.N == 512
    assert config.seed == 0
    assert config.scattering.route == "both"
    assert config.nonlinearity.terms == []


def test_full_document():
    config = config_service.parse_config(FULL_DOCUMENT)
    assert config.seed == 42
    assert config.grid.r_max == 30.0
    assert config.evolution.mask is True
    assert [t.name for t in config.nonlinearity.terms] == ["focus", "wave"]
    focus, wave = config.nonlinearity.terms
    assert focus.kind == "monomial" and focus.sign == -1 and focus.p == 1.2
    assert wave.temporal == "sin" and wave.omega == 2.0
    assert config.scattering.s_grid == [0.5, 1.0, 2.0]
    assert config.bench.items == ["projection_weight"]
    assert config.bench.variant == "high_frequency"
    assert config.bench.signs == [1, -1]


def test_serialization_round_trip():
    config = config_service.parse_config(FULL_DOCUMENT)
    text = config_service.serialize_config(config)
    again = config_service.parse_config(text)
    assert again == config
    assert config_service.serialize_config(again) == text
    assert "run.seed = 42" in text.splitlines()


def test_floats_keep_full_precision():
    assert float(format_float(0.1)) == 0.1
    assert float(format_float(1.0 / 3.0)) == 1.0 / 3.0


def test_parse_error_reports_line():
    with pytest.raises(ConfigParseError) as info:
        config_service.parse_config("grid.n = 5\ngrid.r_max 40\n")
    assert info.value.line == 2
    assert info.value.exit_code == 2
    with pytest.raises(ConfigParseError) as info:
        config_service.parse_config("grid.n = 5\ngrid.N =\n")
    assert info.value.line == 2


def test_duplicate_and_conflicting_keys():
    with pytest.raises(ConfigParseError) as info:
        parse_flat_document("grid.n = 5\ngrid.n = 7\n")
    assert "first set on line 1" in info.value.message
    with pytest.raises(ConfigParseError):
        parse_flat_document("grid = 5\n")
    with pytest.raises(ConfigParseError):
        parse_flat_document("grid.n = 5\ngrid.n.x = 1\n")


def test_violations_are_collected():
    text = "grid.n = 2\ngrid.foo = 1\nrun.verbose = 1\nbench.num_probes = 4\n"
    with pytest.raises(ConfigValidationError) as info:
        config_service.parse_config(text)
    violations = info.value.violations
    assert any(v.startswith("grid.n") for v in violations)
    assert any(v.startswith("grid.foo") for v in violations)
    assert any(v.startswith("run.verbose") for v in violations)
    assert any(v.startswith("bench.num_probes") for v in violations)


def test_cross_field_rules():
    text = "scattering.alpha = 0.7\nevolution.dt = 0.01\nprojection.R = 1.0\nprojection.log_points = 300\n"
    with pytest.raises(ConfigValidationError) as info:
        config_service.parse_config(text)
    violations = info.value.violations
    assert any("(0, 3/5)" in v for v in violations)
    assert any("evolution.dt" in v for v in violations)
    assert any("2N/pi" in v for v in violations)
    assert any("power of two" in v for v in violations)


def test_ground_state_needs_focusing_term():
    with pytest.raises(ConfigValidationError) as info:
        config_service.parse_config("initial.kind = ground_state\n")
    assert any("focusing" in v for v in info.value.violations)


def test_strichartz_pair_defaults_to_admissible_partner():
    config = config_service.parse_config("scattering.strichartz_scales = 0.5, 1\n")
    q, r = config.strichartz_pair()
    assert q == 2.0
    assert r == pytest.approx(10.0 / 3.0)
    with pytest.raises(ConfigValidationError):
        config_service.parse_config("scattering.strichartz_scales = 1\nscattering.strichartz_r = 3\n")


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("run.seed = 7\n", encoding="utf-8")
    assert config_service.load_config(path).seed == 7
    with pytest.raises(StorageError) as info:
        config_service.load_config(tmp_path / "missing.cfg")
    assert info.value.exit_code == 5


def test_field_and_cross_field_violations_are_reported_together():
    text = "grid.n = 2\nscattering.alpha = 0.7\nbench.num_probes = 4\n"
    with pytest.raises(ConfigValidationError) as info:
        config_service.parse_config(text)
    violations = info.value.violations
    assert any(v.startswith("grid.n") for v in violations)
    assert any(v.startswith("bench.num_probes") for v in violations)
    assert any(v.startswith("scattering.alpha = 0.7") for v in violations)


def test_term_errors_keep_cross_field_rules():
    text = ("nonlinearity.terms = focus\nnonlinearity.focus.kind = monomial\nnonlinearity.focus.lam = -1\n"
            "projection.log_points = 300\n")
    with pytest.raises(ConfigValidationError) as info:
        config_service.parse_config(text)
    violations = info.value.violations
    assert any(v.startswith("nonlinearity.terms.0.lam") for v in violations)
    assert any("power of two" in v for v in violations)


def test_config_that_is_not_utf8(tmp_path):
    path = tmp_path / "latin.cfg"
    path.write_bytes(b"grid.n = 5\n# r\xe9sum\xe9\n")
    with pytest.raises(ConfigParseError) as info:
        config_service.load_config(path)
    assert info.value.exit_code == 2
    assert info.value.line == 2
