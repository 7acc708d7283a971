import csv
import json

import pytest

from config import settings
from main import main

FREE_RUN = """
grid.n = 5
grid.r_max = 20
grid.N = 64
evolution.t_end = 2
evolution.stride = 4
scattering.route = pplus_filtered
scattering.pull_domain = box
"""


def write_config(directory, text, name="run.cfg"):
    path = directory / name
    path.write_text(text, encoding="utf-8")
    return path


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root, FREE_RUN)
    out = root / "simulate"
    code = main(["simulate", "--config", str(config), "--out", str(out), "--log-level", "warning"])
    return root, config, out, code


def test_simulate_writes_run_directory(simulated):
    _, _, out, code = simulated
    assert code == 0
    manifest = read_json(out / "manifest.json")
    assert manifest["schema"] == settings.SCHEMA_MANIFEST
    assert manifest["exit_code"] == 0
    assert manifest["seed"] == 0
    assert "config.echo" in manifest["files"]
    assert "trajectory/monitors.csv" in manifest["files"]
    assert (out / "trajectory" / "snapshot_00000.json").exists()
    assert not (out / "interaction_report.json").exists()


def test_simulate_is_deterministic(simulated, tmp_path):
    _, config, out, _ = simulated
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(config), "--out", str(again), "--log-level", "warning"]) == 0
    assert (again / "trajectory" / "monitors.csv").read_bytes() == (out / "trajectory" / "monitors.csv").read_bytes()
    assert read_json(again / "manifest.json")["config_hash"] == read_json(out / "manifest.json")["config_hash"]


def test_seed_override(simulated, tmp_path):
    _, config, _, _ = simulated
    out = tmp_path / "seeded"
    code = main(["simulate", "--config", str(config), "--out", str(out), "--seed", "17", "--log-level", "warning"])
    assert code == 0
    assert read_json(out / "manifest.json")["seed"] == 17
    assert "run.seed = 17" in (out / "config.echo").read_text().splitlines()
    assert main(["simulate", "--config", str(config), "--seed", "-1"]) == 2


def test_decompose_reuses_trajectory(simulated, tmp_path):
    _, config, out, _ = simulated
    target = tmp_path / "decompose"
    code = main(["decompose", "--config", str(config), "--out", str(target),
                 "--trajectory", str(out / "trajectory"), "--log-level", "warning"])
    assert code == 0
    report = read_json(target / "scattering_report.json")
    assert report["schema"] == settings.SCHEMA_SCATTERING
    assert [route["route"] for route in report["routes"]] == ["pplus_filtered"]
    assert report["routes"][0]["accepted"]
    assert report["max_psi_loc_l2"]["pplus_filtered"] <= 1e-6
    assert report["duhamel_consistency"] <= 1e-10
    assert "base_time_consistency" in report
    assert (target / "psi_loc_pplus_filtered.csv").exists()


def test_verify_estimates_writes_rows(tmp_path):
    config = write_config(tmp_path, FREE_RUN + "bench.items = projection_weight\n"
                                              "bench.weight_exponents = 1\nbench.signs = 1\n")
    out = tmp_path / "bench"
    assert main(["verify-estimates", "--config", str(config), "--out", str(out), "--log-level", "warning"]) == 0
    lines = (out / "estimate_report.csv").read_text().splitlines()
    assert lines[0] == f"# schema: {settings.SCHEMA_ESTIMATES}"
    rows = list(csv.DictReader(lines[1:]))
    assert [row["lemma_item"] for row in rows] == ["projection_weight", "projection_weight"]
    fits = read_json(out / "estimate_fits.json")["reports"]
    change = fits[0]["fit"]["relative_change"]
    assert 0.0 < fits[0]["fit"]["coarse"] < float("inf")
    assert fits[0]["verdict"] == ("PASS" if change < 0.10 else "FAIL")


def test_ground_state_command(tmp_path):
    text = ("grid.n = 5\ngrid.r_max = 30\ngrid.N = 256\n"
            "nonlinearity.terms = focus\nnonlinearity.focus.kind = monomial\nnonlinearity.focus.p = 0.5\n")
    config = write_config(tmp_path, text)
    out = tmp_path / "gs"
    assert main(["ground-state", "--config", str(config), "--out", str(out), "--log-level", "warning"]) == 0
    report = read_json(out / "ground_state_report.json")
    assert report["schema"] == settings.SCHEMA_GROUND_STATE
    assert report["p"] == 0.5
    assert report["residual"] <= 1e-6
    assert report["spectral_tail"] <= 1e-6
    assert report["tail_ratio"] <= 1e-8
    assert (out / "ground_state.json").exists()


def test_unresolved_ground_state_exits_with_2(tmp_path):
    text = ("grid.n = 5\ngrid.r_max = 30\ngrid.N = 64\n"
            "nonlinearity.terms = focus\nnonlinearity.focus.kind = monomial\nnonlinearity.focus.p = 1.2\n")
    config = write_config(tmp_path, text)
    assert main(["ground-state", "--config", str(config), "--out", str(tmp_path / "gs"), "--log-level", "error"]) == 2


def test_bad_config_exits_with_2(tmp_path):
    config = write_config(tmp_path, "grid.n = 2\n")
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "x")]) == 2
    config = write_config(tmp_path, "grid.n 5\n", name="broken.cfg")
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "y")]) == 2


def test_missing_config_exits_with_5(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "x")]) == 5


def test_failed_command_still_writes_manifest(simulated, tmp_path):
    _, config, _, _ = simulated
    out = tmp_path / "orphan"
    code = main(["decompose", "--config", str(config), "--out", str(out),
                 "--trajectory", str(tmp_path / "no_such_run"), "--log-level", "error"])
    assert code == 5
    manifest = read_json(out / "manifest.json")
    assert manifest["exit_code"] == 5
    assert manifest["files"] == ["config.echo"]


def test_help_lists_exit_codes(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    assert "exit codes" in text
    assert "non-convergence" in text


def test_undecodable_config_exits_with_2(tmp_path):
    path = tmp_path / "binary.cfg"
    path.write_bytes(b"grid.n = 5\n\xff\xfe\n")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "x"), "--log-level", "error"]) == 2
