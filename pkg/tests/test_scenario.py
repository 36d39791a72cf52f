import filecmp

import pytest

from crfid_downlink.cli import main
from crfid_downlink.host import Variant
from crfid_downlink.scenario import (
    DistanceProfile,
    ScenarioError,
    parse_config_text,
    run_scenario,
    SUMMARY_COLUMNS,
    LOG_COLUMNS,
)

CONFIG_TEXT = """
# transfer setup
protocol = ex
s_p = throttle
ocv = 15
n_threshold = 20
r_max = 3
m_threshold = 10
t_u = 1
t_de = -2
t_dl = -3
s_max = 16

distance = oscillate
d_min_cm = 20
d_max_cm = 90
speed_m_per_s = 0.1

seed = 5
rounds_per_sec = 60
repeats = 2
"""


# -- config parsing -------------------------------------------------------------


def test_parse_full_config():
    cfg = parse_config_text(CONFIG_TEXT)
    assert cfg.protocol is Variant.EX
    assert cfg.s_p is None  # throttle
    assert cfg.ocv == 15 and cfg.n_threshold == 20 and cfg.r_max == 3
    assert cfg.profile.kind == "oscillate"
    assert cfg.profile.min_cm == 20 and cfg.profile.max_cm == 90
    assert cfg.seed == 5 and cfg.repeats == 2


def test_parse_defaults_and_comments():
    cfg = parse_config_text("# nothing but comments\n\ns_p = 4 # fixed\n")
    assert cfg.s_p == 4
    assert cfg.profile.kind == "static"
    assert cfg.rounds_per_sec == 60


@pytest.mark.parametrize(
    "text",
    [
        "mystery_key = 1\n",
        "ocv fifteen\n",
        "ocv = fifteen\n",
        "protocol = turbo\n",
        "distance = warp\n",
        "s_p = big\n",
        "distance = oscillate\nd_min_cm = 90\nd_max_cm = 20\n",
    ],
)
def test_parse_config_errors(text):
    with pytest.raises(ScenarioError):
        parse_config_text(text)


# -- distance profile -------------------------------------------------------------


def test_static_profile():
    p = DistanceProfile(kind="static", d_cm=35.0)
    assert p.at(0, 60) == 35.0
    assert p.at(100_000, 60) == 35.0


def test_triangle_profile_positions():
    p = DistanceProfile(kind="oscillate", min_cm=20, max_cm=90, speed_m_per_s=0.1)
    rps = 60
    assert p.at(0, rps) == pytest.approx(20.0)
    assert p.at(int(3.5 * rps), rps) == pytest.approx(55.0)  # halfway up
    assert p.at(7 * rps, rps) == pytest.approx(90.0)  # top of the sweep
    assert p.at(int(10.5 * rps), rps) == pytest.approx(55.0)  # halfway down
    assert p.at(14 * rps, rps) == pytest.approx(20.0)  # full period


def test_triangle_profile_stays_in_bounds():
    p = DistanceProfile(kind="oscillate", min_cm=20, max_cm=90, speed_m_per_s=0.1)
    values = [p.at(r, 60) for r in range(0, 3000, 7)]
    assert min(values) >= 20.0 and max(values) <= 90.0


# -- scenario runs and artifacts ----------------------------------------------------


@pytest.fixture()
def config_dir(tmp_path, small_matrix):
    from crfid_downlink.ihex import encode

    hex_path = tmp_path / "image.hex"
    hex_path.write_text(encode(small_matrix))
    cfg_path = tmp_path / "scenario.cfg"
    cfg_path.write_text(
        f"hex_file = {hex_path}\ns_p = throttle\ndistance = static\nd_cm = 20\n"
        "seed = 3\nrepeats = 2\n"
    )
    return tmp_path, cfg_path


def test_run_scenario_writes_artifacts(config_dir, small_matrix):
    tmp_path, cfg_path = config_dir
    from crfid_downlink.scenario import load_config

    out = tmp_path / "out"
    outcome = run_scenario(load_config(cfg_path), out_dir=out)
    assert outcome.all_completed
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == ",".join(SUMMARY_COLUMNS)
    assert len(summary) == 3  # header + 2 runs
    log0 = (out / "run_00_log.csv").read_text().splitlines()
    assert log0[0] == ",".join(LOG_COLUMNS)
    assert (out / "distance_trace.csv").exists()


def test_run_scenario_can_dump_fram(config_dir, small_matrix):
    tmp_path, cfg_path = config_dir
    from crfid_downlink.scenario import load_config

    cfg = load_config(cfg_path)
    cfg.dump_fram = True
    cfg.repeats = 1
    out = tmp_path / "dump"
    outcome = run_scenario(cfg, out_dir=out)
    assert outcome.all_completed
    blob = (out / "run_00_fram.bin").read_bytes()
    assert len(blob) == 64 * 1024
    for address, value in small_matrix.flat_image().items():
        assert blob[address] == value


def test_run_scenario_deterministic(config_dir):
    tmp_path, cfg_path = config_dir
    from crfid_downlink.scenario import load_config

    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_scenario(load_config(cfg_path), out_dir=out_a)
    run_scenario(load_config(cfg_path), out_dir=out_b)
    for name in sorted(p.name for p in out_a.iterdir()):
        assert filecmp.cmp(out_a / name, out_b / name, shallow=False), name


def test_seed_changes_change_noisy_outcomes(tmp_path, small_matrix):
    from crfid_downlink.scenario import ScenarioConfig

    cfg_a = ScenarioConfig(seed=1, repeats=1, s_p=1,
                           profile=DistanceProfile(kind="static", d_cm=80.0))
    cfg_b = ScenarioConfig(seed=2, repeats=1, s_p=1,
                           profile=DistanceProfile(kind="static", d_cm=80.0))
    out_a = run_scenario(cfg_a, matrix=small_matrix)
    out_b = run_scenario(cfg_b, matrix=small_matrix)
    assert out_a.runs[0].result.rounds != out_b.runs[0].result.rounds


# -- CLI ------------------------------------------------------------------------------


def test_cli_simulate_success(config_dir, capsys):
    tmp_path, cfg_path = config_dir
    code = main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "cli_out")])
    out = capsys.readouterr().out
    assert code == 0
    assert "2/2 transfers completed" in out
    assert (tmp_path / "cli_out" / "summary.csv").exists()


def test_cli_simulate_failure_exit_code(tmp_path, small_matrix, capsys):
    from crfid_downlink.ihex import encode

    hex_path = tmp_path / "image.hex"
    hex_path.write_text(encode(small_matrix))
    cfg = tmp_path / "far.cfg"
    cfg.write_text(
        f"hex_file = {hex_path}\ns_p = 16\ndistance = static\nd_cm = 150\n"
        "seed = 1\nrepeats = 1\nmax_sim_seconds = 120\n"
    )
    assert main(["simulate", "--config", str(cfg)]) == 1


def test_cli_simulate_config_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("ocv = 25\nn_threshold = 20\nhex_file = missing.hex\n")
    assert main(["simulate", "--config", str(bad)]) == 2


def test_cli_model_output(capsys):
    code = main(["model", "--distance", "20", "--words", "1"])
    out = capsys.readouterr().out
    assert code == 0
    assert "psi_t = 148.2112" in out
    assert "eta   = 0.9310" in out


def test_cli_model_unknown_distance():
    assert main(["model", "--distance", "45", "--words", "1"]) == 2


def test_cli_checksum_valid(tmp_path, capsys):
    path = tmp_path / "ok.hex"
    path.write_text(":02AADD00BBCCF0\n:00000001FF\n")
    assert main(["checksum", str(path)]) == 0
    assert "valid: 1 records, 2 data bytes" in capsys.readouterr().out


def test_cli_checksum_invalid(tmp_path, capsys):
    path = tmp_path / "bad.hex"
    path.write_text(":02AADD00BBCCF1\n:00000001FF\n")
    assert main(["checksum", str(path)]) == 1
    assert "invalid" in capsys.readouterr().err


def test_cli_checksum_missing_file():
    assert main(["checksum", "/nonexistent/nope.hex"]) == 2
