"""Config parsing, validation, defaults and echo round-trips."""

import os

import pytest

from fleetsim.config import (
    ConfigError,
    ScenarioConfig,
    dump_config,
    load_config,
    parse_config_text,
    write_config,
)
from fleetsim.demand import write_requests_csv
from fleetsim.geo import GeoPoint


def _dataset(tmp_path, name="trips.csv"):
    path = tmp_path / name
    write_requests_csv(path, [
        (100, GeoPoint(48.001, 11.001), GeoPoint(48.004, 11.004), 1),
        (200, GeoPoint(48.002, 11.002), GeoPoint(48.001, 11.005), 2),
    ])
    return path


def _write_cfg(tmp_path, body, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(body)
    return path


def _minimal_body(dataset, extra=""):
    return f"dataset = {os.path.basename(dataset)}\nfleet_base = 90\n{extra}"


def test_minimal_config_applies_documented_defaults(tmp_path):
    dataset = _dataset(tmp_path)
    cfg = load_config(_write_cfg(tmp_path, _minimal_body(dataset)))
    assert cfg.dataset == str(dataset)
    assert cfg.fleet_base == 90 and cfg.fleet_size == 90
    assert cfg.horizon_s == 1800.0
    assert cfg.interval_s == 180.0
    assert cfg.coverage_time_factor == 1.05
    assert cfg.touring_discount == 0.7
    assert cfg.coverage_weight == 1000.0
    assert cfg.movement_weight == 10.0
    assert cfg.mode == "none" and cfg.forecast is None
    assert cfg.bbox is None
    assert cfg.warmup_s == 21600.0
    assert cfg.out_dir == str(tmp_path / "out")


def test_comments_blanks_and_spacing_are_tolerated(tmp_path):
    dataset = _dataset(tmp_path)
    body = (
        "# scenario file\n"
        "\n"
        f"dataset   =   {os.path.basename(dataset)}   # the trips\n"
        "fleet_base=4\n"
        "seed = 7\n"
    )
    cfg = load_config(_write_cfg(tmp_path, body))
    assert cfg.fleet_base == 4 and cfg.seed == 7


def test_unknown_key_is_named(tmp_path):
    dataset = _dataset(tmp_path)
    with pytest.raises(ConfigError, match="fleet_bsae"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "fleet_bsae = 3\n")))


def test_bad_value_duplicate_and_malformed_lines(tmp_path):
    dataset = _dataset(tmp_path)
    with pytest.raises(ConfigError, match="seed"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "seed = often\n")))
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "seed = 1\nseed = 2\n")))
    with pytest.raises(ConfigError, match="key = value"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "just some words\n")))
    with pytest.raises(ConfigError, match="bbox"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "bbox = 1,2,3\n")))
    with pytest.raises(ConfigError, match="empty value"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "mode =\n")))


def test_missing_required_keys(tmp_path):
    _dataset(tmp_path)
    with pytest.raises(ConfigError, match="dataset"):
        load_config(_write_cfg(tmp_path, "fleet_base = 3\n"))
    with pytest.raises(ConfigError, match="fleet_base"):
        load_config(_write_cfg(tmp_path, "dataset = trips.csv\n"))


def test_fdr_mode_requires_forecast(tmp_path):
    dataset = _dataset(tmp_path)
    with pytest.raises(ConfigError, match="forecast"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "mode = fdr\n")))
    cfg = load_config(_write_cfg(tmp_path, _minimal_body(
        dataset, "mode = fdr\nforecast = perfect\n"), name="ok.cfg"))
    assert cfg.mode == "fdr" and cfg.forecast == "perfect"
    with pytest.raises(ConfigError, match="forecast"):
        load_config(_write_cfg(tmp_path, _minimal_body(
            dataset, "mode = fdr\nforecast = psychic\n"), name="bad.cfg"))


def test_vehicle_factor_scales_fleet(tmp_path):
    dataset = _dataset(tmp_path)
    cfg = load_config(_write_cfg(tmp_path, _minimal_body(
        dataset, "vehicle_factor = 0.8\n")))
    assert cfg.fleet_size == 72


def test_invariant_violations_name_the_key(tmp_path):
    dataset = _dataset(tmp_path)
    cases = [
        ("speed_mps = -3\n", "speed_mps"),
        ("end_time = 0\nstart_time = 10\n", "end_time"),
        ("end_time = 1000\nwarmup_s = 2000\n", "warmup_s"),
        ("bbox = 48.2,11.0,48.0,11.1\n", "bbox"),
        ("capacity = 0\n", "capacity"),
        ("ride_factor = 0.5\n", "ride_factor"),
        ("vehicle_factor = 0.001\n", "vehicle_factor"),
        ("mode = teleport\n", "mode"),
        ("coverage_weight = 150\n", "repositioning"),
    ]
    for extra, needle in cases:
        with pytest.raises(ConfigError, match=needle):
            load_config(_write_cfg(tmp_path, _minimal_body(dataset, extra)))


def test_referenced_files_must_exist(tmp_path):
    dataset = _dataset(tmp_path)
    with pytest.raises(ConfigError, match="dataset"):
        load_config(_write_cfg(tmp_path, "dataset = nope.csv\nfleet_base = 2\n"))
    with pytest.raises(ConfigError, match="matrix_path"):
        load_config(_write_cfg(tmp_path, _minimal_body(dataset, "matrix_path = nope.csv\n")))


def test_relative_paths_resolve_against_config_directory(tmp_path, monkeypatch):
    sub = tmp_path / "configs"
    sub.mkdir()
    dataset = _dataset(sub)
    cfg_path = _write_cfg(sub, "dataset = trips.csv\nfleet_base = 2\nout_dir = results\n")
    monkeypatch.chdir(tmp_path)  # loading must not depend on the cwd
    cfg = load_config(cfg_path)
    assert cfg.dataset == str(sub / "trips.csv")
    assert cfg.out_dir == str(sub / "results")


def test_echo_round_trip_reloads_identically(tmp_path):
    dataset = _dataset(tmp_path)
    body = _minimal_body(dataset, (
        "mode = fdr\nforecast = naive\nbbox = 48.0,11.0,48.01,11.02\n"
        "vehicle_factor = 1.1\nseed = 42\nsolver_time_limit_s = 2.5\n"))
    cfg = load_config(_write_cfg(tmp_path, body))
    echo = tmp_path / "resolved.cfg"
    write_config(cfg, echo)
    assert load_config(echo) == cfg
    # a config without the optional keys round-trips as well
    cfg2 = load_config(_write_cfg(tmp_path, _minimal_body(dataset), name="plain.cfg"))
    echo2 = tmp_path / "resolved2.cfg"
    write_config(cfg2, echo2)
    assert load_config(echo2) == cfg2
    assert "bbox" not in echo2.read_text()


def test_dump_emits_full_float_precision():
    cfg = ScenarioConfig(dataset="d.csv", fleet_base=3,
                         vehicle_factor=0.30000000000000004)
    text = dump_config(cfg)
    assert "vehicle_factor = 0.30000000000000004" in text
    reparsed_line = [l for l in text.splitlines() if l.startswith("vehicle_factor")][0]
    assert float(reparsed_line.split("=")[1]) == cfg.vehicle_factor


def test_parse_config_text_directly():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("# fine\nwat\n")
