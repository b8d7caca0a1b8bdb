"""Config parsing, CSV/plot emission, selftest, and the exit-code contract."""

import argparse

import pytest

from locatesim.cli import (AGG_HEADER, RUNS_HEADER, ConfigError, aggregate_csv_lines,
                           build_settings, format_real, main, parse_config_file,
                           plot_script, runs_csv_lines, scenario_from_settings,
                           selftest_report, sweep_plan, write_outputs)
from locatesim.experiments import ScenarioConfig, SweepRow, run_batch


def test_format_real_keeps_six_significant_digits():
    assert format_real(12.5) == "12.5000"
    assert format_real(0.15) == "0.150000"
    assert format_real(1234567.0) == "1.23457e+06"
    assert format_real(0.0) == "0.00000"


def test_parse_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("\n".join([
        "# sparse point",
        "n = 40",
        "tau = 0.15   # fraction",
        "",
        "protocol = locate",
    ]))
    assert parse_config_file(cfg) == {"n": "40", "tau": "0.15", "protocol": "locate"}


def test_parse_config_file_rejects_bad_lines(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n 40\n")
    with pytest.raises(ConfigError, match="bad.cfg:1"):
        parse_config_file(cfg)
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config_file(tmp_path / "missing.cfg")


def test_unknown_config_keys_are_named(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 4\nspeed = 9\n")
    ns = argparse.Namespace(config=str(cfg))
    with pytest.raises(ConfigError, match="speed"):
        build_settings(ns)


def test_flags_override_config_values(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 4\ntau = 0.5\nprotocol = flooding\n")
    ns = argparse.Namespace(config=str(cfg), protocol="locate", n=None, tau=None,
                            runs=7, seed=None, horizon=None, radio=None,
                            p_start=None, out=None, sweep_axis=None,
                            sweep_values=None, protocols=None)
    settings = build_settings(ns)
    assert settings["protocol"] == "locate"  # flag wins
    assert settings["tau"] == "0.5"  # file value survives
    assert settings["runs"] == "7"


def test_scenario_requires_node_count_and_solver_fraction():
    with pytest.raises(ConfigError, match="`n`"):
        scenario_from_settings({"tau": "0.15"})
    with pytest.raises(ConfigError, match="`tau`"):
        scenario_from_settings({"n": "40"})


def test_scenario_builds_with_overrides():
    cfg = scenario_from_settings({
        "n": "25", "tau": "0.2", "protocol": "probabilistic", "runs": "12",
        "seed": "9", "horizon": "3600", "side": "2000",
        "radio": "wifi", "radio_range": "150", "radio_pdr_model": "smooth",
        "radio_beta": "2", "radio_interference": "collision",
        "cw_min": "4", "cw_max": "16", "gamma": "0.004", "radius": "400",
        "dtn_dist": "30", "p_start": "0.5", "q_flood": "0.3",
        "ttl_init": "8", "e_thr": "900",
    })
    assert (cfg.n, cfg.tau, cfg.protocol, cfg.runs, cfg.base_seed) == (25, 0.2, "probabilistic", 12, 9)
    assert (cfg.side_m, cfg.horizon_s) == (2000.0, 3600.0)
    assert (cfg.radio.range_m, cfg.radio.pdr_model, cfg.radio.beta) == (150.0, "smooth", 2.0)
    assert cfg.radio.interference == "collision"
    p = cfg.params
    assert (p.cw_min_s, p.cw_max_s, p.gamma_per_m, p.radius_m) == (4.0, 16.0, 0.004, 400.0)
    assert (p.dtn_dist_m, p.p_start, p.q_flood, p.ttl_init, p.e_thr_s) == (30.0, 0.5, 0.3, 8, 900.0)


def test_scenario_rejects_bad_values():
    base = {"n": "10", "tau": "0.15"}
    with pytest.raises(ConfigError, match="n: expected an integer"):
        scenario_from_settings({**base, "n": "ten"})
    with pytest.raises(ConfigError, match="radio"):
        scenario_from_settings({**base, "radio": "zigbee"})
    with pytest.raises(ConfigError, match="radio_pdr_model"):
        scenario_from_settings({**base, "radio_pdr_model": "cliff"})
    with pytest.raises(ConfigError):  # domain error surfaces as config error
        scenario_from_settings({**base, "tau": "1.5"})
    with pytest.raises(ConfigError):
        scenario_from_settings({**base, "cw_min": "30"})


def test_sweep_plan_parses_axis_values_and_protocols():
    axis, values, names = sweep_plan({
        "sweep_axis": "tau", "sweep_values": "0.05, 0.1,0.15",
        "protocols": "locate, flooding",
    })
    assert axis == "tau"
    assert values == [0.05, 0.1, 0.15]
    assert names == ["locate", "flooding"]
    with pytest.raises(ConfigError, match="sweep_axis"):
        sweep_plan({"sweep_axis": "side", "sweep_values": "1"})
    with pytest.raises(ConfigError, match="sweep_values"):
        sweep_plan({"sweep_axis": "tau"})
    with pytest.raises(ConfigError, match="sweep_values"):
        sweep_plan({"sweep_axis": "tau", "sweep_values": "a,b"})
    with pytest.raises(ConfigError, match="protocols"):
        sweep_plan({"sweep_axis": "tau", "sweep_values": "0.1", "protocols": "gossip"})


def tiny_row():
    cfg = ScenarioConfig(n=3, tau=0.34, side_m=800.0, runs=2, base_seed=4,
                         horizon_s=300.0)
    results, agg = run_batch(cfg, workers=1)
    return SweepRow("locate", cfg.n, cfg.tau, cfg.params.p_start, results, agg)


def test_runs_csv_shape():
    lines = runs_csv_lines([tiny_row()])
    assert lines[0] == RUNS_HEADER
    assert len(lines) == 3
    for line, idx in zip(lines[1:], (0, 1)):
        fields = line.split(",")
        assert len(fields) == 10
        assert fields[0] == "locate"
        assert (fields[1], fields[2]) == ("3", "0.340000")
        assert int(fields[3]) == idx
        assert int(fields[4]) == 4 ^ idx
        assert fields[5] in ("0", "1")
        if fields[5] == "1":
            assert float(fields[6]) > 0.0
        else:
            assert fields[6] == ""
        assert int(fields[7]) >= 1


def test_aggregate_csv_shape():
    lines = aggregate_csv_lines([tiny_row()])
    assert lines[0] == AGG_HEADER
    fields = lines[1].split(",")
    assert len(fields) == 10
    assert fields[0] == "locate"
    assert fields[3] == "0.400000"
    assert fields[4] == "2"
    assert 0.0 <= float(fields[5]) <= 1.0


def test_plot_script_stanzas():
    script = plot_script("tau", ["locate", "flooding"])
    assert script.count("set terminal pngcairo") == 3
    for stem in ("ert_vs_tau.png", "err_vs_tau.png", "eo_vs_tau.png"):
        assert f'set output "{stem}"' in script
    assert script.count('every ::1') == 6  # two series in each of three plots
    assert 'stringcolumn(1) eq "locate"' in script
    assert "yerrorlines" in script and "linespoints" in script
    assert "($6*100)" in script


def test_write_outputs_emits_plot_only_for_sweeps(tmp_path):
    row = tiny_row()
    written = write_outputs(tmp_path / "a", [row])
    assert [p.name for p in written] == ["runs.csv", "aggregate.csv"]
    written = write_outputs(tmp_path / "b", [row], axis="tau")
    assert [p.name for p in written] == ["runs.csv", "aggregate.csv", "plot.gp"]


def test_selftest_passes():
    ok, lines = selftest_report()
    assert ok
    assert all(line.startswith("ok") for line in lines)


def test_main_selftest_exit_code(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "selftest: ok" in out


RUN_ARGS = ["run", "--protocol", "locate", "--n", "8", "--tau", "0.25",
            "--runs", "5", "--seed", "11", "--horizon", "900"]


def test_main_run_writes_outputs(tmp_path, capsys):
    out_dir = tmp_path / "out"
    assert main(RUN_ARGS + ["--out", str(out_dir)]) == 0
    assert (out_dir / "runs.csv").exists()
    assert (out_dir / "aggregate.csv").exists()
    assert not (out_dir / "plot.gp").exists()
    stdout = capsys.readouterr().out
    assert "locate n=8 tau=0.25" in stdout
    assert "wrote" in stdout


def test_main_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(RUN_ARGS + ["--out", str(a)]) == 0
    assert main(RUN_ARGS + ["--out", str(b)]) == 0
    assert (a / "runs.csv").read_bytes() == (b / "runs.csv").read_bytes()
    assert (a / "aggregate.csv").read_bytes() == (b / "aggregate.csv").read_bytes()


def test_main_sweep_writes_plot_script(tmp_path, capsys):
    out_dir = tmp_path / "sw"
    code = main(["sweep", "--n", "8", "--tau", "0.25", "--runs", "2", "--seed", "3",
                 "--horizon", "600", "--axis", "tau", "--values", "0.1,0.3",
                 "--protocols", "locate,flooding", "--out", str(out_dir)])
    assert code == 0
    gp = (out_dir / "plot.gp").read_text()
    assert 'stringcolumn(1) eq "flooding"' in gp
    agg_lines = (out_dir / "aggregate.csv").read_text().splitlines()
    assert len(agg_lines) == 5  # header + 2 protocols x 2 values
    assert len(capsys.readouterr().out.splitlines()) == 5  # 4 summaries + wrote line


def test_main_bad_config_exits_2(tmp_path, capsys):
    assert main(["run", "--tau", "0.15"]) == 2
    assert "`n`" in capsys.readouterr().err
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nodes = 4\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "nodes" in capsys.readouterr().err


def test_main_unwritable_output_exits_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(RUN_ARGS + ["--out", str(blocker / "sub")])
    assert code == 3
    assert "cannot write" in capsys.readouterr().err
