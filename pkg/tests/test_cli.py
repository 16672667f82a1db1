import json

import pytest
import yaml

from ddsym.cli import FIGURES, load_preset, main, summarize
from ddsym.config import ConfigError, dump_config, from_dict, load_config
from ddsym.runner import run_config

BASE = {
    "name": "t",
    "hamiltonian": {"n_bath": 0, "epsilon": 0.0},
    "sequence": {"builder": "xy4", "params": {"tau": 1.0, "symmetric": True}},
    "n_cycles": 10,
    "metrics": ["decay_time", "precession", "final"],
}


def write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_free_qubit_never_decays(tmp_path):
    metrics = run_config(from_dict(BASE), tmp_path)
    (point,) = metrics["points"]
    assert point["decay_time"]["status"] == "not-decayed"
    assert point["decay_time"]["last_value"] == pytest.approx(1.0)
    assert (tmp_path / "metrics.json").exists()
    assert (tmp_path / "point_000_trajectory.csv").read_text().startswith("time,mx,my,mz\n")
    assert "H0" in (tmp_path / "point_000_aht.txt").read_text()


def test_tau_sweep_gives_one_record_per_value(tmp_path):
    data = dict(BASE, sweep=[{"path": "sequence.params.tau", "values": [5, 10, 20, 50]}])
    metrics = run_config(from_dict(data), tmp_path)
    assert [p["overrides"]["sequence.params.tau"] for p in metrics["points"]] == [5, 10, 20, 50]
    assert [p["cycle_time"] for p in metrics["points"]] == [20, 40, 80, 200]
    assert len(list(tmp_path.glob("point_*_trajectory.csv"))) == 4


def test_cartesian_sweep():
    data = dict(BASE, sweep=[
        {"path": "sequence.params.tau", "values": [1.0, 2.0]},
        {"path": "sequence.builder", "values": ["xy4", "xy8", "xy16"]},
    ])
    assert len(from_dict(data).points()) == 6


def test_outputs_are_deterministic(tmp_path):
    data = {
        "hamiltonian": {"n_bath": 3, "bath_model": "secular_dipolar", "seed": 11,
                        "couplings": {"scale_b": 0.3, "scale_d": 0.1}, "epsilon": 0.05},
        "sequence": {"builder": "xy8", "params": {"tau": 2.0, "symmetric": False}},
        "n_cycles": 20,
        "sample_points": {"uniform": 0.7},
    }
    run_config(from_dict(data), tmp_path / "a")
    run_config(from_dict(data), tmp_path / "b")
    for name in ("point_000_trajectory.csv", "metrics.json", "point_000_aht.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_parallel_matches_serial(tmp_path):
    data = dict(BASE, hamiltonian={"n_bath": 2, "bath_model": "diagonal", "seed": 1,
                                   "couplings": {"scale_b": 1.0, "scale_d": 1.0}, "epsilon": 0.02},
                sweep=[{"path": "sequence.params.tau", "values": [0.5, 1.0, 1.5]}])
    serial = run_config(from_dict(data), tmp_path / "s")
    parallel = run_config(from_dict(dict(data, workers=2)), tmp_path / "p")
    assert serial == parallel


def test_dsl_sequence(tmp_path):
    data = dict(BASE, sequence={"dsl": "2x[ d1 X d1 Y ]"})
    cfg = from_dict(data)
    assert cfg.sequence().cycle_time == 4
    run_config(cfg, tmp_path)


def test_total_time_sets_cycles():
    data = dict(BASE, total_time=100.0)
    data.pop("n_cycles")
    cfg = from_dict(data)
    assert cfg.cycles_for(cfg.sequence()) == 25


def test_config_round_trip(tmp_path):
    cfg = from_dict(BASE)
    path = tmp_path / "again.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path).to_dict() == cfg.to_dict()


def test_degenerate_fit_is_recorded_per_point(tmp_path):
    data = {
        "hamiltonian": {"n_bath": 2, "bath_model": "none", "b": [3.0, -2.0]},
        "sequence": {"builder": "cpmg", "params": {"tau": 1.0, "symmetric": False, "n_pulses": 1}},
        "n_cycles": 4,
        "metrics": ["precession"],
    }
    metrics = run_config(from_dict(data), tmp_path)
    assert metrics["points"][0]["precession_per_pulse"]["status"] == "degenerate-fit"
    assert metrics["points"][0]["warnings"]


@pytest.mark.parametrize(
    "patch",
    [
        {"sequence": {"builder": "xy4", "dsl": "d1 X", "params": {"tau": 1}}},
        {"sequence": {}},
        {"hamiltonian": {"n_bath": 2, "b": [1.0]}},
        {"colour": "blue"},
        {"metrics": ["speed"]},
        {"sample_points": "sometimes"},
        {"sweep": [{"path": "sequence.params.tau", "values": []}]},
        {"n_cycles": 0},
        {"sequence": {"builder": "kdd", "params": {"tau": 1}}},
    ],
)
def test_invalid_configs(patch):
    with pytest.raises(ConfigError):
        cfg = from_dict(dict(BASE, **patch))
        run_config(cfg, "/nonexistent/never-written")


def test_invalid_sweep_value_is_config_error(tmp_path):
    data = dict(BASE, sweep=[{"path": "sequence.params.tau", "values": [1.0, -1.0]}])
    with pytest.raises(ConfigError):
        run_config(from_dict(data), tmp_path)


def test_cli_simulate(tmp_path, capsys):
    path = write(tmp_path, BASE)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "metrics.json").read_text())["name"] == "t"


def test_cli_invalid_config_exit_code(tmp_path, capsys):
    path = write(tmp_path, dict(BASE, colour="blue"))
    assert main(["simulate", "--config", str(path)]) == 2
    assert "colour" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_unknown_figure(capsys):
    assert main(["reproduce", "fig6"]) == 2


def test_cli_parse(capsys):
    assert main(["parse", "--dsl", "2x[ d10 X d10 Y ]"]) == 0
    assert capsys.readouterr().out.strip() == "d10 X d10 Y d10 X d10 Y"
    assert main(["parse", "--dsl", "d10 Q"]) == 2


def test_cli_aht(tmp_path, capsys):
    data = dict(BASE, hamiltonian={"n_bath": 1, "bath_model": "none", "b": [0.5], "epsilon": 0.05})
    path = write(tmp_path, data)
    assert main(["aht", "--config", str(path), "--order", "1"]) == 0
    out = capsys.readouterr().out
    assert "# XY-4(S)" in out and "H1" in out and "H2" not in out


def test_cli_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["aht", "--config", "x.yaml", "--order", "5"])
    assert exc.value.code == 2


@pytest.mark.parametrize("figure", FIGURES)
def test_presets_are_valid_configs(figure):
    cfg = load_preset(figure)
    assert cfg.name == figure
    for _, point in cfg.points():
        point.sequence()
    if figure != "fig2":
        assert cfg.hamiltonian.n_bath == 6


def test_fig2_summary(tmp_path):
    from ddsym.cli import reproduce

    summary = reproduce("fig2", tmp_path)
    assert summary["spacing_ratio_S_over_A"] == pytest.approx(0.5)
    assert json.loads((tmp_path / "summary.json").read_text()) == summary


def test_summarize_ignores_failed_points():
    metrics = {"points": [
        {"overrides": {"sequence.params.tau": 1.0}, "error": "boom"},
        {"overrides": {"sequence.params.tau": 2.0}, "decay_time": {"status": "ok", "value": 3.0}},
    ]}
    assert summarize("fig4", metrics)["decay_time"] == {"tau=2.0": 3.0}
