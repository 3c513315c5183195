"""Tests for the experiment harness: config validation, deterministic
reports, refinement scaling, snapshot I/O, and the command-line front end."""

import json
import math

import numpy as np
import pytest

from difflab import (
    ConfigError,
    DomainMask,
    Field,
    GridSpec,
    Trajectory,
    ball_mask,
    export_csv,
    full_mask,
    load_trajectory,
    parse_report,
    save_field,
    save_trajectory,
)
from difflab.cli import main
from difflab.harness import (
    ExperimentConfig,
    preset_config,
    preset_names,
    run_experiment,
    run_with_refinement,
)

SMALL_CONFIGS = {
    "heatkernel": {"experiment": "heatkernel", "seed": 1,
                   "grid": {"n": 33}, "time": {"t_end": 0.2, "n_frames": 48}},
    "oscdecay": {"experiment": "oscdecay", "seed": 2, "grid": {"n": 25}},
    "skt": {"experiment": "skt", "seed": 3,
            "grid": {"n": 17}, "time": {"t_end": 0.1}},
    "quad4": {"experiment": "quad4", "seed": 4,
              "grid": {"n": 17}, "time": {"t_end": 0.25}},
    "general": {"experiment": "general", "seed": 5, "grid": {"n": 17}},
    "interp": {"experiment": "interp", "seed": 6, "grid": {"n": 17}},
}

EXPECTED_CHECKS = {
    "heatkernel": ["kernel_mass_conservation", "kernel_decay_slopes",
                   "kernel_moment_slope"],
    "oscdecay": ["oscillation_decay", "supremum_bound"],
    "skt": ["skt_positivity", "skt_v_ceiling", "skt_clipping_audit",
            "skt_nu_bounds", "skt_evolution_identity", "lp_energy",
            "one_sided_interpolation"],
    "quad4": ["quad_mass_conservation", "quad_mu_bounds",
              "quad_integral_identities"],
    "general": ["structural_assumptions", "transformed_system_residual",
                "transform_roundtrip"],
    "interp": ["one_sided_interpolation", "cut_ball_estimate"],
}


# ---------------------------------------------------------------------------
# config loading and validation


def test_preset_catalogue():
    assert preset_names() == sorted(EXPECTED_CHECKS)
    with pytest.raises(ConfigError, match="valid presets"):
        preset_config("nope")
    # presets are deep copies: mutating one must not leak into the next
    preset_config("skt")["system"]["d1"] = 99.0
    assert preset_config("skt")["system"]["d1"] == 0.1


def test_config_requires_experiment_and_seed():
    with pytest.raises(ConfigError, match="experiment"):
        ExperimentConfig({"seed": 0})
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig({"experiment": "skt"})


@pytest.mark.parametrize("override, fragment", [
    ({"grid": {"dim": 5}}, "grid.dim"),
    ({"grid": {"n": 2}}, "grid.n"),
    ({"grid": {"n": [17, 17, 17]}}, "grid.n has 3 entries"),
    ({"grid": {"extent": 0.0}}, "grid.extent"),
    ({"time": {"t_end": -1.0}}, "time.t_end"),
    ({"time": {"dt": 0.0}}, "time.dt"),
    ({"time": {"n_frames": 1}}, "time.n_frames"),
    ({"estimate": {"alpha": 1.0}}, "estimate.alpha"),
    ({"estimate": {"p": 0.5}}, "estimate.p"),
    ({"estimate": {"eps": 0.7}}, "estimate.eps"),
    ({"estimate": {"c0": 0.5}}, "estimate.c0"),
    ({"estimate": {"C": -1.0}}, "estimate.C"),
    ({"seed": 1.5}, "seed"),
    ({"output": {"stem": ""}}, "output.stem"),
    ({"grid": "tiny"}, "grid"),
])
def test_config_errors_name_the_offending_field(override, fragment):
    data = {"experiment": "skt", "seed": 0, **override}
    with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
        ExperimentConfig(data)


def test_config_resolves_auto_exponent():
    cfg = ExperimentConfig({"experiment": "interp", "seed": 0})
    alpha = cfg.alpha
    assert cfg.q == pytest.approx(cfg.p * (3.0 - alpha) / (2.0 - alpha))
    echo = cfg.echo()
    assert echo["estimate"]["q"] == cfg.q
    assert "constants" in echo and "gamma" in echo["constants"]
    with pytest.raises(ConfigError, match="estimate.q"):
        ExperimentConfig({"experiment": "interp", "seed": 0,
                          "estimate": {"p": "inf"}})


def test_config_infinite_exponents_echo_as_strings():
    cfg = ExperimentConfig({"experiment": "oscdecay", "seed": 0})
    assert math.isinf(cfg.p) and math.isinf(cfg.q)
    text = json.dumps(cfg.echo())      # must be JSON-serializable
    assert '"inf"' in text


def test_refined_scales_mesh_frames_and_dt():
    cfg = ExperimentConfig({"experiment": "quad4", "seed": 0,
                            "grid": {"n": 17},
                            "time": {"t_end": 0.1, "dt": 1e-4,
                                     "n_frames": 33}})
    fine = cfg.refined(1)
    assert fine.n == (33, 33)
    assert fine.n_frames == 65
    assert fine.dt == pytest.approx(2.5e-5)
    same = cfg.refined(0)
    assert same.n == cfg.n and same.dt == cfg.dt
    finer = cfg.refined(2)
    assert finer.n == (65, 65)
    with pytest.raises(ConfigError):
        cfg.refined(-1)


def test_config_from_json_text_and_path(tmp_path):
    payload = {"experiment": "skt", "seed": 7, "grid": {"n": 17}}
    by_text = ExperimentConfig.from_json(json.dumps(payload))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    by_path = ExperimentConfig.from_json(path)
    assert by_text.resolved == by_path.resolved
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.from_json("{broken")


# ---------------------------------------------------------------------------
# running experiments


@pytest.mark.parametrize("name", sorted(SMALL_CONFIGS))
def test_preset_pipelines_pass_at_small_size(name):
    report = run_experiment(SMALL_CONFIGS[name])
    assert [c.check for c in report.checks] == EXPECTED_CHECKS[name]
    assert report.passed(), [c.check for c in report.checks if not c.passed]


def test_reports_are_deterministic():
    first = run_experiment(SMALL_CONFIGS["oscdecay"]).to_json()
    second = run_experiment(SMALL_CONFIGS["oscdecay"]).to_json()
    assert first == second
    other_seed = dict(SMALL_CONFIGS["oscdecay"], seed=99)
    assert run_experiment(other_seed).to_json() != first


def test_report_json_round_trip_and_csv():
    report = run_experiment(SMALL_CONFIGS["quad4"])
    back = parse_report(report.to_json())
    assert back.passed() == report.passed()
    assert back.config == json.loads(report.to_json())["config"]
    for a, b in zip(back.checks, report.checks):
        assert (a.check, a.lhs, a.rhs, a.passed) == \
            (b.check, b.lhs, b.rhs, b.passed)
        assert a.margin == b.margin
    lines = report.to_csv().strip().split("\n")
    assert lines[0].startswith("check,lhs,rhs,margin,pass")
    assert len(lines) == 1 + len(report.checks)
    with pytest.raises(ValueError, match="schema"):
        parse_report(json.dumps({"schema": "other/9", "checks": []}))


def test_emit_writes_byte_identical_files(tmp_path):
    cfg = dict(SMALL_CONFIGS["interp"])
    cfg["output"] = {"dir": str(tmp_path), "stem": "rep"}
    run_experiment(cfg)
    first = {suffix: (tmp_path / f"rep{suffix}").read_bytes()
             for suffix in (".json", ".csv")}
    run_experiment(cfg)
    for suffix, payload in first.items():
        assert (tmp_path / f"rep{suffix}").read_bytes() == payload
    parsed = parse_report((tmp_path / "rep.json").read_text())
    assert parsed.passed()


def test_run_with_refinement_halves_the_mesh():
    reports = run_with_refinement(SMALL_CONFIGS["quad4"], levels=1)
    assert len(reports) == 2
    assert reports[0].config["grid"]["n"] == 17
    assert reports[1].config["grid"]["n"] == 33
    assert all(r.passed() for r in reports)


def test_frozen_constant_gates_verification():
    cfg = dict(SMALL_CONFIGS["interp"])
    cal = run_experiment(cfg)
    fitted = next(c for c in cal.checks
                  if c.check == "one_sided_interpolation")
    assert fitted.params["mode"] == "calibration"
    cfg["estimate"] = {"C": 1e-9}
    assert not run_experiment(cfg).passed()


# ---------------------------------------------------------------------------
# snapshot I/O


def test_trajectory_round_trip(tmp_path):
    mask = ball_mask(GridSpec.make((1.0, 1.0), 21), (0.5, 0.5), 0.4)
    times = 0.05 * np.arange(4)
    rng = np.random.default_rng(0)
    values = rng.standard_normal((4, mask.active_count))
    traj = Trajectory(mask, times, values)
    path = tmp_path / "traj.bin"
    save_trajectory(path, traj)
    back = load_trajectory(path)
    assert back.grid.n == mask.grid.n
    assert back.grid.h == pytest.approx(mask.grid.h)
    np.testing.assert_array_equal(back.mask.active, mask.active)
    np.testing.assert_array_equal(back.values, values)
    np.testing.assert_allclose(back.times, times, atol=1e-15)


def test_field_snapshot_and_csv_export(tmp_path):
    mask = full_mask(GridSpec.make((1.0,), 9))
    field = Field(mask, np.linspace(0.0, 1.0, mask.active_count))
    bin_path = tmp_path / "field.bin"
    save_field(bin_path, field)
    back = load_trajectory(bin_path)
    assert back.n_frames == 1
    np.testing.assert_array_equal(back.values[0], field.values)

    csv_path = tmp_path / "field.csv"
    export_csv(csv_path, field)
    lines = csv_path.read_text().strip().split("\n")
    assert lines[0] == "x1,value"
    assert len(lines) == 1 + mask.active_count
    x, v = lines[1].split(",")
    assert float(x) == 0.0 and float(v) == field.values[0]


# ---------------------------------------------------------------------------
# command line


def test_cli_run_passes_and_prints_verdicts(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL_CONFIGS["oscdecay"]))
    assert main(["run", str(path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS] oscillation_decay" in out
    assert "overall: PASS" in out


def test_cli_run_reports_failure_with_exit_two(tmp_path, capsys):
    cfg = dict(SMALL_CONFIGS["interp"])
    cfg["estimate"] = {"C": 1e-9}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path)]) == 2
    assert "overall: FAIL" in capsys.readouterr().out


def test_cli_rejects_broken_configs_with_exit_one(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["run", str(path)]) == 1
    assert "config error" in capsys.readouterr().err
    path.write_text(json.dumps({"experiment": "nope", "seed": 0}))
    assert main(["run", str(path)]) == 1
    assert "valid presets" in capsys.readouterr().err


def test_cli_run_refine_and_out(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL_CONFIGS["quad4"]))
    out_dir = tmp_path / "reports"
    assert main(["run", str(path), "--refine", "1",
                 "--out", str(out_dir)]) == 0
    assert (out_dir / "report.json").exists()
    assert (out_dir / "report_r1.json").exists()
    text = capsys.readouterr().out
    assert "level 0" in text and "level 1" in text


def test_cli_seed_override_changes_the_run(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL_CONFIGS["oscdecay"]))
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", str(path), "--out", str(out_a)]) == 0
    assert main(["run", str(path), "--out", str(out_b),
                 "--seed", "123"]) == 0
    assert (out_a / "report.json").read_text() \
        != (out_b / "report.json").read_text()


def test_cli_presets_subcommand(capsys):
    assert main(["presets"]) == 0
    table = json.loads(capsys.readouterr().out)
    assert sorted(table) == preset_names()
    assert table["skt"]["system"]["d1"] == 0.1


def test_cli_constants_subcommand(capsys):
    assert main(["constants", "--d", "2", "--p", "inf", "--q", "inf"]) == 0
    bundle = json.loads(capsys.readouterr().out)
    assert bundle["gamma"] == 2.0
    assert 0.0 < bundle["delta"] < 1.0
