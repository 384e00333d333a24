"""Command-line interface: exit codes, config validation, output files."""

import json

import pytest

from rwre.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, SCHEMA_VERSION, main


def _beta_config(**extra):
    cfg = {
        "schema_version": SCHEMA_VERSION,
        "seed": 20260815,
        "spec": {"family": "beta", "alpha": 3.0, "beta": 2.0},
    }
    cfg.update(extra)
    return cfg


def _write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def test_no_command_prints_usage(capsys):
    assert main([]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# calibrate

def test_calibrate_json_report(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", _beta_config(excursion_samples=20_000))
    assert main(["calibrate", "--config", cfg]) == EXIT_PASS
    payload = json.loads(capsys.readouterr().out)
    assert payload["seed"] == 20260815
    assert payload["kappa"] == pytest.approx(1.0, abs=1e-9)
    assert payload["lambda_closed"] == pytest.approx(4.0, rel=1e-8)
    assert payload["c_k_closed"] == pytest.approx(2.0, rel=1e-8)
    assert payload["excursion_samples"] == 20_000


def test_calibrate_deterministic_output(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", _beta_config(excursion_samples=20_000))
    outs = []
    for sub in ("one", "two"):
        rc = main(["calibrate", "--config", cfg, "--output", str(tmp_path / sub)])
        assert rc == EXIT_PASS
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    one = (tmp_path / "one" / "constants.json").read_bytes()
    two = (tmp_path / "two" / "constants.json").read_bytes()
    assert one == two
    assert b"timestamp" not in one
    meta = json.loads((tmp_path / "one" / "constants.meta.json").read_text())
    assert "timestamp_utc" in meta and "runtime_seconds" in meta


def test_calibrate_seed_override(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", _beta_config(excursion_samples=20_000))
    assert main(["calibrate", "--config", cfg, "--seed", "7"]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["seed"] == 7


def test_calibrate_csv(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", _beta_config(excursion_samples=20_000))
    out_dir = tmp_path / "out"
    rc = main(["calibrate", "--config", cfg, "--format", "csv",
               "--output", str(out_dir)])
    assert rc == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "constant,value"
    assert any(line.startswith("kappa,") for line in lines)
    assert (out_dir / "constants.csv").exists()


def test_config_rejections(tmp_path, capsys):
    def rc_of(cfg_dict):
        path = _write(tmp_path, "bad.json", cfg_dict)
        rc = main(["calibrate", "--config", path])
        capsys.readouterr()
        return rc

    assert main(["calibrate", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    (tmp_path / "broken.json").write_text("{nope", encoding="utf-8")
    assert main(["calibrate", "--config", str(tmp_path / "broken.json")]) == EXIT_USAGE
    (tmp_path / "list.json").write_text("[1, 2]", encoding="utf-8")
    assert main(["calibrate", "--config", str(tmp_path / "list.json")]) == EXIT_USAGE
    capsys.readouterr()

    assert rc_of(_beta_config(schema_version=0)) == EXIT_USAGE
    assert rc_of(_beta_config(banana=1)) == EXIT_USAGE

    no_seed = _beta_config()
    del no_seed["seed"]
    path = _write(tmp_path, "noseed.json", no_seed)
    assert main(["calibrate", "--config", path]) == EXIT_USAGE
    assert "never auto-generated" in capsys.readouterr().err

    no_spec = _beta_config()
    del no_spec["spec"]
    assert rc_of(no_spec) == EXIT_USAGE

    assert rc_of(_beta_config(spec={"family": "cauchy"})) == EXIT_USAGE
    assert rc_of(_beta_config(spec={"family": "beta", "alpha": 3.0})) == EXIT_USAGE
    assert rc_of(
        _beta_config(spec={"family": "beta", "alpha": 3.0, "beta": 2.0, "mu": 1.0})
    ) == EXIT_USAGE
    # kappa needs alpha > beta: a recurrent law is a config error, not a crash
    assert rc_of(_beta_config(spec={"family": "beta", "alpha": 2.0, "beta": 2.0})) \
        == EXIT_USAGE


# ---------------------------------------------------------------------------
# validate

def test_validate_passes(capsys):
    assert main(["validate", "--cases", "40", "--seed", "5"]) == EXIT_PASS
    out = capsys.readouterr().out
    for op in ("exit_prob", "expected_hitting", "variance_hitting"):
        assert "PASS %s" % op in out or "PASS " + op in out


def test_validate_fault_injection_caught(capsys):
    rc = main(["validate", "--cases", "40", "--seed", "5", "--inject-fault", "1.05"])
    assert rc == EXIT_FAIL
    captured = capsys.readouterr()
    assert "FAIL variance_hitting" in captured.out
    assert "PASS exit_prob" in captured.out
    assert "PASS expected_hitting" in captured.out
    assert "variance_hitting" in captured.err


def test_validate_output_files(tmp_path, capsys):
    out_dir = tmp_path / "val"
    rc = main(["validate", "--cases", "25", "--seed", "5",
               "--output", str(out_dir), "--format", "csv"])
    assert rc == EXIT_PASS
    capsys.readouterr()
    summary = json.loads((out_dir / "validate.json").read_text())
    assert summary["passed"] is True
    assert summary["cases"] == 25
    assert summary["variance_hitting"]["passed"] is True
    rows = (out_dir / "validate.csv").read_text().splitlines()
    assert len(rows) == 26
    assert rows[0].startswith("case,")
    assert (out_dir / "validate.meta.json").exists()


def test_validate_config_errors(tmp_path, capsys):
    path = _write(tmp_path, "v.json", {"schema_version": SCHEMA_VERSION, "cases": 0})
    assert main(["validate", "--config", path]) == EXIT_USAGE
    path = _write(tmp_path, "v2.json",
                  {"schema_version": SCHEMA_VERSION, "walk_replicas": 4})
    assert main(["validate", "--config", path]) == EXIT_USAGE
    capsys.readouterr()


# ---------------------------------------------------------------------------
# experiment

def test_experiment_unknown_name(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", _beta_config())
    assert main(["experiment", "nonesuch", "--config", cfg]) == EXIT_USAGE
    assert "choose from" in capsys.readouterr().err


def test_experiment_bad_configs(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", _beta_config(route="sideways"))
    assert main(["experiment", "interarrival", "--config", cfg]) == EXIT_USAGE
    no_spec = _beta_config()
    del no_spec["spec"]
    cfg = _write(tmp_path, "c2.json", no_spec)
    assert main(["experiment", "interarrival", "--config", cfg]) == EXIT_USAGE
    cfg = _write(tmp_path, "c3.json", _beta_config(cases=9))
    assert main(["experiment", "interarrival", "--config", cfg]) == EXIT_USAGE
    capsys.readouterr()


def test_experiment_run_and_reproducibility(tmp_path, capsys):
    cfg = _write(
        tmp_path, "c.json", _beta_config(n_ladder=[200, 800], env_replicas=3)
    )
    blobs = []
    for sub in ("one", "two"):
        out_dir = tmp_path / sub
        rc = main(["experiment", "interarrival", "--config", cfg,
                   "--output", str(out_dir)])
        # tiny budget: the trend check legitimately fails, which must surface
        # as the failure exit code, not an exception
        assert rc == EXIT_FAIL
        captured = capsys.readouterr()
        assert "interarrival: fail" in captured.out
        assert "scaled-variance-decreasing" in captured.out
        blobs.append((out_dir / "interarrival.json").read_bytes())
        checks = (out_dir / "interarrival.checks.csv").read_text().splitlines()
        assert checks[0] == "name,kind,observed,bound,passed"
        assert len(checks) == 3
        assert b"runtime" not in blobs[-1]
        assert (out_dir / "interarrival.meta.json").exists()
    assert blobs[0] == blobs[1]
    payload = json.loads(blobs[0])
    assert payload["name"] == "interarrival"
    assert payload["verdict"] == "fail"


def test_experiment_worker_flag_invariance(tmp_path, capsys):
    cfg = _write(
        tmp_path, "c.json", _beta_config(n=48, env_replicas=4, walk_replicas=24)
    )
    rcs = []
    for sub, workers in (("w1", "1"), ("w2", "2")):
        out_dir = tmp_path / sub
        rcs.append(main(["experiment", "theorem-mixture", "--config", cfg,
                         "--workers", workers, "--output", str(out_dir)]))
        capsys.readouterr()
    assert rcs[0] == rcs[1]
    one = (tmp_path / "w1" / "theorem-mixture.json").read_bytes()
    two = (tmp_path / "w2" / "theorem-mixture.json").read_bytes()
    assert one == two


def test_experiment_discrete_warning(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", {
        "schema_version": SCHEMA_VERSION,
        "seed": 3,
        "spec": {"family": "tabulated", "omegas": [0.75, 0.25],
                 "weights": [0.6, 0.4]},
        "n_ladder": [200, 800],
        "env_replicas": 2,
    })
    rc = main(["experiment", "interarrival", "--config", cfg])
    captured = capsys.readouterr()
    assert rc in (EXIT_PASS, EXIT_FAIL)
    assert "discrete environment law" in captured.err
