import json
import logging
import logging.handlers
from pathlib import Path
from types import SimpleNamespace

import pandas as pd
import pytest

from src import analytics, dists
from src.cli import build_run_config, main, parse_arguments
from src.errors import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_RESOURCE_CAP
from src.utils import setup_logging

QUIET = ["--log-dir", ""]


def sample_args(output, *extra):
    return ["sample", "--arrival", "exp:3", "--service", "exp:2", "--servers", "2",
            "--reps", "3", "--seed", "7", "--output", str(output), *QUIET, *extra]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for variable in ("SAMPLER_SEED", "SAMPLER_THREADS", "SAMPLER_LOG_LEVEL"):
        monkeypatch.delenv(variable, raising=False)


def test_sample_writes_json_lines(tmp_path):
    output = tmp_path / "samples.jsonl"
    assert main(sample_args(output)) == EXIT_OK
    records = [json.loads(line) for line in output.read_text(encoding="utf-8").splitlines()]
    assert [r["replication"] for r in records] == [0, 1, 2]
    assert all(r["schema_version"] == 1 for r in records)
    assert all(len(r["R0"]) == 2 for r in records)


def test_sample_output_is_byte_identical(tmp_path):
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(sample_args(first, "--want-w1")) == EXIT_OK
    assert main(sample_args(second, "--want-w1")) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_sample_csv_output(tmp_path):
    output = tmp_path / "samples.csv"
    assert main(sample_args(output, "--format", "csv")) == EXIT_OK
    frame = pd.read_csv(output)
    assert len(frame) == 3
    for column in ("schema_version", "Q0", "R0", "E0", "T_coalesce", "renewals_0"):
        assert column in frame.columns


def test_summary_goes_to_stdout_when_output_is_a_file(tmp_path, capsys):
    assert main(sample_args(tmp_path / "s.jsonl")) == EXIT_OK
    assert "E[T] coalescence" in capsys.readouterr().out


def test_unstable_system_exits_with_config_code(tmp_path, capsys):
    args = ["sample", "--arrival", "exp:5", "--service", "exp:2", "--servers", "2",
            "--output", str(tmp_path / "x.jsonl"), *QUIET]
    assert main(args) == EXIT_CONFIG
    assert "ρ ≥ 1" in capsys.readouterr().err
    assert not (tmp_path / "x.jsonl").exists()


@pytest.mark.parametrize("flag", ["gamma:2", "det:1", "unif:0,1"])
def test_unsupported_laws_exit_with_config_code(flag, tmp_path):
    args = ["sample", "--arrival", flag, "--service", "exp:9", "--servers", "1",
            "--output", str(tmp_path / "x.jsonl"), *QUIET]
    assert main(args) == EXIT_CONFIG


def test_validate_mmc_requires_exponential_laws(tmp_path):
    args = ["validate-mmc", "--arrival", "erlang:2,6", "--service", "exp:2", "--servers", "2",
            "--output", str(tmp_path / "x.json"), *QUIET]
    assert main(args) == EXIT_CONFIG


def test_config_file_environment_and_flags_precedence(tmp_path, monkeypatch):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({
        "_comment": "test",
        "sampler": {"seed": 5, "servers": 3, "service": {"kind": "erlang", "shape": 2, "rate": 4.0}},
        "output": {"format": "csv"},
    }), encoding="utf-8")

    config = build_run_config(parse_arguments(["sample", "--config", str(config_file)]))
    assert config.seed == 5
    assert config.servers == 3
    assert config.service == dists.erlang(2, 4.0)
    assert config.format == "csv"

    monkeypatch.setenv("SAMPLER_SEED", "9")
    monkeypatch.setenv("SAMPLER_THREADS", "2")
    config = build_run_config(parse_arguments(["sample", "--config", str(config_file)]))
    assert config.seed == 9
    assert config.threads == 2

    config = build_run_config(parse_arguments(["sample", "--config", str(config_file), "--seed", "11",
                                               "--service", "exp:2"]))
    assert config.seed == 11
    assert config.service == dists.exponential(2.0)


def test_unknown_config_key_exits_with_config_code(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({"sampler": {"seeds": 3}}), encoding="utf-8")
    assert main(["sample", "--config", str(config_file), *QUIET]) == EXIT_CONFIG


def test_missing_config_file_exits_with_config_code(tmp_path):
    assert main(["sample", "--config", str(tmp_path / "absent.json"), *QUIET]) == EXIT_CONFIG


def test_invalid_environment_value(monkeypatch):
    monkeypatch.setenv("SAMPLER_SEED", "abc")
    assert main(["sample", *QUIET]) == EXIT_CONFIG


def test_study_commands_use_study_settings():
    config = build_run_config(parse_arguments(["coalesce-study", "--regime", "QED", "--scales", "100,500"]))
    assert config.regime == "QED"
    assert config.scales == [100, 500]
    assert config.mu == 1.0

    config = build_run_config(parse_arguments(["complexity-study", "--lams", "5,6"]))
    assert config.lams == [5.0, 6.0]
    assert config.mu == 5.0
    assert config.servers == 2


def test_complexity_study_writes_metadata(tmp_path):
    output = tmp_path / "complexity.csv"
    args = ["complexity-study", "--lams", "3", "--reps", "2", "--seed", "1", "--format", "csv",
            "--output", str(output), *QUIET]
    assert main(args) == EXIT_OK
    frame = pd.read_csv(output)
    assert list(frame["lam"]) == [3.0]
    meta = json.loads(output.with_suffix(".meta.json").read_text(encoding="utf-8"))
    assert meta["seed"] == 1
    assert "t_k" in meta["note"]


def test_coalesce_study_command(tmp_path):
    output = tmp_path / "coalesce.json"
    args = ["coalesce-study", "--scales", "20", "--reps", "10", "--output", str(output), *QUIET]
    assert main(args) == EXIT_OK
    record = json.loads(output.read_text(encoding="utf-8").splitlines()[0])
    assert record["c"] == 24
    assert record["schema_version"] == 1


@pytest.mark.slow
def test_selftest_passes(tmp_path):
    output = tmp_path / "selftest.json"
    assert main(["selftest", "--seeds", "1,2", "--output", str(output), *QUIET]) == EXIT_OK
    rows = [json.loads(line) for line in output.read_text(encoding="utf-8").splitlines()]
    assert {r["status"] for r in rows} == {"ok"}


@pytest.mark.slow
def test_selftest_default_covers_ten_seeds(tmp_path):
    output = tmp_path / "selftest.json"
    assert main(["selftest", "--output", str(output), *QUIET]) == EXIT_OK
    rows = [json.loads(line) for line in output.read_text(encoding="utf-8").splitlines()]
    assert {r["status"] for r in rows} == {"ok"}
    assert {r["seed"] for r in rows} == set(range(1, 11))


def test_selftest_default_seeds():
    assert build_run_config(parse_arguments(["selftest"])).seeds == list(range(1, 11))


def test_validate_mmc_rejection_exits_with_acceptance_code(tmp_path, monkeypatch):
    table = pd.DataFrame({"n": ["0", "1"], "observed": [10, 0], "expected": [5.0, 5.0]})
    samples = [SimpleNamespace(coalescence_time=t) for t in (1.0, 2.0)]
    seen = {}

    def rejected(params, reps, seed, **kwargs):
        seen.update(kwargs)
        return analytics.GofResult(statistic=10.0, p_value=1e-6, dof=1, table=table), samples

    monkeypatch.setattr(analytics, "validate_mmc", rejected)
    args = ["validate-mmc", "--arrival", "exp:3", "--service", "exp:2", "--servers", "2", "--verify",
            "--output", str(tmp_path / "gof.json"), *QUIET]
    assert main(args) == EXIT_ACCEPTANCE
    assert seen["verify"] is True


def test_coalesce_study_rejection_exits_with_acceptance_code(tmp_path, monkeypatch):
    frame = pd.DataFrame([{
        "regime": "QD", "s": 100, "c": 120, "mean_T": 7.5, "ci_low": 7.4, "ci_high": 7.6,
        "published_ci_low": 6.38, "published_ci_high": 6.46, "relative_deviation": 0.17, "passed": False,
    }])
    monkeypatch.setattr(analytics, "coalescence_study", lambda *args, **kwargs: frame)
    args = ["coalesce-study", "--scales", "100", "--reps", "10", "--output", str(tmp_path / "c.json"), *QUIET]
    assert main(args) == EXIT_ACCEPTANCE


def test_resource_cap_logs_diagnostics(tmp_path, capsys):
    args = sample_args(tmp_path / "out.json", "--t0", "1e-7", "--max-doublings", "1")
    assert main(args) == EXIT_RESOURCE_CAP
    err = capsys.readouterr().err
    assert "Diagnostics" in err
    assert '"replication": 0' in err


def test_log_files_rotation_settings(tmp_path):
    setup_logging("DEBUG", str(tmp_path))
    try:
        kept = {Path(h.baseFilename).name: h.backupCount
                for h in logging.getLogger().handlers if isinstance(h, logging.handlers.TimedRotatingFileHandler)}
        assert kept == {"sampler.log": 15, "errors.log": 15, "debug.log": 7}
    finally:
        setup_logging("INFO", None)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as excinfo:
        parse_arguments(["--version"])
    assert excinfo.value.code == 0
    assert "1.0.0" in capsys.readouterr().out
