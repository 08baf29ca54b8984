import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

import weakkam as wk
from weakkam.errors import ConfigError
from weakkam.harness import (
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFICATION,
    ExperimentConfig,
    cli_dispatch,
    run_pipeline,
)


def free_config(out, n=32, lambdas=(0.5, 0.25, 0.125), threads=1):
    return ExperimentConfig.from_dict(
        {
            "problem": {
                "family": "mechanical",
                "dim": 1,
                "sizes": [n],
                "potential": {"name": "zero"},
            },
            "schedule": {
                "lambdas": list(lambdas),
                "critical_lambdas": [0.2, 0.1, 0.05],
                "u0_targets": 8,
            },
            "output_dir": str(out),
            "threads": threads,
        }
    )


def write_config(path, cfg: ExperimentConfig):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh)
    return str(path)


def file_digests(root):
    out = {}
    for name in sorted(os.listdir(root)):
        if name == "timings.json":
            continue  # wall-clock measurements legitimately differ
        with open(os.path.join(root, name), "rb") as fh:
            out[name] = hashlib.sha256(fh.read()).hexdigest()
    return out


class TestConfig:
    def test_round_trip_unchanged(self, tmp_path):
        cfg = free_config(tmp_path)
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg

    def test_increasing_lambdas_rejected_before_compute(self, tmp_path):
        with pytest.raises(ConfigError):
            free_config(tmp_path, lambdas=(0.1, 0.2))

    def test_bad_tolerance_rejected(self, tmp_path):
        raw = free_config(tmp_path).to_dict()
        raw["schedule"]["tol_solve"] = -1.0
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_unknown_key_rejected(self, tmp_path):
        raw = free_config(tmp_path).to_dict()
        raw["schedule"]["mystery"] = 1
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_transport_needs_drift(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(
                {"problem": {"family": "transport", "dim": 1, "sizes": [8]}}
            )

    def test_tabulated_family_reads_csv(self, tmp_path):
        table = tmp_path / "pot.csv"
        with open(table, "w") as fh:
            fh.write("node,value\n")
            for i in range(8):
                fh.write(f"{i},{float(np.cos(2 * np.pi * i / 8))!r}\n")
        cfg = ExperimentConfig.from_dict(
            {
                "problem": {
                    "family": "tabulated",
                    "dim": 1,
                    "sizes": [8],
                    "table_path": str(table),
                },
                "schedule": {"lambdas": [0.4, 0.2], "critical_lambdas": [0.2, 0.1, 0.05]},
                "output_dir": str(tmp_path / "out"),
            }
        )
        report = run_pipeline(cfg)
        assert abs(report.c_cross - 1.0) <= 0.05


class TestPipeline:
    def test_free_particle_report(self, tmp_path):
        report = run_pipeline(free_config(tmp_path / "out"))
        assert report.passed
        assert abs(report.c_est) <= 1e-9
        assert abs(report.c_cross) <= 1e-15
        assert report.plateau == 0.0
        u0 = np.loadtxt(tmp_path / "out" / "u0.csv", delimiter=",", skiprows=1, usecols=1)
        np.testing.assert_array_equal(u0, 0.0)
        for name in (
            "report.json",
            "convergence.csv",
            "critical.csv",
            "barrier.bin",
            "barrier.json",
            "u0.csv",
            "mather_measure.csv",
            "aubry.csv",
            "timings.json",
        ):
            assert (tmp_path / "out" / name).exists(), name

    def test_convergence_csv_columns(self, tmp_path):
        run_pipeline(free_config(tmp_path / "out"))
        header = (tmp_path / "out" / "convergence.csv").read_text().splitlines()[0]
        assert header == "lambda,sup_error,min_neg_lambda_u,max_neg_lambda_u,lipschitz_quotient"

    def test_report_schema_golden(self, tmp_path):
        report = run_pipeline(free_config(tmp_path / "out"))
        with open(tmp_path / "out" / "report.json") as fh:
            payload = json.load(fh)
        assert payload["version"] == 1
        golden = os.path.join(os.path.dirname(__file__), "data", "report_schema.json")
        with open(golden) as fh:
            expected_keys = json.load(fh)
        assert sorted(payload.keys()) == expected_keys["top_level"]
        assert sorted(payload["bounds"].keys()) == expected_keys["bounds"]
        flag_names = [f["name"] for f in payload["flags"]]
        assert flag_names == expected_keys["flags"]
        assert report.passed is payload["passed"]

    def test_determinism_across_worker_counts(self, tmp_path):
        digests = []
        for threads in (1, 2, 8):
            out = tmp_path / f"t{threads}"
            run_pipeline(free_config(out, threads=threads))
            digests.append(file_digests(out))
        assert digests[0] == digests[1] == digests[2]

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_pipeline(free_config(a))
        run_pipeline(free_config(b))
        assert file_digests(a) == file_digests(b)

    def test_stage_label_on_failure(self, tmp_path):
        raw = free_config(tmp_path / "out").to_dict()
        raw["problem"]["potential"] = {"name": "cosine", "amplitudes": [1.0], "frequencies": [1.0]}
        raw["schedule"]["max_iter"] = 1
        with pytest.raises(wk.WeakKamError, match="stage critical"):
            run_pipeline(ExperimentConfig.from_dict(raw))


class TestCli:
    def test_critical_exit_zero(self, tmp_path, capsys):
        path = write_config(tmp_path / "cfg.json", free_config(tmp_path / "out"))
        assert cli_dispatch(["critical", "--config", path]) == EXIT_OK
        out = capsys.readouterr().out
        assert "c_est=" in out

    def test_converge_writes_artifacts(self, tmp_path):
        path = write_config(tmp_path / "cfg.json", free_config(tmp_path / "out"))
        assert cli_dispatch(["converge", "--config", path]) == EXIT_OK
        assert (tmp_path / "out" / "report.json").exists()
        assert (tmp_path / "out" / "convergence.csv").exists()

    def test_unknown_flag_is_usage_error(self, tmp_path):
        path = write_config(tmp_path / "cfg.json", free_config(tmp_path / "out"))
        proc = subprocess.run(
            [sys.executable, "-m", "weakkam", "critical", "--config", path, "--nope"],
            capture_output=True,
        )
        assert proc.returncode == EXIT_USAGE

    def test_unknown_subcommand_is_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "weakkam", "frobnicate", "--config", "x"],
            capture_output=True,
        )
        assert proc.returncode == EXIT_USAGE

    def test_missing_config_is_runtime_error(self, tmp_path):
        assert cli_dispatch(["critical", "--config", str(tmp_path / "nope.json")]) == 1

    def test_discounted_writes_solution_and_trajectory(self, tmp_path):
        path = write_config(
            tmp_path / "cfg.json", free_config(tmp_path / "out", lambdas=(0.25,))
        )
        assert cli_dispatch(["discounted", "--config", path, "--lambda", "0.25"]) == EXIT_OK
        assert (tmp_path / "out" / "discounted_0.25.bin").exists()
        assert (tmp_path / "out" / "discounted_0.25.json").exists()
        lines = (tmp_path / "out" / "trajectory_0.25.csv").read_text().splitlines()
        assert lines[0] == "step,node,offset,speed"
        step, node, offset, speed = lines[1].split(",")
        assert step == "0" and float(speed) == 0.0  # free particle stays put

    def test_verify_flags_corrupted_u0(self, tmp_path):
        path = write_config(tmp_path / "cfg.json", free_config(tmp_path / "out"))
        good = tmp_path / "good.bin"
        bad = tmp_path / "bad.bin"
        np.zeros(32).tofile(good)
        (np.arange(32.0) ** 2).tofile(bad)
        assert cli_dispatch(["verify", "--config", path, "--u0", str(good)]) == EXIT_OK
        assert cli_dispatch(["verify", "--config", path, "--u0", str(bad)]) == EXIT_VERIFICATION

    def test_grid_and_out_overrides(self, tmp_path):
        path = write_config(tmp_path / "cfg.json", free_config(tmp_path / "ignored", n=32))
        out = tmp_path / "redirected"
        assert (
            cli_dispatch(
                ["converge", "--config", path, "--grid", "16", "--out", str(out)]
            )
            == EXIT_OK
        )
        with open(out / "report.json") as fh:
            payload = json.load(fh)
        assert payload["config"]["problem"]["sizes"] == [16]

    def test_threads_env_var(self, tmp_path, monkeypatch):
        path = write_config(tmp_path / "cfg.json", free_config(tmp_path / "out"))
        monkeypatch.setenv("WEAKKAM_THREADS", "3")
        assert cli_dispatch(["converge", "--config", path]) == EXIT_OK
        assert (tmp_path / "out" / "report.json").exists()
