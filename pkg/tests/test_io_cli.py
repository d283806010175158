"""Configuration parsing, checkpoint format, CSV/SVG output, CLI contract."""

import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from el_euler.checkpoint import is_checkpoint, load_checkpoint, save_checkpoint
from el_euler.config import SolverConfig, load_config, parse_config_text
from el_euler.diagnostics import random_field
from el_euler.errors import ConfigError
from el_euler.reporting import CSV_COLUMNS, svg_line_plot, write_csv
from el_euler.spectral import WaveGrid


def run_cli(*args, env=None):
    return subprocess.run(
        [sys.executable, "-m", "el_euler.cli", *args],
        capture_output=True,
        text=True,
        env=env,
    )


def write_cfg(path, **overrides):
    base = {
        "n": 2, "N": 32, "s": 3.0, "scheme": "u_scheme", "dt": 2e-3,
        "total_T": 0.1, "window_T": 0.05, "fp_tol": 1e-9, "min_window": 2e-3,
        "max_iters": 40, "initial_condition": "shear", "seed": 0,
    }
    base.update(overrides)
    text = "\n".join(f"{k} = {v}" for k, v in base.items())
    Path(path).write_text(text + "\n")
    return path


class TestConfig:
    def test_defaults_and_comments(self):
        cfg = parse_config_text("# comment\nN = 64\n\ns = 3.0  # trailing\n")
        assert cfg.N == 64 and cfg.n == 2 and cfg.scheme == "u_scheme"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown configuration key"):
            parse_config_text("wavenumbers = 3\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("N = 32\nN = 64\n")

    def test_sobolev_bound_message(self):
        with pytest.raises(ConfigError, match=r"s must exceed n/2 \+ 1 = 2"):
            parse_config_text("s = 1.5\n")

    def test_a_scheme_integer_s(self):
        with pytest.raises(ConfigError, match="integer"):
            parse_config_text("scheme = a_scheme\ns = 3.5\n")

    def test_classical_needs_2d(self):
        with pytest.raises(ConfigError):
            parse_config_text("scheme = classical_oracle\nn = 3\ns = 4.0\n")

    def test_window_multiple_of_dt(self):
        with pytest.raises(ConfigError, match="integer multiple"):
            parse_config_text("dt = 3e-3\nwindow_T = 0.01\ntotal_T = 0.25\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, grid32):
        fields = {
            "u0": random_field(grid32, 1),
            "u": random_field(grid32, 2),
            "eta": random_field(grid32, 3),
            "v": random_field(grid32, 4),
        }
        path = tmp_path / "state.elck"
        save_checkpoint(path, 3.0, 0.125, fields)
        chk = load_checkpoint(path)
        assert chk.dim == 2 and chk.n_modes == 32
        assert chk.s == 3.0 and chk.time == 0.125
        for name, f in fields.items():
            assert np.array_equal(chk.fields[name].coeffs, f.coeffs)

    def test_magic_verified(self, tmp_path):
        bad = tmp_path / "junk.elck"
        bad.write_bytes(b"NOPE" + b"\x00" * 64)
        assert not is_checkpoint(bad)
        with pytest.raises(ConfigError, match="magic"):
            load_checkpoint(bad)

    def test_truncation_detected(self, tmp_path, grid16):
        path = tmp_path / "state.elck"
        save_checkpoint(path, 3.0, 0.0, {"u0": random_field(grid16, 5)})
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(ConfigError, match="truncated"):
            load_checkpoint(path)


class TestReporting:
    def test_csv_schema(self, tmp_path):
        rows = [{c: float(i) for c in CSV_COLUMNS} for i in range(3)]
        path = tmp_path / "t.csv"
        write_csv(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        for line in lines[1:]:
            values = line.split(",")
            assert len(values) == len(CSV_COLUMNS)
            for v in values:
                float(v)  # numeric-only cells, no quoting needed

    def test_svg_is_valid_xml(self, tmp_path):
        path = tmp_path / "p.svg"
        svg_line_plot(path, [0.0, 0.5, 1.0], [1.0, float("nan"), 3.0], "energy")
        root = ET.parse(path).getroot()
        assert root.tag.endswith("svg")


class TestCLI:
    def test_run_shear_regression(self, tmp_path):
        cfg = write_cfg(tmp_path / "run.cfg", output_dir=tmp_path / "out")
        result = run_cli("run", str(cfg))
        assert result.returncode == 0, result.stderr
        csv = (tmp_path / "out" / "timeseries.csv").read_text().splitlines()
        assert csv[0] == ",".join(CSV_COLUMNS)
        cols = {name: i for i, name in enumerate(CSV_COLUMNS)}
        for line in csv[1:]:
            vals = line.split(",")
            for name in ("div_residual", "det_residual", "weber_residual", "classical_residual"):
                assert float(vals[cols[name]]) < 1e-5
        for column in CSV_COLUMNS[1:]:
            assert (tmp_path / "out" / f"{column}.svg").exists()
        assert (tmp_path / "out" / "checkpoint_t0.100000.elck").exists()

    def test_config_error_exit_1(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("s = 1.5\n")
        result = run_cli("run", str(cfg))
        assert result.returncode == 1
        assert "kind=config" in result.stderr
        assert "s must exceed n/2 + 1 = 2" in result.stderr
        assert len(result.stderr.strip().splitlines()) == 1

    def test_solver_error_exit_2(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "cfl.cfg", dt=0.25, total_T=0.5, window_T=0.25,
            min_window=0.25, output_dir=tmp_path / "out",
        )
        result = run_cli("run", str(cfg))
        assert result.returncode == 2
        assert "kind=solver" in result.stderr

    def test_io_error_exit_3(self, tmp_path):
        cfg = write_cfg(tmp_path / "io.cfg", output_dir="/dev/null/x")
        result = run_cli("run", str(cfg))
        assert result.returncode == 3
        assert "kind=io" in result.stderr

    def test_resume_rows_bit_exact(self, tmp_path):
        out_full = tmp_path / "full"
        cfg_full = write_cfg(tmp_path / "full.cfg", output_dir=out_full)
        assert run_cli("run", str(cfg_full)).returncode == 0
        out_res = tmp_path / "res"
        cfg_res = write_cfg(
            tmp_path / "res.cfg",
            output_dir=out_res,
            initial_condition=out_full / "checkpoint_t0.050000.elck",
        )
        assert run_cli("run", str(cfg_res)).returncode == 0
        full_rows = (out_full / "timeseries.csv").read_text().splitlines()
        res_rows = (out_res / "timeseries.csv").read_text().splitlines()
        tail = [r for r in full_rows[1:] if float(r.split(",")[0]) > 0.05 + 1e-12]
        assert tail == res_rows[1:]

    def test_thread_env_accepted(self, tmp_path):
        import os

        cfg = write_cfg(tmp_path / "thr.cfg", total_T=0.02, window_T=0.02,
                        output_dir=tmp_path / "out")
        env = dict(os.environ, EL_EULER_THREADS="1")
        assert run_cli("run", str(cfg), env=env).returncode == 0

    def test_probe_writes_constants_report(self, tmp_path):
        cfg = write_cfg(tmp_path / "probe.cfg", N=16, output_dir=tmp_path / "out",
                        initial_condition="taylor_green")
        result = run_cli("probe", str(cfg))
        assert result.returncode == 0, result.stderr
        payload = json.loads((tmp_path / "out" / "constants_report.json").read_text())
        for key in ("c1", "c2", "c3", "c3_prime", "c4", "c5", "c6", "c_lip"):
            assert payload["constants"][key] > 0
        assert payload["theorem_value"] > 0

    def test_verify_detects_injected_bad_constants(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(
            tmp_path / "verify.cfg", N=16, total_T=0.05, window_T=0.05,
            output_dir=out, initial_condition="taylor_green",
        )
        assert run_cli("probe", str(cfg)).returncode == 0
        report = json.loads((out / "constants_report.json").read_text())
        report["constants"]["c1"] = 1e-9
        (out / "constants_report.json").write_text(json.dumps(report))
        result = run_cli("verify", str(cfg))
        assert result.returncode != 0
        assert "advection_hs" in result.stdout

    def test_classical_oracle_scheme(self, tmp_path):
        cfg = write_cfg(
            tmp_path / "cls.cfg", scheme="classical_oracle", total_T=0.05,
            window_T=0.05, initial_condition="taylor_green", output_dir=tmp_path / "out",
        )
        result = run_cli("run", str(cfg))
        assert result.returncode == 0, result.stderr
        lines = (tmp_path / "out" / "timeseries.csv").read_text().splitlines()
        first = dict(zip(CSV_COLUMNS, lines[1].split(",")))
        assert first["eta_hs"] == "nan"
        assert float(first["energy"]) > 0
