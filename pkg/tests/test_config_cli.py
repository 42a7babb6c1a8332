"""Experiment files and the command-line front end."""

import csv
import json

import numpy as np
import pytest

from critflow import ParseError, ValidationError, acceptance, cli
from critflow.acceptance import CriterionResult
from critflow.config import DEFAULTS, parse_config, parse_text

EQUILIBRIUM = """
[grid]
n = 16
[data]
a_norm = 0
u_norm = 0
[run]
T = 0.03
dt = 0.01
save_every = 1
"""

SMALL = """
[experiment]
seed = 4
[grid]
n = 16
[physics]
gamma = 1.4
[run]
T = 0.02
dt = 0.005
save_every = 2
"""


class TestParse:
    def test_minimal_file_defaults(self):
        spec = parse_text("", "simulate")
        assert spec.get("indices", "alpha") == pytest.approx(8 / 7)
        assert spec.get("monitor", "c") == 0.01
        assert spec.get("run", "vacuum_floor") == 0.1
        assert spec.seed is None and spec.suite == "all"

    def test_values_typed(self):
        spec = parse_text("[grid]\nn = 32\n[physics]\nmu = 2\n", "simulate")
        assert spec.get("grid", "n") == 32 and isinstance(spec.get("grid", "n"), int)
        assert spec.get("physics", "mu") == 2.0

    def test_p1_above_p(self):
        with pytest.raises(ValidationError, match="1 ≤ p₁ ≤ p"):
            parse_text("[indices]\np = 2\np1 = 3\n")

    def test_unknown_key_reports_line(self):
        with pytest.raises(ParseError) as info:
            parse_text("[grid]\nn = 32\n\nfoo = 1\n")
        assert info.value.line == 4 and info.value.key == "foo"

    def test_unknown_section(self):
        with pytest.raises(ParseError) as info:
            parse_text("[grid]\nn = 32\n[extras]\nx = 1\n")
        assert info.value.line == 3

    def test_bad_number(self):
        with pytest.raises(ParseError) as info:
            parse_text("[run]\ndt = fast\n")
        assert info.value.key == "dt" and info.value.line == 2

    def test_key_outside_section(self):
        with pytest.raises(ParseError):
            parse_text("n = 32\n")

    def test_duplicate_key(self):
        with pytest.raises(ParseError):
            parse_text("[grid]\nn = 32\nn = 64\n")

    def test_every_violation_listed(self):
        with pytest.raises(ValidationError) as info:
            parse_text("[grid]\nn = 12\n[physics]\nmu = -1\nK = 0\n")
        text = str(info.value)
        for gate in ("power of two", "μ > 0", "K > 0"):
            assert gate in text

    def test_soft_gates_become_warnings(self):
        spec = parse_text("[grid]\ndim = 3\nn = 8\n[indices]\np = 7\np1 = 3\n[physics]\ngamma = 1.4\n")
        assert "p ≤ 2N" in spec.warnings

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            parse_config(tmp_path / "absent.ini")

    def test_unknown_mode(self):
        with pytest.raises(ParseError):
            parse_text("", "explore")

    def test_solver_config_equilibrium(self):
        cfg = parse_text(EQUILIBRIUM).solver_config()
        assert np.all(cfg.rho0.data == 1.0) and np.all(cfg.u0.data == 0.0)
        assert cfg.T == 0.03 and cfg.grid.n == 16

    def test_solver_config_small_data_seeded(self):
        a = parse_text(SMALL).solver_config()
        b = parse_text(SMALL).solver_config()
        np.testing.assert_array_equal(a.rho0.data, b.rho0.data)
        assert a.seed == 4 and a.law.gamma == 1.4

    def test_defaults_table_covers_documented_sections(self):
        assert set(DEFAULTS) == {"experiment", "grid", "physics", "indices", "run", "data", "monitor", "probe"}


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestVerify:
    def test_empty_suite_header_only(self, tmp_path):
        code = cli.main(["verify", "--suite", "none", "--output", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "verify" / "summary.csv").read_text() == "number,criterion,metric,value,seed\n"
        assert (tmp_path / "verify" / "constants.csv").read_text() == "criterion,inequality,C,grid_sizes,seed\n"

    def test_reconstruction_passes_and_records_seed(self, tmp_path):
        assert cli.main(["verify", "--suite", "reconstruction", "--output", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "verify" / "summary.csv")
        assert rows[1][:4] == ["1", "reconstruction", "passed", "1"]
        assert {r[4] for r in rows[1:]} == {"1"}
        manifest = json.loads((tmp_path / "verify" / "manifest.json").read_text())
        assert manifest["passed"] and manifest["failures"] == []

    def test_byte_identical_reruns(self, tmp_path):
        outs = []
        for i in range(2):
            out = tmp_path / str(i)
            assert cli.main(["verify", "--suite", "bony", "--seed", "9", "--output", str(out)]) == 0
            outs.append((out / "verify" / "summary.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_constants_table(self, tmp_path):
        assert cli.main(["verify", "--suite", "lame-heat", "--output", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "verify" / "constants.csv")
        assert rows[1][:2] == ["lame-heat", "lame-heat-kappa"] and rows[1][3] == "64"

    def test_failed_assertion_exit_one(self, tmp_path, monkeypatch):
        def broken(seed: int = 0):
            res = CriterionResult(99, "broken")
            res.gate("always fails", False)
            return res
        monkeypatch.setitem(acceptance.CRITERIA, "broken", broken)
        assert cli.main(["verify", "--suite", "broken", "--output", str(tmp_path)]) == 1
        manifest = json.loads((tmp_path / "verify" / "manifest.json").read_text())
        assert not manifest["passed"] and manifest["failures"] == ["broken: always fails"]

    def test_unknown_suite_is_usage_error(self, tmp_path):
        assert cli.main(["verify", "--suite", "nothing", "--output", str(tmp_path)]) == 2

    def test_suite_from_config(self, tmp_path):
        cfg = write(tmp_path, "[experiment]\nsuite = none\n")
        assert cli.main(["verify", "--config", cfg, "--output", str(tmp_path)]) == 0


class TestSimulate:
    def test_equilibrium_all_zero_norms(self, tmp_path):
        cfg = write(tmp_path, EQUILIBRIUM)
        assert cli.main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == 0
        out = tmp_path / "simulate"
        rows = read_csv(out / "norms.csv")
        assert rows[0] == ["t", "a", "u", "v1", "mass"] and len(rows) == 5
        assert all(float(x) == 0 for r in rows[1:] for x in r[1:4])
        for name in ("monitor.csv", "energy.csv", "side_conditions.csv", "rho_final.bin", "u_final.bin"):
            assert (out / name).exists()
        assert json.loads((out / "manifest.json").read_text())["passed"]

    def test_output_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        cfg = write(tmp_path, EQUILIBRIUM)
        assert cli.main(["simulate", "--config", cfg]) == 0
        assert (tmp_path / "env" / "simulate" / "norms.csv").exists()

    def test_deterministic_reports(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        blobs = []
        for i in range(2):
            assert cli.main(["simulate", "--config", cfg, "--output", str(tmp_path / str(i))]) == 0
            out = tmp_path / str(i) / "simulate"
            blobs.append([(out / n).read_bytes() for n in ("norms.csv", "monitor.csv", "energy.csv")])
        assert blobs[0] == blobs[1]

    def test_solver_abort_fails(self, tmp_path):
        # a velocity far beyond the CFL limit stops the run before its first step
        cfg = write(tmp_path, "[grid]\nn = 16\n[data]\na_norm = 0.5\nu_norm = 20\n[run]\nT = 0.2\ndt = 0.02\n")
        assert cli.main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == 1
        manifest = json.loads((tmp_path / "simulate" / "manifest.json").read_text())
        assert not manifest["passed"]
        assert manifest["failures"][0].startswith("run completes")

    def test_missing_config_usage(self, tmp_path):
        assert cli.main(["simulate", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_parse_error_usage(self, tmp_path):
        cfg = write(tmp_path, "[grid]\nfoo = 1\n")
        assert cli.main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == 2

    def test_missing_argument(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["simulate"])
        assert info.value.code == 2


class TestProbe:
    def test_zero_delta_zero_report(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert cli.main(["probe", "--config", cfg, "--delta", "0", "--output", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "probe" / "probe.csv")
        assert rows[0] == ["t", "da", "dv1", "divergence", "growth"]
        assert all(float(r[3]) == 0 for r in rows[1:])

    def test_positive_delta(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert cli.main(["probe", "--config", cfg, "--delta", "1e-4", "--output", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "probe" / "probe.csv")
        assert float(rows[-1][3]) > 0

    def test_nonfinite_delta(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert cli.main(["probe", "--config", cfg, "--delta", "nan", "--output", str(tmp_path)]) == 2
