"""CLI behaviour: exit codes, outputs, determinism, config round-trip."""

import json
import os

import numpy as np
import pytest

from sumhess.cli import (
    EXIT_CONE_BREACH,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PROPERTY,
    ConfigError,
    RunConfig,
    main,
    parse_rhs,
    thread_cap,
)

FAST_IDENTITIES = ["identities", "--samples", "60", "--seed", "3"]


class TestRunConfig:
    def test_round_trip_lossless(self):
        cfg = RunConfig(
            subcommand="estimate",
            n=3,
            k=2,
            alpha=0.30000000000000004,
            cells=17,
            rhs="3+0.1*g2",
            betas=(1.0, 1.1),
            seed=42,
            out="/tmp/somewhere",
        )
        assert RunConfig.parse(cfg.serialize()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.parse("nope=1\n")

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = RunConfig(subcommand="solve", cells=9, rhs="2")
        path = tmp_path / "run.cfg"
        path.write_text(cfg.serialize())
        rc = main(
            ["solve", "--config", str(path), "--cells", "11", "--out", str(tmp_path / "o")]
        )
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "o" / "solve_report.json").read_text())
        assert report["config"]["cells"] == 11
        assert report["config"]["rhs"] == "2"


class TestRhsParser:
    def check(self, text, x, u, p, expected):
        fn = parse_rhs(text)
        assert np.allclose(fn(x, u, p), expected)

    def test_constant(self):
        x = np.zeros((4, 2))
        self.check("3", x, np.zeros(4), np.zeros((4, 2)), 3.0)

    def test_gradient_square_and_sum(self):
        x = np.zeros((2, 2))
        p = np.array([[1.0, 2.0], [0.0, 3.0]])
        self.check("3+0.1*g2", x, np.zeros(2), p, 3.0 + 0.1 * np.array([5.0, 9.0]))

    def test_coordinates_and_u(self):
        x = np.array([[0.5, -1.0], [2.0, 0.25]])
        u = np.array([1.0, -2.0])
        self.check("x1*x2+u", x, u, np.zeros((2, 2)), x[:, 0] * x[:, 1] + u)
        self.check("x*y+u", x, u, np.zeros((2, 2)), x[:, 0] * x[:, 1] + u)

    def test_unary_minus_and_parens(self):
        x = np.zeros((1, 2))
        self.check("-(2-5)", x, np.zeros(1), np.zeros((1, 2)), 3.0)

    def test_unknown_symbol(self):
        with pytest.raises(ConfigError):
            parse_rhs("3+q")

    def test_trailing_garbage(self):
        with pytest.raises(ConfigError):
            parse_rhs("3 3")


class TestIdentitiesCommand:
    def test_default_suite_passes_with_eight_reports(self, tmp_path):
        rc = main(FAST_IDENTITIES + ["--out", str(tmp_path)])
        assert rc == EXIT_OK
        files = sorted(p for p in os.listdir(tmp_path) if p.endswith(".json"))
        assert len(files) == 8
        payload = json.loads((tmp_path / files[0]).read_text())
        assert payload["passed"] is True
        assert payload["config"]["seed"] == 3

    def test_byte_identical_given_seed(self, tmp_path):
        out = str(tmp_path)
        assert main(FAST_IDENTITIES + ["--out", out]) == EXIT_OK
        first = {f: (tmp_path / f).read_bytes() for f in os.listdir(out)}
        assert main(FAST_IDENTITIES + ["--out", out]) == EXIT_OK
        second = {f: (tmp_path / f).read_bytes() for f in os.listdir(out)}
        assert first == second

    def test_sign_flipped_oracle_fails(self, tmp_path):
        rc = main(FAST_IDENTITIES + ["--out", str(tmp_path), "--negate-oracle", "s_newton"])
        assert rc == EXIT_PROPERTY
        payload = json.loads((tmp_path / "s_newton.json").read_text())
        assert payload["passed"] is False
        assert payload["extras"]["negated_for_testing"] is True


class TestSolveCommand:
    def test_manufactured_regression(self, tmp_path):
        rc = main(
            ["solve", "--n", "2", "--k", "2", "--alpha", "1", "--rhs", "3",
             "--cells", "33", "--out", str(tmp_path)]
        )
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "solve_report.json").read_text())
        assert report["status"] == "converged"
        assert report["gradient_dependent_rhs"] is False
        assert (tmp_path / "solution.csv").exists()

    def test_negative_rhs_is_config_error(self, tmp_path):
        rc = main(["solve", "--rhs", "-1", "--out", str(tmp_path)])
        assert rc == EXIT_CONFIG

    def test_gradient_dependent_mode_flagged(self, tmp_path):
        rc = main(
            ["solve", "--rhs", "3+0.1*g2", "--cells", "17", "--out", str(tmp_path)]
        )
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "solve_report.json").read_text())
        assert report["gradient_dependent_rhs"] is True

    def test_cone_breach_exit_code(self, tmp_path):
        # n = k = 3 with zero trace has no admissible start once the grid
        # resolves the corners (documented limitation)
        rc = main(
            ["solve", "--n", "3", "--k", "3", "--rhs", "2", "--cells", "7",
             "--out", str(tmp_path)]
        )
        assert rc == EXIT_CONE_BREACH

    def test_bad_flags_are_config_errors(self, tmp_path):
        assert main(["solve", "--cells"]) == EXIT_CONFIG
        assert main(["frobnicate"]) == EXIT_CONFIG
        assert main(["solve", "--k", "5", "--n", "2", "--rhs", "3"]) == EXIT_CONFIG
        assert main(["solve", "--box", "2,1", "--rhs", "3"]) == EXIT_CONFIG


class TestEstimateCommand:
    def test_small_study(self, tmp_path):
        rc = main(
            ["estimate", "--rhs", "3+0.1*g2", "--cells", "9", "--betas", "1,1.1",
             "--levels", "2", "--out", str(tmp_path)]
        )
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "estimate_beta_1.0.json").read_text())
        assert payload["stable"] is True
        assert len(payload["per_refinement"]) == 2


class TestRigidityCommand:
    def test_default_passes(self, tmp_path):
        rc = main(["rigidity", "--samples", "500", "--cells", "9", "--out", str(tmp_path)])
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "rigidity_report.json").read_text())
        assert payload["entire_solution_sweep"]["passed"]
        assert payload["quadratic_classification"]["passed"]
        assert payload["scaling_invariance"]["passed"]


class TestThreadCap:
    def test_default_and_env(self, monkeypatch):
        monkeypatch.delenv("SUMHESS_THREADS", raising=False)
        assert thread_cap() == 1
        monkeypatch.setenv("SUMHESS_THREADS", "7")
        assert thread_cap() == 7
        monkeypatch.setenv("SUMHESS_THREADS", "junk")
        assert thread_cap() == 1
