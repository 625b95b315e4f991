import csv
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from drpfolio.cli import main
from drpfolio.data import ScenarioSet, save_returns


@pytest.fixture
def runner():
    return CliRunner()


def _write_returns(path, seed=0, s=10, n=8):
    rng = np.random.default_rng(seed)
    mu = rng.uniform(-0.002, 0.012, size=n)
    rows = mu + rng.normal(0, 0.03, size=(s, n))
    save_returns(ScenarioSet.from_returns(rows), path)
    return path


def _write_caps(path, n=8):
    with open(path, "w") as fh:
        fh.write("asset,cap\n")
        for j in range(n):
            fh.write(f"a{j},{float(j + 1)}\n")
    return path


class TestSolve:
    def test_exact_solve_writes_json(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        result = runner.invoke(main, [
            "solve", "--data", str(data), "--k", "5", "--algo", "exact",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "solve.json").read_text())
        assert payload["evaluations"] == 56          # C(8, 5)
        assert len(payload["weights"]) == 8
        assert sum(payload["weights"]) == pytest.approx(1.0, abs=1e-9)
        assert len(payload["support"]) == 5
        assert payload["dual"]["lam"] > 0
        assert payload["config"]["k"] == 5
        assert payload["config"]["algo"] == "exact"
        assert "elapsed_seconds" in payload
        # stdout carries the same payload for piping
        assert json.loads(result.output)["evaluations"] == 56

    def test_missing_k_is_config_error(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        result = runner.invoke(main, ["solve", "--data", str(data)])
        assert result.exit_code == 2
        assert "--k" in result.output

    def test_missing_data_file(self, runner, tmp_path):
        result = runner.invoke(main, [
            "solve", "--data", str(tmp_path / "absent.csv"), "--k", "2"])
        assert result.exit_code == 4

    def test_negative_theta_rejected(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        result = runner.invoke(main, [
            "solve", "--data", str(data), "--k", "2", "--theta", "-0.1"])
        assert result.exit_code == 2

    def test_unknown_algorithm_rejected(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        result = runner.invoke(main, [
            "solve", "--data", str(data), "--k", "2", "--algo", "genetic"])
        assert result.exit_code == 2

    def test_k_beyond_universe_rejected(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        result = runner.invoke(main, [
            "solve", "--data", str(data), "--k", "99"])
        assert result.exit_code == 2

    def test_yaml_config_with_flag_precedence(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        cfgfile = tmp_path / "run.yaml"
        cfgfile.write_text(f"data: {data}\nk: 3\nalgo: exact\ntheta: 0.001\n")
        r1 = runner.invoke(main, ["solve", "--config", str(cfgfile),
                                  "--out", str(tmp_path / "a")])
        assert r1.exit_code == 0, r1.output
        p1 = json.loads((tmp_path / "a" / "solve.json").read_text())
        assert p1["config"]["k"] == 3
        assert p1["config"]["theta"] == 0.001
        r2 = runner.invoke(main, ["solve", "--config", str(cfgfile),
                                  "--k", "2", "--out", str(tmp_path / "b")])
        assert r2.exit_code == 0
        p2 = json.loads((tmp_path / "b" / "solve.json").read_text())
        assert p2["config"]["k"] == 2

    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(main, [
            "solve", "--config", str(tmp_path / "none.yaml"), "--k", "2"])
        assert result.exit_code == 4


class TestSensitivity:
    def test_grid_product(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=6)
        result = runner.invoke(main, [
            "sensitivity", "--data", str(data), "--k", "2",
            "--algo", "exact",
            "--grid", "theta=0.001,0.004",
            "--grid", "phi=1,2",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "sensitivity.csv").read_text().splitlines()
        assert lines[0].startswith("# config: ")
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 4
        assert all(row["error"] == "" for row in rows)
        assert {row["theta"] for row in rows} == {"0.001", "0.004"}
        # objective strictly falls when theta rises, phi fixed
        by_phi = {}
        for row in rows:
            by_phi.setdefault(row["phi"], {})[row["theta"]] = float(
                row["objective"])
        for vals in by_phi.values():
            assert vals["0.004"] < vals["0.001"]

    def test_linspace_grid_syntax(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=5)
        result = runner.invoke(main, [
            "sensitivity", "--data", str(data), "--k", "2",
            "--algo", "exact", "--grid", "theta=0.001:0.005:3",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "sensitivity.csv").read_text().splitlines()
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 3

    def test_unknown_parameter_rejected(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        result = runner.invoke(main, [
            "sensitivity", "--data", str(data), "--k", "2",
            "--grid", "volatility=1,2"])
        assert result.exit_code == 2

    def test_requires_a_grid(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv")
        result = runner.invoke(main, [
            "sensitivity", "--data", str(data), "--k", "2"])
        assert result.exit_code == 2


class TestBench:
    def test_three_algorithms_per_scale(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=6)
        result = runner.invoke(main, [
            "bench", "--data", str(data), "--k", "2",
            "--theta-scales", "1,2", "--iters", "40",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "bench.csv").read_text().splitlines()
        assert lines[0].startswith("# config: ")
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 6
        assert [r["algo"] for r in rows] == ["exact", "tabu", "hybrid"] * 2
        for row in rows:
            if row["algo"] != "exact" and row["gap"] != "":
                assert float(row["gap"]) >= -1e-9
        # heuristics never report more evaluations than enumeration
        assert all(int(r["evaluations"]) <= 15 for r in rows)

    def test_exact_skipped_beyond_cap(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", s=8, n=40)
        result = runner.invoke(main, [
            "bench", "--data", str(data), "--k", "5",
            "--theta-scales", "1", "--iters", "10",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert "exact enumeration skipped" in result.output
        lines = (tmp_path / "bench.csv").read_text().splitlines()
        rows = list(csv.DictReader(lines[1:]))
        assert [r["algo"] for r in rows] == ["tabu", "hybrid"]
        assert all(r["gap"] == "" for r in rows)


class TestBacktest:
    def test_outputs_and_provenance(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", seed=5, s=30, n=6)
        result = runner.invoke(main, [
            "backtest", "--data", str(data),
            "--strategies", "equal,meanvariance",
            "--estimation", "8", "--holding", "4", "--step", "4",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads(
            (tmp_path / "backtest_metrics.json").read_text())
        assert payload["windows"] == 5
        assert set(payload["metrics"]["sharpe"]) == {
            "equal", "meanvariance", "benchmark"}
        for name in ("equal", "meanvariance", "benchmark"):
            body = (tmp_path / f"wealth_{name}.csv").read_text()
            lines = body.splitlines()
            assert lines[0].startswith("# config: ")
            assert lines[1] == "period,return,wealth"
            assert len(lines) == 2 + 5 * 4

    def test_wealth_column_compounds_returns(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", seed=6, s=20, n=5)
        result = runner.invoke(main, [
            "backtest", "--data", str(data), "--strategies", "equal",
            "--estimation", "6", "--holding", "3", "--step", "3",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "wealth_equal.csv").read_text().splitlines()
        rows = list(csv.DictReader(lines[1:]))
        wealth = 1.0
        for row in rows:
            wealth *= 1.0 + float(row["return"])
            assert float(row["wealth"]) == pytest.approx(wealth, rel=1e-12)

    def test_market_needs_caps_on_external_data(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", s=20, n=5)
        result = runner.invoke(main, [
            "backtest", "--data", str(data), "--strategies", "equal,market",
            "--estimation", "6", "--holding", "3", "--step", "3"])
        assert result.exit_code == 2
        assert "caps" in result.output

    def test_market_with_caps_file(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", s=20, n=8)
        caps = _write_caps(tmp_path / "caps.csv", n=8)
        result = runner.invoke(main, [
            "backtest", "--data", str(data), "--caps", str(caps),
            "--strategies", "market",
            "--estimation", "6", "--holding", "3", "--step", "3",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "wealth_market.csv").read_text().splitlines()
        assert len(lines) > 2

    def test_caps_missing_an_asset(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", s=20, n=8)
        caps = _write_caps(tmp_path / "caps.csv", n=7)
        result = runner.invoke(main, [
            "backtest", "--data", str(data), "--caps", str(caps),
            "--strategies", "market",
            "--estimation", "6", "--holding", "3", "--step", "3"])
        assert result.exit_code == 4

    def test_unknown_strategy_rejected(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", s=20)
        result = runner.invoke(main, [
            "backtest", "--data", str(data), "--strategies", "equal,alpha"])
        assert result.exit_code == 2

    def test_dynamics_audit_present(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", seed=8, s=24, n=6)
        result = runner.invoke(main, [
            "backtest", "--data", str(data), "--strategies", "drp",
            "--k", "2", "--algo", "exact", "--investor", "loss",
            "--estimation", "8", "--holding", "4", "--step", "4",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads(
            (tmp_path / "backtest_metrics.json").read_text())
        assert len(payload["audit"]) == 4
        assert payload["audit"][0]["loss_aversion"] == 1.5
        assert payload["config"]["investor"] == "loss"

    def test_flat_returns_flat_wealth(self, runner, tmp_path):
        rows = np.zeros((12, 3))
        save_returns(ScenarioSet.from_returns(rows), tmp_path / "r.csv")
        result = runner.invoke(main, [
            "backtest", "--data", str(tmp_path / "r.csv"),
            "--strategies", "equal", "--k", "2",
            "--estimation", "4", "--holding", "2", "--step", "2",
            "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "wealth_equal.csv").read_text().splitlines()
        for row in csv.DictReader(lines[1:]):
            assert float(row["wealth"]) == 1.0
            assert float(row["return"]) == 0.0


class TestWorstcase:
    def test_explicit_weights(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=4)
        result = runner.invoke(main, [
            "worstcase", "--data", str(data),
            "--weights", "0.4,0.3,0.2,0.1", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "worstcase.json").read_text())
        assert abs(payload["gap"]) <= 1e-8
        assert sum(payload["masses"]) == pytest.approx(1.0, abs=1e-9)
        assert payload["transport_cost"] <= 0.003 + 1e-12

    def test_zero_radius_gap_is_exactly_zero(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=4)
        result = runner.invoke(main, [
            "worstcase", "--data", str(data), "--theta", "0",
            "--weights", "0.25,0.25,0.25,0.25", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "worstcase.json").read_text())
        assert payload["gap"] == 0.0
        assert payload["transport_cost"] == 0.0

    def test_solves_when_no_weights_given(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=6)
        result = runner.invoke(main, [
            "worstcase", "--data", str(data), "--k", "2",
            "--algo", "exact", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "worstcase.json").read_text())
        assert len(payload["support"]) == 2
        assert abs(payload["gap"]) <= 1e-6

    def test_unsplit_mode_masses_uniform(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=4, s=6)
        result = runner.invoke(main, [
            "worstcase", "--data", str(data),
            "--weights", "0.25,0.25,0.25,0.25", "--no-split",
            "--d-cap", "0.01", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "worstcase.json").read_text())
        masses = payload["masses"]
        assert all(m == pytest.approx(1.0 / 6, abs=1e-12) for m in masses)

    def test_bad_weights_string(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=4)
        result = runner.invoke(main, [
            "worstcase", "--data", str(data), "--weights", "0.5,oops"])
        assert result.exit_code == 2

    def test_non_simplex_weights(self, runner, tmp_path):
        data = _write_returns(tmp_path / "r.csv", n=4)
        result = runner.invoke(main, [
            "worstcase", "--data", str(data), "--weights", "0.9,0.9,0,0"])
        assert result.exit_code == 2


class TestTopLevel:
    def test_help_lists_subcommands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for cmd in ("solve", "sensitivity", "bench", "backtest",
                    "worstcase"):
            assert cmd in result.output

    def test_unknown_subcommand(self, runner):
        result = runner.invoke(main, ["optimize"])
        assert result.exit_code == 2
