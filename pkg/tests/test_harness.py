import csv
import math

import numpy as np
import pytest

from hybridbf import cli, harness
from hybridbf.exceptions import ConfigError
from hybridbf.harness import (ExperimentConfig, RunResult, cmd_beampattern, cmd_convergence,
                              evaluate_trial, parse_config, run_experiment)

SMALL = """
[system]
n_bs = 32
n_rf = 4
snr_db = 5

[experiment]
schemes = pwmmse, amm, fully_digital, tsh
trials = 3
root_seed = 11

[sweep]
axis = snr_db
values = -5, 5
"""


@pytest.fixture
def small():
    return parse_config(SMALL)


class TestConfig:
    def test_defaults_and_values(self, small):
        assert small.n_bs == 32 and small.trials == 3
        assert small.sweep_values == (-5.0, 5.0)
        assert small.amm_lambda == 1000.0
        assert small.variant == "derived-optimal"
        assert small.system(-5).noise_var == pytest.approx(4 * 10 ** 0.5)

    @pytest.mark.parametrize("text, match", [
        ("[system]\nn_bs = 32\nn_rf = 4\nsnr = 3\n", "unknown key"),
        ("[system]\nn_bs = 32\nn_rf = 4\n[plots]\nx = 1\n", "unknown section"),
        ("[system]\nn_rf = 4\n", "n_bs"),
        ("[system]\nn_bs = 30\nn_rf = 4\n", "divisible"),
        ("[system]\nn_bs = 32\nn_rf = 4\n[experiment]\ntrials = 0\n", "trials"),
        ("[system]\nn_bs = 32\nn_rf = 4\n[experiment]\nschemes = pwmmse, hysbd\n", "unknown schemes"),
        ("[system]\nn_bs = 32\nn_rf = 4\n[sweep]\nvalues =\n", "empty"),
        ("[system]\nn_bs = 32\nn_rf = 4\n[pwmmse]\nvariant = fast\n", "variant"),
        ("[system]\nn_bs = thirty\nn_rf = 4\n", "n_bs"),
        ("[system]\nn_bs = 32\nn_rf = 4\n[amm]\nlambda = -1\n", "lam"),
        ("not an ini", "section"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text)

    def test_sweeping_keywords(self):
        cfg = parse_config("[system]\nn_bs = 32\nn_rf = 4\n[sweeping]\n"
                           "sweep_snr_db = inf\neff_csi_snr_db = match\ncodebook_size = 64\n")
        assert math.isinf(cfg.sweep_snr_db) and cfg.eff_csi_snr_db is None
        assert cfg.codebook_size == 64

    def test_shipped_configs_parse(self):
        from pathlib import Path
        for path in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.ini")):
            harness.load_config(path)

    def test_nbs_axis(self):
        cfg = parse_config("[system]\nn_bs = 32\nn_rf = 4\n[sweep]\naxis = n_bs\nvalues = 16, 64\n")
        assert cfg.system(64).n_bs == 64 and cfg.system(16).n_s == 4
        with pytest.raises(ConfigError):
            parse_config("[system]\nn_bs = 32\nn_rf = 4\n[sweep]\naxis = n_bs\nvalues = 18\n")


class TestRunExperiment:
    def test_single_row(self):
        config = ExperimentConfig(n_bs=16, n_rf=2, schemes=("pwmmse",), trials=1)
        result = run_experiment(config)
        assert len(result.rows) == 1
        row = result.rows[0]
        assert row.sum_rate == pytest.approx(sum(row.per_user_rates))
        assert not row.failed

    def test_cardinality_and_order(self, small):
        result = run_experiment(small)
        assert len(result.rows) == 4 * 2 * 3
        keys = [(r.scheme, r.sweep_value, r.trial) for r in result.rows]
        expected = [(s, v, t) for s in small.schemes for v in (-5.0, 5.0) for t in range(3)]
        assert keys == expected
        assert result.n_failed == 0

    def test_byte_identical_csv(self, small, tmp_path):
        run_experiment(small).write_csv(tmp_path / "a.csv")
        run_experiment(small).write_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_csv_schema_and_round_trip(self, small, tmp_path):
        result = run_experiment(small)
        path = tmp_path / "r.csv"
        result.write_csv(path)
        with open(path) as fh:
            header = next(csv.reader(fh))
        assert header == ["scheme", "sweep_value", "trial", "sum_rate", "rate_user_1",
                          "rate_user_2", "rate_user_3", "rate_user_4", "iters", "wall_ms"]
        back = RunResult.read_csv(path)
        again = tmp_path / "r2.csv"
        back.write_csv(again)
        assert again.read_bytes() == path.read_bytes()
        for a, b in zip(result.rows, back.rows):
            assert a.scheme == b.scheme and a.trial == b.trial and a.iterations == b.iterations
            assert b.sum_rate == pytest.approx(a.sum_rate, rel=1e-11)

    def test_parallel_matches_serial(self, small, tmp_path):
        run_experiment(small).write_csv(tmp_path / "serial.csv")
        run_experiment(small, workers=2).write_csv(tmp_path / "pool.csv")
        assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "pool.csv").read_bytes()

    def test_paired_channels(self, small):
        seen = {}

        def inspect(scheme, value, trial, outcome):
            seen.setdefault((value, trial), []).append(outcome)

        run_experiment(small, inspect=inspect)
        # fully digital and P-WMMSE see the same channel: FD never loses
        for outcomes in seen.values():
            by = {o.scheme: o for o in outcomes}
            assert by["fully_digital"].report.sum_rate >= by["pwmmse"].report.sum_rate - 1e-9

    def test_channels_shared_across_sweep_values(self, small, monkeypatch):
        captured = []
        real = harness.run_scheme

        def spy(scheme, channels, *args, **kwargs):
            captured.append([c.vector.copy() for c in channels])
            return real(scheme, channels, *args, **kwargs)

        monkeypatch.setattr(harness, "run_scheme", spy)
        evaluate_trial(small, -5.0, 1)
        evaluate_trial(small, 5.0, 1)
        for other in captured[1:]:
            for a, b in zip(captured[0], other):
                np.testing.assert_array_equal(a, b)

    def test_failure_flagged_and_run_continues(self, small, monkeypatch):
        real = harness.run_scheme

        def flaky(scheme, channels, cfg, config, seed, snr):
            if scheme == "amm" and seed == small.root_seed + 1:
                raise FloatingPointError("injected")
            return real(scheme, channels, cfg, config, seed, snr)

        monkeypatch.setattr(harness, "run_scheme", flaky)
        result = run_experiment(small)
        failed = [r for r in result.rows if r.failed]
        assert len(failed) == 2
        assert all(r.scheme == "amm" and r.trial == 1 and r.iterations == -1 for r in failed)
        assert len(result.rows) == 24
        assert result.n_failed == 2
        assert not math.isnan(result.mean_sum_rate("amm", 5.0))

    def test_timing_off_by_default(self, small):
        assert all(r.wall_time == 0 for r in run_experiment(small).rows)
        timed = harness.with_overrides(small, trials=1)
        from dataclasses import replace
        rows = run_experiment(replace(timed, record_timing=True)).rows
        assert all(r.wall_time > 0 for r in rows)


BEAM = """
[system]
n_bs = 128
n_rf = 4
[amm]
max_iters = 300
[experiment]
schemes = amm
[beampattern]
ranges_deg = -0.9:0, 4.5:5.4, -9.9:-9, 15.4:16.3
users = 0, 2
grid_size = 20000
"""


class TestSubcommands:
    def test_beampattern_files(self, tmp_path):
        config = parse_config(BEAM)
        depths = cmd_beampattern(config, tmp_path)
        for user in (0, 2):
            for beam in ("amm", "quiescent"):
                rows = list(csv.reader(open(tmp_path / f"beampattern_user{user}_{beam}.csv")))
                assert rows[0] == ["aod_sine", "aod_deg", "gain_db"]
                assert len(rows) == 20001
        summary = list(csv.reader(open(tmp_path / "nulling_depths.csv")))
        assert len(summary) == 1 + 2 * 2 * 4
        # quiescent user-0 pattern peaks inside its own range
        rows = list(csv.reader(open(tmp_path / "beampattern_user0_quiescent.csv")))[1:]
        sines = np.array([float(r[0]) for r in rows])
        gains = np.array([float(r[2]) for r in rows])
        assert config.angle_ranges()[0].contains(sines[np.argmax(gains)])
        assert depths[(0, "quiescent", 0)] == pytest.approx(0.0, abs=0.1)
        for j in (1, 2, 3):
            assert depths[(0, "amm", j)] < depths[(0, "quiescent", j)]

    def test_beampattern_requires_amm(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_beampattern(parse_config(BEAM.replace("schemes = amm", "schemes = tsh")), tmp_path)

    def test_convergence(self, tmp_path):
        config = parse_config(SMALL.replace("trials = 3", "trials = 1")
                              + "[pwmmse]\nmax_iters = 15\nrel_tol = 1e-12\n"
                              + "[amm]\nmax_iters = 12\nrel_tol = 1e-12\n")
        series = cmd_convergence(config, tmp_path)
        assert set(series) == {"pwmmse", "amm_user0", "amm_user1", "amm_user2", "amm_user3"}
        for name, trace in series.items():
            assert np.all(np.diff(trace) <= 1e-9)
            assert len(trace) <= (15 if name == "pwmmse" else 12)
        rows = list(csv.reader(open(tmp_path / "convergence.csv")))
        assert rows[0] == ["series", "iteration", "objective"]
        assert len(rows) == 1 + sum(len(t) for t in series.values())


class TestCli:
    def write(self, tmp_path, text):
        path = tmp_path / "exp.ini"
        path.write_text(text)
        return str(path)

    def test_sumrate_snr(self, tmp_path, capsys):
        path = self.write(tmp_path, SMALL)
        code = cli.main(["sumrate-snr", "--config", path, "--out", str(tmp_path / "o"),
                         "--trials", "2", "--seed", "5"])
        assert code == 0
        rows = list(csv.reader(open(tmp_path / "o" / "results.csv")))
        assert len(rows) == 1 + 4 * 2 * 2
        assert (tmp_path / "o" / "results_summary.csv").exists()
        assert "mean sum-rate" in capsys.readouterr().out

    def test_sumrate_nbs(self, tmp_path):
        text = SMALL.replace("axis = snr_db", "axis = n_bs").replace("values = -5, 5",
                                                                     "values = 16, 32")
        code = cli.main(["sumrate-nbs", "--config", self.write(tmp_path, text),
                         "--out", str(tmp_path), "--trials", "1"])
        assert code == 0

    def test_axis_mismatch_is_config_error(self, tmp_path, capsys):
        code = cli.main(["sumrate-nbs", "--config", self.write(tmp_path, SMALL),
                         "--out", str(tmp_path)])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["convergence", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_failure_exit_code(self, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise FloatingPointError("injected")

        monkeypatch.setattr(harness, "run_scheme", boom)
        code = cli.main(["sumrate-snr", "--config", self.write(tmp_path, SMALL),
                         "--out", str(tmp_path), "--trials", "1"])
        assert code == 1

    def test_beampattern_and_convergence(self, tmp_path):
        assert cli.main(["beampattern", "--config", self.write(tmp_path, BEAM),
                         "--out", str(tmp_path)]) == 0
        assert (tmp_path / "nulling_depths.csv").exists()
        conv = SMALL + "[amm]\nmax_iters = 5\n"
        assert cli.main(["convergence", "--config", self.write(tmp_path, conv),
                         "--out", str(tmp_path)]) == 0
        assert (tmp_path / "convergence.csv").exists()

    def test_requires_config(self):
        with pytest.raises(SystemExit):
            cli.main(["beampattern"])
