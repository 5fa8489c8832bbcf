import json
import math
from pathlib import Path

import numpy as np
import pytest

from ctmkit import (
    IdentityMeasure,
    bk_factor_sequences,
    cell_tree,
    changepoint_model,
    expected_log_wealth,
)
from ctmkit.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    audit_trajectory,
    build_alternative,
    build_measure,
    run_eprocess,
    run_optimality,
    run_simulate,
    run_validate,
    substream,
    write_json,
)


def _cfg(tmp_path, **overrides):
    base = dict(
        seed=77,
        horizon=10,
        reps=4,
        null="bernoulli:0.5",
        alt="changepoint:0.5,0.9,0.2",
        measure="identity",
        bettor="bayes_kelly",
        out=str(tmp_path / "out"),
    )
    base.update(overrides)
    return ExperimentConfig.from_mapping(base)


class TestConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys: frobnicate"):
            ExperimentConfig.from_mapping({"seed": 1, "horizon": 2, "frobnicate": 3})

    def test_missing_seed_named(self, tmp_path):
        with pytest.raises(ConfigError, match="seed"):
            _cfg(tmp_path, seed=-1)

    def test_bad_horizon_named(self, tmp_path):
        with pytest.raises(ConfigError, match="horizon"):
            _cfg(tmp_path, horizon=0)

    def test_bad_alt_named(self, tmp_path):
        with pytest.raises(ConfigError, match="alt"):
            _cfg(tmp_path, alt="changepoint:0.5")

    def test_bad_tau_mode_named(self, tmp_path):
        with pytest.raises(ConfigError, match="tau_mode"):
            _cfg(tmp_path, tau_mode="sometimes")

    def test_bad_bettor_named(self, tmp_path):
        with pytest.raises(ConfigError, match="bettor"):
            _cfg(tmp_path, bettor="martingale")

    def test_bad_dgp_named(self, tmp_path):
        with pytest.raises(ConfigError, match="dgp"):
            _cfg(tmp_path, dgp="surprise")

    def test_integer_coercion(self, tmp_path):
        cfg = _cfg(tmp_path, seed="12", reps="3")
        assert cfg.seed == 12 and cfg.reps == 3


class TestFormatStrings:
    def test_measures(self):
        assert build_measure("identity").name == "identity"
        assert build_measure("distmean").name == "distmean"
        with pytest.raises(ConfigError):
            build_measure("entropy")

    def test_alternatives(self, tmp_path):
        assert build_alternative("changepoint:0.5,0.9,0.2").alphabet_size == 2
        assert build_alternative("markov:0.1,0.1").alphabet_size == 2
        assert build_alternative("markov:0.1,0.1,0.7").alphabet_size == 2
        assert build_alternative("iid:0.3").alphabet_size == 2
        assert build_alternative("iid:0.2,0.3,0.5").alphabet_size == 3
        assert build_alternative("pointmass:1,0,1").alphabet_size == 2
        table = tmp_path / "t.json"
        table.write_text(
            json.dumps({"alphabet_size": 2, "conditionals": {"": [0.5, 0.5]}}),
            encoding="utf-8",
        )
        assert build_alternative(f"table:{table}").alphabet_size == 2
        for bad in ("iid:", "pointmass:x", "changepoint:1,2", "mystery:1"):
            with pytest.raises(ConfigError):
                build_alternative(bad)


class TestSubstreams:
    def test_deterministic_and_keyed(self):
        a = substream(9, 0, 3, 0).random(4)
        b = substream(9, 0, 3, 0).random(4)
        c = substream(9, 0, 4, 0).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestSimulate:
    def test_constant_bettor_unit_wealth_column(self, tmp_path):
        cfg = _cfg(tmp_path, bettor="constant", reps=3, horizon=6)
        report = run_simulate(cfg)
        assert report["ok"] is True
        lines = (Path(cfg.out) / "trajectory.csv").read_text().strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 3 * 6
        for line in lines[1:]:
            fields = line.split(",")
            assert fields[8] == "1.0" and fields[9] == "0.0"

    def test_repeat_run_byte_identical(self, tmp_path):
        cfg_a = _cfg(tmp_path / "a", reps=1, horizon=8)
        cfg_b = _cfg(tmp_path / "b", reps=1, horizon=8)
        run_simulate(cfg_a)
        run_simulate(cfg_b)
        for name in ("trajectory.csv", "summary.json"):
            assert (Path(cfg_a.out) / name).read_bytes() == (
                Path(cfg_b.out) / name
            ).read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        cfg_a = _cfg(tmp_path / "serial", reps=6, horizon=8, jobs=1)
        cfg_b = _cfg(tmp_path / "parallel", reps=6, horizon=8, jobs=2)
        run_simulate(cfg_a)
        run_simulate(cfg_b)
        assert (Path(cfg_a.out) / "trajectory.csv").read_bytes() == (
            Path(cfg_b.out) / "trajectory.csv"
        ).read_bytes()

    def test_mean_log_wealth_matches_oracle_under_own_model(self, tmp_path):
        cfg = _cfg(tmp_path, dgp="alt", reps=1500, horizon=6, seed=101)
        report = run_simulate(cfg)
        cells = cell_tree(changepoint_model(0.5, 0.9, 0.2), IdentityMeasure(), 6)
        target = expected_log_wealth(cells, bk_factor_sequences(cells))
        gap = abs(report["mean_log_wealth"] - target)
        assert gap <= 3.0 * report["se_log_wealth"]

    def test_file_dgp(self, tmp_path):
        stream = tmp_path / "data.txt"
        stream.write_text("1\n0\n1\n1\n0\n1\n", encoding="utf-8")
        cfg = _cfg(tmp_path, dgp=f"file:{stream}", reps=2, horizon=6)
        report = run_simulate(cfg)
        assert report["ok"] is True
        lines = (Path(cfg.out) / "trajectory.csv").read_text().strip().split("\n")
        z_rep0 = [row.split(",")[2] for row in lines[1:7]]
        z_rep1 = [row.split(",")[2] for row in lines[7:13]]
        assert z_rep0 == ["1", "0", "1", "1", "0", "1"] == z_rep1

    def test_real_valued_data_needs_real_capable_bettor(self, tmp_path):
        cfg = _cfg(tmp_path, null="normal", measure="distmean", reps=2, horizon=5)
        with pytest.raises(ValueError, match="integer observations"):
            run_simulate(cfg)
        cfg = _cfg(tmp_path, null="normal", measure="distmean", reps=2, horizon=5,
                   bettor="constant")
        assert run_simulate(cfg)["ok"] is True


class TestAudit:
    def test_detects_corrupted_wealth(self, tmp_path):
        cfg = _cfg(tmp_path, reps=2, horizon=5)
        run_simulate(cfg)
        path = Path(cfg.out) / "trajectory.csv"
        lines = path.read_text().strip().split("\n")
        fields = lines[3].split(",")
        fields[8] = repr(float(fields[8]) * 1.5 + 0.1)
        lines[3] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        assert audit_trajectory(path)["ok"] is False

    def test_detects_out_of_order_rows(self, tmp_path):
        cfg = _cfg(tmp_path, reps=2, horizon=4)
        run_simulate(cfg)
        path = Path(cfg.out) / "trajectory.csv"
        lines = path.read_text().strip().split("\n")
        lines[2], lines[3] = lines[3], lines[2]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ValueError, match="out of order"):
            audit_trajectory(path)


class TestValidate:
    def test_refuses_underpowered_runs(self, tmp_path):
        cfg = _cfg(tmp_path, reps=5, horizon=10)
        with pytest.raises(ConfigError, match="1000"):
            run_validate(cfg)

    def test_null_run_passes(self, tmp_path):
        cfg = _cfg(tmp_path, reps=30, horizon=40, seed=2024)
        report = run_validate(cfg)
        assert report["ks_ok"] and report["lag1_ok"]
        assert (Path(cfg.out) / "validity.json").exists()

    def test_constant_tau_misuse_flagged(self, tmp_path):
        cfg = _cfg(tmp_path, reps=30, horizon=40, tau_mode="constant:0.5")
        report = run_validate(cfg)
        assert report["ks_ok"] is False
        assert report["ok"] is False

    def test_requires_null_dgp(self, tmp_path):
        cfg = _cfg(tmp_path, reps=30, horizon=40, dgp="alt")
        with pytest.raises(ConfigError, match="dgp"):
            run_validate(cfg)


class TestOptimality:
    def test_horizon_guard(self, tmp_path):
        cfg = _cfg(tmp_path, horizon=7)
        with pytest.raises(ConfigError, match="horizon"):
            run_optimality(cfg)

    def test_null_alternative_is_flat(self, tmp_path):
        cfg = _cfg(tmp_path, alt="iid:0.5", horizon=4, rivals=20)
        report = run_optimality(cfg)
        assert abs(report["expected_log_wealth"]) <= 1e-12
        assert abs(report["pushforward_kl"]) <= 1e-12
        assert report["ok"] is True

    def test_certificate_contents(self, tmp_path):
        cfg = _cfg(tmp_path, horizon=5, rivals=30)
        report = run_optimality(cfg)
        assert report["identity_ok"] and report["dominance_ok"]
        payload = json.loads((Path(cfg.out) / "certificate.json").read_text())
        assert payload["cells"] == 120
        assert payload["identity_gap"] <= 1e-9
        assert payload["rival_max_expected_log_wealth"] <= payload["expected_log_wealth"]


class TestEProcessRun:
    def test_balanced_pair_reaches_one(self, tmp_path):
        stream = tmp_path / "bits.txt"
        stream.write_text("1\n0\n", encoding="utf-8")
        cfg = _cfg(tmp_path, alt="iid:0.5", dgp=f"file:{stream}", horizon=2,
                   example1="none")
        report = run_eprocess(cfg)
        assert report["ok"] is True
        rows = (Path(cfg.out) / "eprocess_trajectory.csv").read_text().strip().split("\n")
        assert rows[0] == "n,z,ones,log_q,log_ml,e_value,log10_e"
        last = rows[-1].split(",")
        assert float(last[5]) == pytest.approx(1.0, rel=1e-12)

    def test_evar_table_bounded(self, tmp_path):
        cfg = _cfg(tmp_path, alt="markov:0.1,0.1,0.5", horizon=8)
        report = run_eprocess(cfg)
        assert report["evar_max_expectation"] <= 1.0 + 1e-12
        rows = (Path(cfg.out) / "evar_table.csv").read_text().strip().split("\n")
        assert rows[0] == "theta,n,expectation"
        assert len(rows) == 1 + 11 * 8

    def test_example_block_from_file(self, tmp_path):
        demo = tmp_path / "demo.txt"
        demo.write_text("0.1\n-2.3\n4.5\n6.6\n-7.1\n", encoding="utf-8")
        cfg = _cfg(tmp_path, alt="iid:0.5", horizon=2, example1=f"file:{demo}")
        report = run_eprocess(cfg)
        assert report["example1_all_distinct"] is True
        assert report["example1_empirical_ml"] == pytest.approx(5.0**-5, rel=1e-12)
        assert report["example1_continuous_lr"] == 0.0

    def test_rejects_non_binary_alternative(self, tmp_path):
        cfg = _cfg(tmp_path, alt="iid:0.2,0.3,0.5")
        with pytest.raises(ConfigError, match="binary"):
            run_eprocess(cfg)


class TestWriters:
    def test_json_is_sorted_sanitized_and_newline_terminated(self, tmp_path):
        path = tmp_path / "report.json"
        write_json(path, {"b": math.inf, "a": math.nan, "c": -math.inf, "d": 1.5})
        text = path.read_text()
        assert text.endswith("\n")
        payload = json.loads(text)
        assert list(payload) == ["a", "b", "c", "d"]
        assert payload == {"a": "nan", "b": "inf", "c": "-inf", "d": 1.5}
