import json
import os

import numpy as np
import pytest

from mates import generate, make_scenario
from mates.cli import EXIT_DATA, EXIT_DEGENERATE, EXIT_OK, TestReport, main

pytestmark = pytest.mark.filterwarnings("ignore::DeprecationWarning")


def write_csv(path, matrix, header=None):
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in np.atleast_2d(matrix):
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def null_pair(tmp_path):
    sample = generate(make_scenario("null-a", d=20, m=10, n=10), seed=42)
    x_path = write_csv(tmp_path / "x.csv", sample.x)
    y_path = write_csv(tmp_path / "y.csv", sample.y)
    return x_path, y_path, sample


class TestCmdTest:
    def test_runs_and_emits_schema_json(self, null_pair, capsys):
        x_path, y_path, _ = null_pair
        assert main(["test", "--x", x_path, "--y", y_path]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) >= {"meta", "views", "T_S", "p_asymptotic", "diagnostics"}
        assert len(payload["views"]) == 4
        view = payload["views"][0]
        assert set(view) >= {"s", "U_x", "U_y", "U_w", "U_diff", "T_prime", "p_prime"}
        assert payload["meta"]["m"] == 10
        assert payload["meta"]["d"] == 20
        assert 0.0 <= payload["p_asymptotic"] <= 1.0

    def test_fixed_seed_golden_statistic(self, null_pair, capsys):
        # regression pin: the exact value for the seed-42 fixture above
        x_path, y_path, _ = null_pair
        assert main(["test", "--x", x_path, "--y", y_path]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["T_S"] == pytest.approx(GOLDEN_T_STAT, abs=1e-12)

    def test_json_round_trip(self, null_pair, capsys):
        x_path, y_path, _ = null_pair
        main(["test", "--x", x_path, "--y", y_path, "--method", "both", "--perms", "19"])
        text = capsys.readouterr().out
        report = TestReport.from_json(text)
        assert report.to_json() == text
        assert TestReport.from_json(report.to_json()) == report

    def test_method_both_reports_both(self, null_pair, capsys):
        x_path, y_path, _ = null_pair
        main(["test", "--x", x_path, "--y", y_path, "--method", "both", "--perms", "19"])
        payload = json.loads(capsys.readouterr().out)
        assert "p_permutation" in payload
        assert payload["meta"]["perms"] == 19
        assert payload["p_permutation"] * 20 == pytest.approx(round(payload["p_permutation"] * 20))

    def test_identical_rows_exit_degenerate(self, tmp_path, capsys):
        path = write_csv(tmp_path / "same.csv", np.ones((6, 3)))
        assert main(["test", "--x", path, "--y", path]) == EXIT_DEGENERATE
        assert "bandwidth" in capsys.readouterr().err

    def test_non_numeric_cell_exit_data(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,2.0\n3.0,oops\n1.0,2.0\n")
        good = write_csv(tmp_path / "good.csv", np.eye(3))
        assert main(["test", "--x", str(bad), "--y", str(good)]) == EXIT_DATA
        err = capsys.readouterr().err
        assert "row 2" in err and "column 2" in err

    def test_missing_file_exit_data(self, tmp_path):
        good = write_csv(tmp_path / "good.csv", np.eye(3))
        assert main(["test", "--x", str(tmp_path / "nope.csv"), "--y", good]) == EXIT_DATA

    def test_column_mismatch_exit_data(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", np.ones((3, 2)))
        b = write_csv(tmp_path / "b.csv", np.ones((3, 3)))
        assert main(["test", "--x", a, "--y", b]) == EXIT_DATA

    def test_too_few_rows_exit_data(self, tmp_path):
        a = write_csv(tmp_path / "a.csv", np.random.default_rng(0).random((1, 3)))
        b = write_csv(tmp_path / "b.csv", np.random.default_rng(1).random((4, 3)))
        assert main(["test", "--x", a, "--y", b]) == EXIT_DATA

    def test_usage_error_exits_2(self, null_pair):
        x_path, y_path, _ = null_pair
        with pytest.raises(SystemExit) as excinfo:
            main(["test", "--x", x_path, "--y", y_path, "--method", "bogus"])
        assert excinfo.value.code == 2

    def test_pooled_with_label_column(self, tmp_path, capsys):
        rng = np.random.default_rng(7)
        rows = ["f1,f2,group"]
        for _ in range(5):
            rows.append(f"{rng.random()!r},{rng.random()!r},X")
        for _ in range(6):
            rows.append(f"{rng.random()!r},{rng.random()!r},y")
        pooled = tmp_path / "pooled.csv"
        pooled.write_text("\n".join(rows) + "\n")
        assert main(["test", "--pooled", str(pooled), "--labels", "group"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["meta"]["m"] == 5
        assert payload["meta"]["n"] == 6

    def test_pooled_with_numeric_labels_by_index(self, tmp_path, capsys):
        rng = np.random.default_rng(8)
        rows = []
        for i in range(14):
            cells = ",".join(repr(float(v)) for v in rng.random(4))
            rows.append(f"{int(i >= 7)},{cells}")
        pooled = tmp_path / "pooled.csv"
        pooled.write_text("\n".join(rows) + "\n")
        code = main(["test", "--pooled", str(pooled), "--labels", "0",
                     "--views", "moments:1,2"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["meta"]["m"] == 7
        assert payload["meta"]["n"] == 7

    def test_pooled_with_bad_label_exit_data(self, tmp_path, capsys):
        pooled = tmp_path / "pooled.csv"
        pooled.write_text("a,label\n1.0,x\n2.0,x\n3.0,maybe\n4.0,y\n5.0,y\n")
        assert main(["test", "--pooled", str(pooled), "--labels", "label"]) == EXIT_DATA
        assert "maybe" in capsys.readouterr().err

    def test_csv_format_output(self, null_pair, capsys):
        x_path, y_path, _ = null_pair
        main(["test", "--x", x_path, "--y", y_path, "--format", "csv"])
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("s,U_x,U_y,U_w,U_diff,T_prime,p_prime,T_S")
        assert len(lines) == 5  # header + one row per view

    def test_output_file_written_atomically(self, null_pair, tmp_path):
        x_path, y_path, _ = null_pair
        out = tmp_path / "report.json"
        assert main(["test", "--x", x_path, "--y", y_path, "--out", str(out)]) == EXIT_OK
        payload = json.loads(out.read_text())
        assert "T_S" in payload
        leftovers = [f for f in os.listdir(tmp_path) if f.startswith(".mates-tmp-")]
        assert leftovers == []

    def test_kmst_graph_option(self, null_pair, capsys):
        x_path, y_path, _ = null_pair
        code = main(["test", "--x", x_path, "--y", y_path, "--graph", "kmst",
                     "--k", "2", "--weights", "similarity"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["meta"]["graph"] == "kmst"
        assert 0.0 <= payload["p_asymptotic"] <= 1.0

    def test_k_too_large_exit_data(self, null_pair):
        x_path, y_path, _ = null_pair
        assert main(["test", "--x", x_path, "--y", y_path, "--k", "99"]) == EXIT_DATA

    def test_lp_and_precomputed_views(self, null_pair, tmp_path, capsys):
        x_path, y_path, sample = null_pair
        from scipy.spatial.distance import cdist

        dist = cdist(sample.values, sample.values, "chebyshev")
        pre = write_csv(tmp_path / "pre.csv", dist)
        code = main(
            ["test", "--x", x_path, "--y", y_path,
             "--views", "lp:1,2", f"precomputed:{pre}", "--k", "5"]
        )
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["views"]) == 3

    def test_duplicate_views_exit_degenerate(self, null_pair, tmp_path, capsys):
        # lp:2 and a precomputed Euclidean matrix are the same view twice
        x_path, y_path, sample = null_pair
        from scipy.spatial.distance import cdist

        dist = cdist(sample.values, sample.values, "euclidean")
        pre = write_csv(tmp_path / "pre.csv", dist)
        code = main(
            ["test", "--x", x_path, "--y", y_path,
             "--views", "lp:2", f"precomputed:{pre}", "--k", "5"]
        )
        assert code == EXIT_DEGENERATE
        assert "singular" in capsys.readouterr().err

    def test_precomputed_size_mismatch_exit_data(self, null_pair, tmp_path):
        x_path, y_path, _ = null_pair
        pre = write_csv(tmp_path / "pre.csv", np.zeros((5, 5)))
        code = main(["test", "--x", x_path, "--y", y_path, "--views", f"precomputed:{pre}"])
        assert code == EXIT_DATA


class TestCmdSimulate:
    def test_single_row_csv(self, tmp_path):
        out = tmp_path / "row.csv"
        code = main(
            ["simulate", "--scenario", "null-a", "--d", "20", "--m", "10", "--n", "10",
             "--reps", "3", "--seed", "5", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert len(out.read_text().splitlines()) == 2

    def test_special_file_output_not_clobbered(self):
        import stat

        code = main(
            ["simulate", "--scenario", "null-a", "--d", "20", "--m", "10", "--n", "10",
             "--reps", "2", "--seed", "5", "--out", "/dev/null"]
        )
        assert code == EXIT_OK
        # the device node must survive the write (no rename over it)
        assert stat.S_ISCHR(os.stat("/dev/null").st_mode)

    def test_symlink_output_writes_through(self, tmp_path):
        target = tmp_path / "real.csv"
        target.write_text("placeholder\n")
        link = tmp_path / "link.csv"
        link.symlink_to(target)
        code = main(
            ["simulate", "--scenario", "null-a", "--d", "20", "--m", "10", "--n", "10",
             "--reps", "2", "--seed", "5", "--out", str(link)]
        )
        assert code == EXIT_OK
        assert link.is_symlink()
        assert target.read_text().startswith("scenario,")

    def test_deterministic_bytes(self, tmp_path):
        args = ["simulate", "--scenario", "null-a", "--d", "20", "--m", "10", "--n", "10",
                "--reps", "4", "--seed", "9"]
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(out1)]) == EXIT_OK
        assert main(args + ["--out", str(out2), "--threads", "2"]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_single_replication_rate(self, tmp_path):
        out = tmp_path / "one.csv"
        main(["simulate", "--scenario", "null-a", "--d", "20", "--m", "10", "--n", "10",
              "--reps", "1", "--seed", "0", "--out", str(out)])
        header, row = out.read_text().strip().splitlines()
        assert header == "scenario,d,m,n,reps,alpha,rejection_rate,failures,seed"
        rate = float(row.split(",")[6])
        assert rate in (0.0, 1.0)

    def test_config_file(self, tmp_path):
        config = tmp_path / "spec.json"
        config.write_text(json.dumps({
            "scenario": "alt-I", "pattern": "i", "d": 200, "m": 8, "n": 8,
            "params": {"df": 5.0},
        }))
        out = tmp_path / "out.csv"
        assert main(["simulate", "--config", str(config), "--reps", "2", "--out", str(out)]) == EXIT_OK
        assert out.read_text().splitlines()[1].startswith("alt-I(i),200,8,8,2,")

    def test_missing_scenario_exit_data(self):
        assert main(["simulate", "--reps", "2"]) == EXIT_DATA


class TestEnvironmentAndProcess:
    def test_mates_threads_env_sets_default(self, monkeypatch):
        from mates.cli import build_parser

        monkeypatch.setenv("MATES_THREADS", "6")
        args = build_parser().parse_args(["simulate", "--scenario", "null-a"])
        assert args.threads == 6
        monkeypatch.setenv("MATES_THREADS", "not-a-number")
        args = build_parser().parse_args(["simulate", "--scenario", "null-a"])
        assert args.threads == 1

    def test_process_level_exit_codes(self, tmp_path):
        import subprocess
        import sys

        good = write_csv(tmp_path / "good.csv", np.eye(4))
        proc = subprocess.run(
            [sys.executable, "-m", "mates.cli", "test", "--x", "/nonexistent.csv", "--y", good],
            capture_output=True,
        )
        assert proc.returncode == EXIT_DATA
        proc = subprocess.run(
            [sys.executable, "-m", "mates.cli", "test", "--format", "bogus"],
            capture_output=True,
        )
        assert proc.returncode == 2


class TestCmdScatter:
    def test_seed_reproducibility(self, null_pair, tmp_path):
        x_path, y_path, _ = null_pair
        out1, out2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
        args = ["scatter", "--x", x_path, "--y", y_path, "--perms", "25", "--seed", "3"]
        assert main(args + ["--out", str(out1)]) == EXIT_OK
        assert main(args + ["--out", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_row_count_and_observed_flags(self, null_pair, tmp_path):
        x_path, y_path, _ = null_pair
        out = tmp_path / "scatter.csv"
        code = main(["scatter", "--x", x_path, "--y", y_path, "--perms", "7",
                     "--seed", "1", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "view,u_w,u_diff,is_observed"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 4 * (7 + 1)
        observed = [r for r in rows if r[3] == "1"]
        assert sorted(r[0] for r in observed) == ["1", "2", "3", "4"]

    def test_default_perms_is_1000(self, null_pair, tmp_path):
        x_path, y_path, _ = null_pair
        out = tmp_path / "scatter.csv"
        main(["scatter", "--x", x_path, "--y", y_path, "--out", str(out)])
        assert len(out.read_text().strip().splitlines()) == 1 + 4 * 1001


class TestCmdReturns:
    def make_panel(self, tmp_path, prices, dates=None, assets=None):
        n_days = len(prices)
        if dates is None:
            dates = [f"2022-01-{day:02d}" for day in range(1, n_days + 1)]
        if assets is None:
            assets = [f"A{j}" for j in range(len(prices[0]))]
        lines = ["date," + ",".join(assets)]
        for day, row in zip(dates, prices):
            cells = ["" if v is None else repr(float(v)) for v in row]
            lines.append(day + "," + ",".join(cells))
        path = tmp_path / "prices.csv"
        path.write_text("\n".join(lines) + "\n")
        return path

    def run_returns(self, tmp_path, panel, split, extra=()):
        before, after = tmp_path / "before.csv", tmp_path / "after.csv"
        code = main(["returns", "--prices", str(panel), "--split-date", split,
                     "--out-before", str(before), "--out-after", str(after), *extra])
        return code, before, after

    def read_matrix(self, path):
        lines = path.read_text().strip().splitlines()
        return lines[0].split(","), np.array(
            [[float(c) for c in line.split(",")] for line in lines[1:]]
        )

    def test_constant_prices_give_zero_returns(self, tmp_path):
        panel = self.make_panel(tmp_path, [[100.0, 50.0]] * 10)
        code, before, after = self.run_returns(tmp_path, panel, "2022-01-06")
        assert code == EXIT_OK
        _, before_values = self.read_matrix(before)
        _, after_values = self.read_matrix(after)
        assert (before_values == 0).all()
        assert (after_values == 0).all()

    def test_simple_return_value(self, tmp_path):
        prices = [[100.0], [110.0], [121.0], [121.0], [121.0], [121.0], [121.0], [121.0]]
        panel = self.make_panel(tmp_path, prices)
        code, before, after = self.run_returns(tmp_path, panel, "2022-01-05")
        assert code == EXIT_OK
        _, before_values = self.read_matrix(before)
        assert before_values[0, 0] == pytest.approx(0.10)
        assert before_values[1, 0] == pytest.approx(0.10)

    def test_split_day_return_belongs_to_after(self, tmp_path):
        prices = [[float(100 + day)] for day in range(10)]
        panel = self.make_panel(tmp_path, prices)
        code, before, after = self.run_returns(tmp_path, panel, "2022-01-05")
        assert code == EXIT_OK
        _, before_values = self.read_matrix(before)
        _, after_values = self.read_matrix(after)
        # 9 returns total (days 2..10): days 2..4 before, days 5..10 after
        assert len(before_values) == 3
        assert len(after_values) == 6
        assert after_values[0, 0] == pytest.approx(104.0 / 103.0 - 1.0)

    def test_log_returns_flag(self, tmp_path):
        prices = [[100.0], [110.0]] + [[110.0]] * 6
        panel = self.make_panel(tmp_path, prices)
        code, before, _ = self.run_returns(tmp_path, panel, "2022-01-05", ("--log-returns",))
        assert code == EXIT_OK
        _, before_values = self.read_matrix(before)
        assert before_values[0, 0] == pytest.approx(np.log(1.1))

    def test_missing_data_threshold_drops_asset(self, tmp_path):
        prices = [[100.0, 100.0] for _ in range(10)]
        for day in (2, 3, 4):
            prices[day][1] = None
        panel = self.make_panel(tmp_path, prices)
        code, before, _ = self.run_returns(tmp_path, panel, "2022-01-06")
        assert code == EXIT_OK
        header, _ = self.read_matrix(before)
        assert header == ["A0"]  # A1 dropped at the default zero threshold

        code, before, _ = self.run_returns(
            tmp_path, panel, "2022-01-06", ("--drop-missing-threshold", "0.5")
        )
        assert code == EXIT_OK
        header, values = self.read_matrix(before)
        assert header == ["A0", "A1"]
        assert (values[:, 1][1:4] == 0.0).all()  # forward-filled prices

    def test_too_few_rows_exit_data(self, tmp_path):
        panel = self.make_panel(tmp_path, [[100.0]] * 4)
        code, *_ = self.run_returns(tmp_path, panel, "2022-01-04")
        assert code == EXIT_DATA

    def test_unparseable_dates_exit_data(self, tmp_path):
        panel = self.make_panel(
            tmp_path, [[100.0]] * 8, dates=[f"not-a-date-{i}" for i in range(8)]
        )
        code, *_ = self.run_returns(tmp_path, panel, "2022-01-04")
        assert code == EXIT_DATA

    def test_returns_feed_back_into_test(self, tmp_path, capsys):
        rng = np.random.default_rng(12)
        n_days, n_assets = 41, 12
        returns = rng.standard_normal((n_days - 1, n_assets)) * 0.02
        prices = np.vstack([np.ones(n_assets), np.cumprod(1 + returns, axis=0)]) * 100.0
        dates = [f"2023-{2 + day // 28:02d}-{day % 28 + 1:02d}" for day in range(n_days)]
        panel = self.make_panel(tmp_path, prices.tolist(), dates=dates)
        code, before, after = self.run_returns(tmp_path, panel, dates[21])
        assert code == EXIT_OK
        assert main(["test", "--x", str(before), "--y", str(after)]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert 0.0 <= payload["p_asymptotic"] <= 1.0


# frozen at build time: mates_test on the seed-42 null-a fixture (d=20, m=n=10)
GOLDEN_T_STAT = 8.928283293125736
