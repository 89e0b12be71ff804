import csv
import json

import pytest

from ublr import read_ublr
from ublr.cli import main


def run_cli(args):
    try:
        return main(args)
    except SystemExit as exc:  # argparse error paths
        return exc.code


class TestCompress:
    def test_synthetic_a2_reaches_exact_rank_accuracy(self, tmp_path):
        report_path = tmp_path / "report.json"
        code = run_cli([
            "compress", "--op", "synthetic", "--n", "1280", "--d", "1",
            "--b", "8", "--k", "3", "--method", "A2", "--seed", "1",
            "--report", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["relative_error"] <= 1e-9
        assert report["config"]["N"] == 1280
        assert report["method"] == "A2"

    def test_a3_phase_one_matvecs(self, tmp_path, capsys):
        code = run_cli([
            "compress", "--op", "synthetic", "--n", "640", "--d", "1",
            "--b", "8", "--k", "3", "--method", "A3", "--seed", "1",
        ])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        r = 3 + 10
        phase1 = report["matvecs"]["I"]
        assert phase1["A"] + phase1["Astar"] == 2 * 8 * r

    def test_missing_operator_params_exit_2(self, capsys):
        code = run_cli(["compress", "--op", "laplace2d", "--k", "5", "--seed", "1"])
        assert code == 2
        assert "--n" in capsys.readouterr().err

    def test_save_container(self, tmp_path):
        saved = tmp_path / "rep.ublr"
        code = run_cli([
            "compress", "--op", "synthetic", "--n", "320", "--d", "1",
            "--b", "8", "--k", "2", "--method", "A1", "--seed", "3",
            "--report", str(tmp_path / "r.json"), "--save", str(saved),
        ])
        assert code == 0
        rep = read_ublr(saved)
        assert rep.n == 320

    @pytest.mark.parametrize("method", ["A1", "A2", "A3", "B1", "B2"])
    def test_every_method_id_runs(self, method, tmp_path):
        report_path = tmp_path / "r.json"
        code = run_cli([
            "compress", "--op", "synthetic", "--n", "320", "--d", "1",
            "--b", "8", "--k", "2", "--method", method, "--seed", "3",
            "--report", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["method"] == method
        assert report["relative_error"] <= 1e-7

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("UBLR_SEED", "77")
        report_path = tmp_path / "report.json"
        code = run_cli([
            "compress", "--op", "synthetic", "--n", "320", "--d", "1",
            "--b", "8", "--k", "2", "--method", "A1",
            "--report", str(report_path),
        ])
        assert code == 0
        assert json.loads(report_path.read_text())["config"]["seed"] == 77


class TestSweep:
    def test_k_sweep_errors_decrease(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run_cli([
            "sweep", "--op", "laplace2d", "--n-list", "256",
            "--k-list", "5,10,15", "--methods", "A2", "--seed", "2",
            "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        errors = [float(r["rel_error"]) for r in rows]
        assert errors[0] > errors[1] > errors[2]
        assert all(r["error"] == "" for r in rows)

    def test_empty_grid_header_only(self, tmp_path):
        out = tmp_path / "empty.csv"
        code = run_cli([
            "sweep", "--op", "laplace2d", "--n-list", "", "--k-list", "",
            "--methods", "A2", "--seed", "2", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("N,b,m,k,p,d,method")

    def test_partial_failure_recorded(self, tmp_path):
        out = tmp_path / "fail.csv"
        code = run_cli([
            "sweep", "--op", "synthetic", "--n-list", "64", "--k-list", "2,200",
            "--methods", "A1", "--d", "1", "--b", "4", "--seed", "2",
            "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["error"] == "" and rows[0]["rel_error"] != ""
        assert rows[1]["error"] != ""  # k=200 cannot fit the blocks

    def test_type_b_methods_sweep(self, tmp_path):
        out = tmp_path / "typeb.csv"
        code = run_cli([
            "sweep", "--op", "synthetic", "--n-list", "320", "--k-list", "2",
            "--methods", "B1,B2", "--d", "1", "--b", "8", "--seed", "6",
            "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["method"] for r in rows] == ["B1", "B2"]
        for row in rows:
            assert row["error"] == ""
            assert float(row["rel_error"]) <= 1e-7
            assert int(row["matvecs_III"]) == 0  # discrepancy reuses sketches

    def test_method_sweep_matched_seeds(self, tmp_path):
        out = tmp_path / "methods.csv"
        code = run_cli([
            "sweep", "--op", "laplace2d", "--n-list", "576", "--k-list", "10",
            "--methods", "A1,A2,A3", "--seed", "4", "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = {r["method"]: r for r in csv.DictReader(fh)}
        assert len({r["seed"] for r in rows.values()}) == 1
        assert int(rows["A2"]["matvecs_I"]) < int(rows["A1"]["matvecs_I"])
        assert int(rows["A2"]["matvecs_I"]) < int(rows["A3"]["matvecs_I"])


class TestAspectRatios:
    def test_fallback_rows_equal_without_extra_cols(self, tmp_path):
        out = tmp_path / "ar.csv"
        code = run_cli([
            "aspect-ratios", "--b-list", "16", "--d", "1",
            "--distributions", "gaussian", "--extra-cols-list", "0",
            "--seeds", "1,2", "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = [r for r in csv.DictReader(fh) if r["row_type"] == "block"]
        assert rows
        for row in rows:
            assert row["rho_base"] == row["rho_optimized"]

    def test_optimized_improves_with_extra_cols(self, tmp_path):
        out = tmp_path / "ar.csv"
        code = run_cli([
            "aspect-ratios", "--b-list", "16", "--d", "1",
            "--distributions", "gaussian", "--extra-cols-list", "1",
            "--seeds", "1,2,3", "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = [r for r in csv.DictReader(fh) if r["row_type"] == "block"]
        for row in rows:
            assert float(row["rho_optimized"]) <= float(row["rho_base"]) + 1e-9

    def test_summary_rows_present(self, tmp_path):
        out = tmp_path / "ar.csv"
        run_cli([
            "aspect-ratios", "--b-list", "9", "--d", "1",
            "--distributions", "haar", "--extra-cols-list", "0",
            "--seeds", "1", "--out", str(out),
        ])
        with open(out) as fh:
            stats = [r["stat"] for r in csv.DictReader(fh) if r["row_type"] == "summary"]
        assert stats == ["q1", "median", "q3"]

    def test_bad_block_count_exit_2(self, capsys):
        code = run_cli([
            "aspect-ratios", "--b-list", "15", "--d", "2",
            "--out", "/tmp/never.csv",
        ])
        assert code == 2

    def test_median_improves_with_more_extra_cols(self, tmp_path):
        out = tmp_path / "study.csv"
        code = run_cli([
            "aspect-ratios", "--b-list", "64", "--d", "2",
            "--distributions", "gaussian", "--extra-cols-list", "0,1,2,3",
            "--seeds", "2", "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            medians = {
                int(r["extra_cols"]): float(r["rho_optimized"])
                for r in csv.DictReader(fh)
                if r["row_type"] == "summary" and r["stat"] == "median"
            }
        assert medians[0] > medians[1] >= medians[2] >= medians[3]


class TestSlabSchurCli:
    def test_compress_small_slab(self, tmp_path, capsys):
        code = run_cli([
            "compress", "--op", "slab-schur", "--nx", "16", "--ny", "16",
            "--nz", "4", "--k", "8", "--b", "16", "--method", "A2", "--seed", "1",
        ])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["config"]["N"] == 256
        assert report["relative_error"] <= 1e-2

    def test_missing_nx_exit_2(self, capsys):
        code = run_cli(["compress", "--op", "slab-schur", "--k", "8"])
        assert code == 2
        assert "--nx" in capsys.readouterr().err

    def test_tagging_needs_enough_blocks_exit_2(self, capsys):
        code = run_cli([
            "compress", "--op", "synthetic", "--n", "128", "--d", "2",
            "--b", "4", "--k", "3", "--method", "A2", "--seed", "1",
        ])
        assert code == 2
        assert "tagging" in capsys.readouterr().err

    def test_grid_points_need_matching_n_exit_2(self, capsys):
        code = run_cli([
            "compress", "--op", "laplace2d", "--n", "1000", "--k", "10",
            "--points", "grid", "--seed", "1",
        ])
        assert code == 2
        assert "grid" in capsys.readouterr().err


class TestParallelSweep:
    def test_jobs_matches_sequential(self, tmp_path):
        seq, par = tmp_path / "seq.csv", tmp_path / "par.csv"
        base = [
            "sweep", "--op", "synthetic", "--n-list", "128,256", "--k-list", "3",
            "--methods", "A2", "--d", "1", "--b", "8", "--seed", "5",
        ]
        assert run_cli(base + ["--out", str(seq)]) == 0
        assert run_cli(base + ["--out", str(par), "--jobs", "2"]) == 0

        def strip_times(path):
            with open(path) as fh:
                rows = list(csv.DictReader(fh))
            for row in rows:
                for col in ("time_I_s", "time_II_s", "time_III_s"):
                    row.pop(col)
            return rows

        assert strip_times(seq) == strip_times(par)
