import io
import subprocess
import sys

import numpy as np
import pytest

from pairprox import applications as apps
from pairprox import cli, linalg, operators as ops, solvers


def write_example_problem(tmp_path):
    qp = apps.QPProblem(
        q=2.0 * np.eye(2), c=np.zeros(2), constraint=np.array([[1.0, 1.0]]), d=np.array([2.0])
    )
    path = tmp_path / "problem.json"
    apps.write_qp(str(path), qp)
    return path


class TestSolveKKTCommand:
    def test_known_problem_exits_zero(self, tmp_path, capsys):
        problem = write_example_problem(tmp_path)
        out = tmp_path / "solution.txt"
        trace = tmp_path / "trace.csv"
        code = cli.main(["solve-kkt", str(problem), "--out", str(out), "--trace", str(trace)])
        assert code == 0
        solution = linalg.read_vector(out)
        assert np.allclose(solution, [1.0, 1.0, -2.0], atol=1e-7)
        parsed = solvers.read_trace_csv(trace)
        assert parsed.residuals[-1] <= 1e-8
        assert "Converged" in capsys.readouterr().out

    def test_malformed_matrix_file(self, tmp_path, capsys):
        problem = write_example_problem(tmp_path)
        (tmp_path / "problem-Q.mat").write_text("not a header\n1 2\n")
        code = cli.main(["solve-kkt", str(problem)])
        assert code == 1
        assert "rows cols" in capsys.readouterr().err

    def test_unreachable_tolerance_exits_two(self, tmp_path):
        problem = write_example_problem(tmp_path)
        code = cli.main(["solve-kkt", str(problem), "--tol", "1e-20", "--max-iters", "5"])
        assert code == 2

    def test_missing_file_exits_one(self, capsys):
        assert cli.main(["solve-kkt", "/nonexistent/problem.json"]) == 1
        assert "error:" in capsys.readouterr().err


class TestLeastSquaresCommand:
    def test_inconsistent_diag_instance(self, tmp_path, capsys):
        mat = tmp_path / "a.mat"
        rhs = tmp_path / "b.txt"
        linalg.write_matrix(mat, np.diag([1.0, 0.0]))
        linalg.write_vector(rhs, np.array([1.0, 1.0]))
        out = tmp_path / "x.txt"
        code = cli.main(["least-squares", str(mat), str(rhs), "--kappa", "0.2", "--out", str(out)])
        assert code == 0
        x = linalg.read_vector(out)
        assert x[0] == pytest.approx(1.0, abs=1e-6)
        stdout = capsys.readouterr().out
        assert "data error" in stdout


class TestBenchCommand:
    def test_small_bench_csv_and_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        code = cli.main([
            "bench", "--sizes", "12,18", "--trials", "2", "--seed", "7",
            "--kappa", "0.2", "--tol", "1e-6", "--out", str(out),
        ])
        assert code == 0
        records = cli.read_bench_csv(out)
        assert len(records) == 4
        assert [(r.n, r.trial) for r in records] == [(12, 0), (12, 1), (18, 0), (18, 1)]
        assert all(r.status == "Converged" and r.ek <= 1e-6 for r in records)
        assert "median_iters" in capsys.readouterr().out

    def test_single_size_determinism_modulo_seconds(self):
        spec = cli.BenchSpec(sizes=(4,), trials=1, seed=3, tolerance=1e-6)
        a = cli.run_bench(spec)
        b = cli.run_bench(spec)
        stripped = lambda recs: [(r.n, r.trial, r.seed, r.iterations, r.ek, r.status) for r in recs]
        assert stripped(a) == stripped(b)

    def test_workers_do_not_change_results(self, monkeypatch):
        spec = cli.BenchSpec(sizes=(8, 12), trials=2, seed=1, tolerance=1e-6)
        seq = cli.run_bench(spec, workers=1)
        par = cli.run_bench(spec, workers=4)
        key = lambda recs: [(r.n, r.trial, r.seed, r.iterations, r.ek, r.status) for r in recs]
        assert key(seq) == key(par)
        monkeypatch.setenv(cli.WORKERS_ENV, "3")
        env_based = cli.run_bench(spec)
        assert key(env_based) == key(seq)

    def test_nonsingular_counterpart_still_converges(self):
        # kernel directions carry no error from x0 = 0 with b in ran A, so
        # iteration counts stay comparable rather than strictly smaller
        for n, seed in ((24, 0), (64, 1)):
            singular = cli.run_trial(cli.BenchSpec(sizes=(n,), trials=1, seed=seed, zero_fraction=0.1), n, 0)
            nonsingular = cli.run_trial(cli.BenchSpec(sizes=(n,), trials=1, seed=seed, zero_fraction=0.0), n, 0)
            assert nonsingular.status == "Converged"
            assert abs(nonsingular.iterations - singular.iterations) <= 2

    def test_default_kappa_applies_without_flags(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = cli.main(["bench", "--sizes", "8", "--trials", "1", "--tol", "1e-5", "--out", str(out)])
        assert code == 0
        assert all(r.status == "Converged" for r in cli.read_bench_csv(out))

    def test_kappa_fraction_mode(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = cli.main([
            "bench", "--sizes", "8", "--trials", "1", "--tol", "1e-5",
            "--kappa-fraction", "0.4", "--out", str(out),
        ])
        assert code == 0
        assert all(r.status == "Converged" for r in cli.read_bench_csv(out))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            cli.BenchSpec(sizes=(), trials=1)
        with pytest.raises(ValueError):
            cli.BenchSpec(sizes=(4,), trials=0)
        with pytest.raises(ValueError):
            cli.BenchSpec(sizes=(4,), kappa=None, kappa_fraction=None)
        with pytest.raises(ValueError):
            cli.BenchSpec(sizes=(4,), kappa=0.2, kappa_fraction=0.3)


class TestCheckPairCommand:
    def test_monotone_pair_exits_zero(self, tmp_path, capsys):
        f_path = tmp_path / "f.json"
        v_path = tmp_path / "v.json"
        ops.save_operator(str(f_path), ops.trig_block_operator())
        ops.save_operator(str(v_path), ops.swap_operator())
        code = cli.main([
            "check-pair", str(f_path), str(v_path), "--box=-5,5", "--samples", "4000", "--seed", "2",
        ])
        assert code == 0
        assert "monotone-evidence" in capsys.readouterr().out

    def test_identity_pair_exits_zero(self, tmp_path):
        path = tmp_path / "id.json"
        ops.save_operator(str(path), ops.identity_operator(2))
        assert cli.main(["check-pair", str(path), str(path), "--samples", "500"]) == 0

    def test_remark_counterexample_exits_three(self, tmp_path, capsys):
        a = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, -2.0, -3.0]])
        f_path = tmp_path / "f.json"
        v_path = tmp_path / "v.json"
        ops.save_operator(str(f_path), ops.Affine(a))
        ops.save_operator(str(v_path), ops.Affine(a + 0.5 * np.eye(3)))
        code = cli.main([
            "check-pair", str(f_path), str(v_path),
            "--box=-0.05,0.05", "--samples", "1000", "--seed", "3",
            "--include-pair", "0,-3,2:0,0,0",
        ])
        assert code == 3
        out = capsys.readouterr().out
        assert "violation-found" in out
        assert "violation value: -0.5" in out

    def test_bad_pair_argument(self, tmp_path, capsys):
        path = tmp_path / "id.json"
        ops.save_operator(str(path), ops.identity_operator(2))
        code = cli.main(["check-pair", str(path), str(path), "--include-pair", "1,2"])
        assert code == 1


class TestDemoCommand:
    @pytest.mark.parametrize("name", ["example-1", "example-2", "least-squares", "dca-divergence"])
    def test_demos_run_clean(self, name, tmp_path, capsys):
        code = cli.main(["demo", name, "--out", str(tmp_path / "traces")])
        assert code == 0
        assert capsys.readouterr().out

    def test_demo_traces_parse_back(self, tmp_path):
        out_dir = tmp_path / "traces"
        assert cli.main(["demo", "example-2", "--out", str(out_dir)]) == 0
        files = sorted(out_dir.iterdir())
        assert files
        for path in files:
            parsed = solvers.read_trace_csv(path)
            assert parsed.residuals

    def test_unknown_demo_exits_one(self, capsys):
        assert cli.main(["demo", "no-such-demo"]) == 1
        assert "unknown demo" in capsys.readouterr().err


class TestEntryPoints:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pairprox", "demo", "dca-divergence"],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0
        assert "Diverged" in proc.stdout

    def test_usage_error_returns_one(self):
        assert cli.main(["bogus-subcommand"]) == 1

    def test_help_returns_zero(self):
        assert cli.main(["--help"]) == 0


class TestBenchCsvFormat:
    def test_header_and_reader_guard(self):
        assert cli.bench_csv_text([]).splitlines()[0] == "n,trial,seed,iters,seconds,ek,status"
        with pytest.raises(ValueError, match="header"):
            cli.read_bench_csv(io.StringIO("x,y\n1,2\n"))

    def test_records_round_trip(self):
        records = [
            cli.RunRecord(4, 0, 123, 17, 0.125, 3.5e-5, "Converged"),
            cli.RunRecord(4, 1, 456, 100, 1.0, 2.0, "MaxIters"),
        ]
        back = cli.read_bench_csv(io.StringIO(cli.bench_csv_text(records)))
        assert back == records
