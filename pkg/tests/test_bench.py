"""Benchmark harness: problem zoo, methods, configs, CSV, report, CLI."""

import io
import math

import numpy as np
import pytest

from parsco.bench import (
    CSV_COLUMNS,
    ConfigError,
    baseline_sgd,
    depth_scaling_report,
    exactball_run,
    make_problem,
    parse_config,
    read_csv,
    run_experiment,
    verify_problem,
    write_csv,
)
from parsco.bench.cli import main as cli_main
from parsco.bench.harness import auto_baseline_T
from parsco.bench.problems import PROBLEM_KINDS
from parsco.core import RngStream


def zoo_stream(kind, d, tag="zoo"):
    return RngStream(40 + d, (tag, kind))


class TestProblems:
    @pytest.mark.parametrize("kind", PROBLEM_KINDS)
    @pytest.mark.parametrize("d", [1, 3])
    def test_recorded_optimum_verified(self, kind, d):
        verify_problem(make_problem(kind, d, zoo_stream(kind, d)))

    @pytest.mark.parametrize("kind", PROBLEM_KINDS)
    def test_certified_constants(self, kind):
        p = make_problem(kind, 6, zoo_stream(kind, 6))
        assert p.opt_value == 0.0
        assert np.linalg.norm(p.argmin) == pytest.approx(0.5, rel=1e-12)
        assert p.gap(p.argmin) == pytest.approx(0.0, abs=1e-12)
        s = zoo_stream(kind, 6, "pts")
        pts = s.standard_normal(shape=(300, 6))
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        pts = pts * (2.0 * p.R * s.uniform(shape=(300, 1)))
        grads = p.subgrad_batch(pts)  # L certified over the domain B(0, 2R)
        assert np.linalg.norm(grads, axis=1).max() <= p.L + 1e-9
        single = np.stack([p.subgrad(x) for x in pts[:10]])
        np.testing.assert_allclose(single, grads[:10], atol=1e-12)

    def test_max_of_linear_structure(self):
        p = make_problem("max-of-linear", 8, zoo_stream("max-of-linear", 8))
        A = p.meta["A"]
        # L is the largest piece gradient, and it is exactly 1
        assert np.linalg.norm(A, axis=1).max() == pytest.approx(1.0, abs=1e-12)
        # 0 in the convex hull of rows: f >= 0 everywhere
        pts = zoo_stream("max-of-linear", 8, "hull").standard_normal(
            shape=(500, 8))
        vals = np.array([p.value(x) for x in pts])
        assert vals.min() >= -1e-12

    def test_validation(self):
        s = zoo_stream("max-of-linear", 2)
        with pytest.raises(ValueError, match="unknown problem kind"):
            make_problem("ridge", 2, s)
        with pytest.raises(ValueError, match="xstar_norm"):
            make_problem("norm-distance", 2, s, xstar_norm=1.5)
        with pytest.raises(ValueError, match="d must be"):
            make_problem("norm-distance", 0, s)
        with pytest.raises(ValueError, match="d <= 3"):
            verify_problem(make_problem("norm-distance", 4, s))

    def test_handle_counts_match_ledger(self):
        p = make_problem("abs-coordinate", 3, zoo_stream("abs-coordinate", 3))
        tally = {}
        h = p.handle(tally)
        h.submit_batch(np.zeros((4, 3)))
        h.submit_batch(np.zeros((2, 3)))
        assert (tally["queries"], tally["rounds"]) == (6, 2)
        assert (h.ledger.query_count, h.ledger.query_depth) == (6, 2)


class TestBaselineSgd:
    def test_single_step(self):
        p = make_problem("norm-distance", 4, zoo_stream("norm-distance", 4))
        point, rec = baseline_sgd(p, 1, RngStream(0, ("b",)), eps=0.5)
        assert rec.query_depth == 1 and rec.query_count == 1
        assert rec.gap <= p.L * p.R + 1e-12
        assert np.linalg.norm(point) <= p.R + 1e-12

    def test_counters_sequential(self):
        p = make_problem("max-of-linear", 5, zoo_stream("max-of-linear", 5))
        _, rec = baseline_sgd(p, 137, RngStream(0, ("b",)), eps=0.1)
        assert rec.query_depth == 137
        assert rec.query_count == 137
        assert rec.est_work == 137 * 5

    def test_classical_rate_on_quadratic(self):
        # LR/sqrt(T) = 0.01 at T = 1e4; allow 3x slack on the mean
        gaps = []
        for seed in range(100):
            p = make_problem("smooth-quadratic", 2,
                             RngStream(seed, ("rate",)))
            _, rec = baseline_sgd(p, 10_000, RngStream(seed, ("run",)),
                                  eps=0.01)
            gaps.append(rec.gap)
        assert np.mean(gaps) <= 0.03

    def test_auto_T(self):
        p = make_problem("max-of-linear", 4, zoo_stream("max-of-linear", 4))
        assert auto_baseline_T(p, 0.05) == 400
        with pytest.raises(ValueError):
            baseline_sgd(p, 0, RngStream(0, ("b",)))


class TestExactball:
    def test_reaches_eps_every_seed(self):
        for seed in range(5):
            p = make_problem("max-of-linear", 3, RngStream(seed, ("xb",)))
            _, rec = exactball_run(p, 0.1, seed=seed)
            assert rec.gap <= 0.1
            assert rec.query_depth == rec.query_count  # sequential inner loop

    def test_deterministic(self):
        p = make_problem("norm-distance", 3, zoo_stream("norm-distance", 3))
        out1, rec1 = exactball_run(p, 0.2, seed=1)
        out2, rec2 = exactball_run(p, 0.2, seed=1)
        np.testing.assert_array_equal(out1, out2)
        assert rec1.gap == rec2.gap
        assert rec1.query_count == rec2.query_count


CONFIG_OK = """\
# demo sweep
problem = max-of-linear
d = 3
eps = 0.2
seeds = 5

[method baseline]
T = 64

[method exactball]
"""


class TestConfig:
    def test_happy_path(self):
        cfg = parse_config(CONFIG_OK, source="demo.cfg")
        assert cfg.problem == "max-of-linear"
        assert cfg.dims == (3,)
        assert cfg.eps_values == (0.2,)
        assert cfg.seeds == (0, 1, 2, 3, 4)
        assert [m.name for m in cfg.methods] == ["baseline", "exactball"]
        assert cfg.methods[0].options["T"] == 64
        assert cfg.n_cells() == 10
        assert len(cfg.source_hash) == 12

    def test_seed_forms(self):
        base = "problem = norm-distance\nd = 2\neps = 0.1\n{}\n[method baseline]\n"
        assert parse_config(base.format("seeds = 3")).seeds == (0, 1, 2)
        assert parse_config(base.format("seeds = 2..5")).seeds == (2, 3, 4, 5)
        assert parse_config(base.format("seeds = 1, 9, 4")).seeds == (1, 9, 4)

    def test_lists_and_defaults(self):
        cfg = parse_config(
            "problem = abs-coordinate\nd = 5, 10, 20\n"
            "eps = 0.2, 0.1, 0.05, 0.025\nseeds = 2\n[method full]\n")
        assert cfg.dims == (5, 10, 20)
        assert cfg.eps_values == (0.2, 0.1, 0.05, 0.025)
        assert cfg.xstar_norm == 0.5
        assert cfg.methods[0].options == {}

    @pytest.mark.parametrize("text, line, fragment", [
        ("problem max-of-linear", 1, "expected 'key = value'"),
        ("problem = max-of-linear\nrho = 3", 2, "unknown key 'rho'"),
        ("problem = max-of-linear\nd = 2\nd = 3", 3, "duplicate key 'd'"),
        ("problem = maxlin", 1, "unknown problem"),
        ("d = 1.5", 1, "expects an integer"),
        ("eps = fast", 1, "expects a number"),
        ("eps = -0.1", 1, "must be positive"),
        ("seeds = 4..1", 1, "range is empty"),
        ("[method sgd]", 1, "unknown method"),
        ("[method]", 1, "bad section header"),
        ("[method baseline]\n[method baseline]", 2, "configured twice"),
        ("[method baseline]\nouter = prox", 2, "unknown key 'outer'"),
        ("[method full]\nouter = fast", 2, "outer must be prox or accel"),
        ("[method exactball]\nT = 7", 2, "takes no keys"),
    ])
    def test_line_numbered_errors(self, text, line, fragment):
        with pytest.raises(ConfigError) as exc:
            parse_config(text, source="bad.cfg")
        assert exc.value.line == line
        assert fragment in str(exc.value)
        assert f"bad.cfg:{line}:" in str(exc.value)

    def test_missing_required_and_methods(self):
        with pytest.raises(ConfigError, match="missing required key 'eps'"):
            parse_config("problem = norm-distance\nd = 2\nseeds = 1\n"
                         "[method baseline]\n")
        with pytest.raises(ConfigError, match="no \\[method"):
            parse_config("problem = norm-distance\nd = 2\neps = 0.1\n"
                         "seeds = 1\n")


class TestRunExperiment:
    def test_cardinality_two_methods_five_seeds(self):
        cfg = parse_config(CONFIG_OK, source="demo.cfg")
        records = run_experiment(cfg)
        assert len(records) == 10
        assert [r.method for r in records] == ["baseline", "exactball"] * 5
        assert all(r.problem == "max-of-linear" and r.d == 3 for r in records)
        assert all(r.config_hash == cfg.source_hash for r in records)

    def test_deterministic_rerun_and_csv(self):
        cfg = parse_config(CONFIG_OK, source="demo.cfg")
        first = run_experiment(cfg)
        second = run_experiment(cfg)

        def csv_text(records):
            buf = io.StringIO()
            write_csv(records, buf)
            return buf.getvalue()

        wall_idx = CSV_COLUMNS.index("wall_ms")
        lines1 = csv_text(first).splitlines()
        lines2 = csv_text(second).splitlines()
        assert len(lines1) == len(lines2) == 12  # schema + header + 10 rows
        for a, b in zip(lines1, lines2):
            cells_a, cells_b = a.split(","), b.split(",")
            if len(cells_a) == len(CSV_COLUMNS) and cells_a[0] != "method":
                cells_a[wall_idx] = cells_b[wall_idx] = "WALL"
            assert cells_a == cells_b

    def test_exactball_gap_meets_eps(self):
        # end-to-end acceptance shape for the near-exact-oracle method
        cfg = parse_config(CONFIG_OK, source="demo.cfg")
        rows = [r for r in run_experiment(cfg) if r.method == "exactball"]
        hit = sum(r.gap <= r.eps for r in rows)
        assert hit >= 0.8 * len(rows)

    def test_base_seed_offsets_and_threads(self):
        cfg = parse_config(CONFIG_OK.replace("seeds = 5", "seeds = 2"),
                           source="demo.cfg")
        plain = run_experiment(cfg, base_seed=7)
        assert [r.seed for r in plain] == [7, 7, 8, 8]
        pooled = run_experiment(cfg, base_seed=7, threads=3)
        assert [(r.seed, r.method, r.gap, r.query_count) for r in pooled] \
            == [(r.seed, r.method, r.gap, r.query_count) for r in plain]

    def test_csv_round_trip(self):
        cfg = parse_config(CONFIG_OK.replace("seeds = 5", "seeds = 1"),
                           source="demo.cfg")
        records = run_experiment(cfg)
        buf = io.StringIO()
        write_csv(records, buf)
        buf.seek(0)
        rows = read_csv(buf)
        assert len(rows) == len(records)
        for row, rec in zip(rows, records):
            assert row["method"] == rec.method
            assert row["query_depth"] == rec.query_depth
            assert row["gap"] == pytest.approx(rec.gap, rel=1e-9)

    def test_missing_column_rejected(self):
        bad = "method,problem,d\nbaseline,norm-distance,2\n"
        with pytest.raises(ValueError, match="missing columns"):
            read_csv(io.StringIO(bad))


def synth_rows(exponent, *, method="synthetic", d=10, noise=None, seeds=1):
    eps_grid = (0.2, 0.1, 0.05, 0.025)
    rows = []
    for i, eps in enumerate(eps_grid):
        for s in range(seeds):
            depth = 50.0 * (1.0 / eps) ** exponent
            if noise is not None:
                depth *= noise[i * seeds + s]
            rows.append({"method": method, "d": d, "eps": eps,
                         "query_depth": depth})
    return rows


class TestScalingReport:
    def test_exact_two_thirds_law(self):
        fits = depth_scaling_report(synth_rows(2.0 / 3.0))
        assert len(fits) == 1
        assert fits[0].slope == pytest.approx(2.0 / 3.0, abs=1e-6)
        assert fits[0].band <= 1e-9

    def test_baseline_grid_slope(self):
        # T = (LR/eps)^2 exactly, as the auto rule picks
        rows = [{"method": "baseline", "d": 10, "eps": eps,
                 "query_depth": math.ceil((1.0 / eps) ** 2)}
                for eps in (0.2, 0.1, 0.05, 0.025)]
        fits = depth_scaling_report(rows)
        assert abs(fits[0].slope - 2.0) <= 0.2

    def test_groups_and_averaging(self):
        noise = [1.1, 0.9] * 4
        rows = synth_rows(1.0, seeds=2, noise=noise) + synth_rows(
            2.0, method="other", d=10)
        fits = depth_scaling_report(rows)
        assert [f.method for f in fits] == ["other", "synthetic"]
        assert fits[1].n_rows == 8
        assert fits[1].slope == pytest.approx(1.0, abs=1e-6)  # same per-eps mean

    def test_preconditions(self):
        rows = synth_rows(1.0)
        with pytest.raises(ValueError, match="at least 3"):
            depth_scaling_report([r for r in rows if r["eps"] > 0.06])
        narrow = [dict(r, eps=r["eps"] + 0.1) for r in rows]
        with pytest.raises(ValueError, match="spans only"):
            depth_scaling_report(narrow)
        with pytest.raises(ValueError, match="no rows"):
            depth_scaling_report([])


TINY_CONFIG = """\
problem = abs-coordinate
d = 2
eps = 0.2
seeds = 3

[method baseline]
T = 50
"""


class TestCli:
    def test_run_writes_csv(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(TINY_CONFIG)
        out = tmp_path / "results.csv"
        assert cli_main(["run", str(cfg), "-o", str(out)]) == 0
        with open(out) as fh:
            rows = read_csv(fh)
        assert len(rows) == 3
        assert {r["method"] for r in rows} == {"baseline"}

    def test_run_stdout_and_seed_flag(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(TINY_CONFIG.replace("seeds = 3", "seeds = 1"))
        assert cli_main(["run", str(cfg), "--seed", "5", "--threads", "2"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("# schema=")
        assert lines[1] == ",".join(CSV_COLUMNS)
        assert lines[2].split(",")[4] == "5"  # seed column offset applied

    def test_run_rejects_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("problem = maxlin\n")
        assert cli_main(["run", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert f"{cfg}:1:" in err
        assert cli_main(["run", str(tmp_path / "nope.cfg")]) == 2

    def test_scaling_report_roundtrip(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(TINY_CONFIG.replace("eps = 0.2",
                                           "eps = 0.2, 0.1, 0.05, 0.025"))
        out = tmp_path / "results.csv"
        assert cli_main(["run", str(cfg), "-o", str(out)]) == 0
        capsys.readouterr()
        assert cli_main(["scaling-report", str(out)]) == 0
        text = capsys.readouterr().out
        assert "baseline" in text and "slope=" in text

    def test_scaling_report_rejects_narrow_grid(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(TINY_CONFIG)
        out = tmp_path / "results.csv"
        assert cli_main(["run", str(cfg), "-o", str(out)]) == 0
        assert cli_main(["scaling-report", str(out)]) == 2
        assert "at least 3" in capsys.readouterr().err

    def test_kernel_bench(self, capsys):
        assert cli_main(["kernel-bench", "--dims", "4", "--lengths", "64"]) == 0
        text = capsys.readouterr().out
        assert "selected kernel backend" in text

    def test_check_invariants(self, capsys):
        assert cli_main(["check-invariants"]) == 0
        text = capsys.readouterr().out
        assert "all invariants hold" in text
        assert "FAIL" not in text
