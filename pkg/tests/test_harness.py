import csv
import json

import numpy as np
import pytest

from feedbackopt import harness as H
from feedbackopt.classical import StepSizeError
from feedbackopt.cli import main
from feedbackopt.problem import CnfFormula, emit_dimacs, generate_random_ksat, read_dimacs


def small_config(**kw):
    d = {
        "problem": {"n": 8, "k": 2, "alpha": 1.2, "count": 3, "seed": 5},
        "algorithms": [{"name": "cacao"}, {"name": "cc-ifalqon", "init": "random",
                                            "init_seeds": 2, "init_seed": 10}],
        "sweep": {"axis": "T", "values": [0.5, 1.0, 2.0]},
        "dt": 1e-3,
        "convergence": True,
    }
    d.update(kw)
    return d


# -- configuration -----------------------------------------------------------------

def test_clause_count():
    assert H.clause_count(12, alpha=1.2) == 14
    assert H.clause_count(10, alpha=4.2) == 42
    assert H.clause_count(10, alpha=1.2) == 12
    assert H.clause_count(7, m=3) == 3


def test_config_roundtrip_and_validation(tmp_path):
    cfg = H.ExperimentConfig.from_dict(small_config())
    assert H.ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        H.ExperimentConfig.from_dict(small_config(sweep={"axis": "T", "values": [2, 1]}))
    with pytest.raises(ValueError):
        H.ExperimentConfig.from_dict(small_config(bogus=1))
    with pytest.raises(ValueError):
        H.ProblemSpec(n=4, k=2, alpha=1.0, m=4)
    with pytest.raises(ValueError):
        H.AlgorithmSpec("falqon", init="random")
    with pytest.raises(ValueError):
        H.AlgorithmSpec("simulated-annealing")


def test_downsample_indices():
    t = np.arange(0, 64.0005, 1e-3)
    idx = H.downsample_indices(t, 20)
    assert idx[0] == 0 and idx[-1] == t.size - 1
    assert len(idx) <= 20
    assert np.all(np.diff(idx) > 0)
    assert H.downsample_indices(t[:5], 20).tolist() == [0, 1, 2, 3, 4]


# -- gen ---------------------------------------------------------------------------

def test_gen_family(tmp_path):
    assert main(["gen", "--n", "12", "--k", "2", "--alpha", "1.2", "--count", "100",
                 "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    files = sorted((tmp_path / "a").glob("*.cnf"))
    assert len(files) == 100
    assert all(read_dimacs(f).n_clauses == 14 for f in files)
    meta = json.loads(files[3].with_suffix(".json").read_text())
    assert meta["seed"] == 10 and meta["index"] == 3
    assert read_dimacs(files[3]) == generate_random_ksat(12, 2, 14, 10)


def test_gen_3sat_ratio_and_determinism(tmp_path):
    for name in ("a", "b"):
        main(["gen", "--n", "10", "--k", "3", "--alpha", "4.2", "--count", "3",
              "--out", str(tmp_path / name)])
    fa = sorted((tmp_path / "a").iterdir())
    fb = sorted((tmp_path / "b").iterdir())
    assert [f.name for f in fa] == [f.name for f in fb]
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(fa, fb))
    assert read_dimacs(fa[0]).n_clauses == 42


# -- solve -------------------------------------------------------------------------

def test_solve_empty_formula(tmp_path, capsys):
    p = tmp_path / "empty.cnf"
    p.write_text(emit_dimacs(CnfFormula.from_clauses(5, [])))
    out = tmp_path / "o"
    assert main(["solve", "--algorithm", "cacao", "--problem", str(p), "--T", "1",
                 "--out", str(out)]) == 0
    rec = json.loads((out / "record.json").read_text())
    assert rec["final_energy"] == 0.0
    assert rec["convergence_time"] == 0.0
    rows = list(csv.DictReader(open(out / "trajectory.csv")))
    assert len(rows) == 1001
    assert rows[0]["t"] == "0"


def test_solve_quantum_cap(tmp_path, capsys):
    p = tmp_path / "big.cnf"
    p.write_text(emit_dimacs(generate_random_ksat(30, 2, 36, 0)))
    assert main(["solve", "--algorithm", "falqon", "--problem", str(p), "--T", "1",
                 "--out", str(tmp_path / "o")]) == 2
    assert "quantum engine cap exceeded" in capsys.readouterr().err


def test_solve_missing_file(tmp_path, capsys):
    assert main(["solve", "--algorithm", "cacao", "--problem", str(tmp_path / "x.cnf"),
                 "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_solve_quantum_and_gnuplot(tmp_path, capsys):
    main(["gen", "--n", "5", "--k", "2", "--m", "6", "--count", "1", "--seed", "3",
          "--out", str(tmp_path / "f")])
    out = tmp_path / "o"
    assert main(["solve", "--algorithm", "ifalqon", "--problem",
                 str(tmp_path / "f" / "inst_0000.cnf"), "--T", "2", "--format", "gnuplot",
                 "--points", "20", "--out", str(out)]) == 0
    rec = json.loads((out / "record.json").read_text())
    assert rec["instance_seed"] == 3 and rec["dt"] == 1e-2
    assert len(rec["solution"]) == 5
    lines = (out / "trajectory.dat").read_text().splitlines()
    assert lines[0].startswith("# t energy")
    assert "beta_l1" in lines[0]
    assert 2 <= len(lines) - 1 <= 20


# -- bench -------------------------------------------------------------------------

def test_bench_outputs_and_aggregates(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(small_config(trace_points=10)))
    out = tmp_path / "run"
    assert main(["bench", str(cfg_path), "--out", str(out)]) == 0
    for name in ("config.json", "records.jsonl", "aggregates.csv", "series/cacao.dat"):
        assert (out / name).exists()
    recs = [json.loads(line) for line in open(out / "records.jsonl")]
    # 3 instances x (1 + 2 seeds) x 3 sweep points
    assert len(recs) == 27
    assert all(r["status"] == "ok" and r["final_energy"] >= 0 for r in recs)
    assert (out / recs[0]["trace"]).exists()
    aggs = list(csv.DictReader(open(out / "aggregates.csv")))
    assert len(aggs) == 6
    for row in aggs:
        dens = [r["final_energy_density"] for r in recs
                if r["algorithm"] == row["algorithm"] and r["T"] == float(row["T"])]
        assert int(row["runs"]) == len(dens)
        assert abs(float(row["mean_energy_density"]) - np.mean(dens)) < 1e-12
        assert abs(float(row["std_energy_density"]) - np.std(dens)) < 1e-12
        conv = [r for r in recs if r["algorithm"] == row["algorithm"]
                and r["T"] == float(row["T"])]
        assert int(row["censored"]) == sum(r["censored"] for r in conv)


def test_bench_t_sweep_prefix_consistency():
    cfg = H.ExperimentConfig.from_dict(small_config())
    recs, _ = H.run_experiment(cfg, write=False)
    r = [x for x in recs if x.algorithm == "cacao" and x.instance == 1]
    f = generate_random_ksat(8, 2, 9, 6)
    for rec in r:
        direct = H.simulate("cacao", f, rec.T, 1e-3).final_energy
        assert rec.final_energy == pytest.approx(direct, abs=1e-12)


def test_bench_n_sweep_and_failures():
    cfg = H.ExperimentConfig.from_dict({
        "problem": {"n": 4, "k": 2, "m": 5, "count": 2},
        "algorithms": [{"name": "falqon"}, {"name": "hot-cacao"}],
        "sweep": {"axis": "n", "values": [4, 18]},
        "T": 0.2,
    })
    recs, aggs = H.run_experiment(cfg, write=False)
    failed = [r for r in recs if r.status == "failed"]
    assert len(failed) == 2 and all(r.algorithm == "falqon" and r.n == 18 for r in failed)
    assert "cap" in failed[0].error
    row = next(a for a in aggs if a["algorithm"] == "falqon" and a["n"] == 18)
    assert row["runs"] == 0 and row["failed"] == 2
    assert all(r.pair_scope == "graph" for r in recs if r.algorithm == "hot-cacao")


def test_bench_determinism_and_workers():
    cfg = H.ExperimentConfig.from_dict(small_config())
    a, _ = H.run_experiment(cfg, write=False)
    b, _ = H.run_experiment(cfg, write=False)
    cfg.workers = 2
    c, _ = H.run_experiment(cfg, write=False)
    assert [r.comparable() for r in a] == [r.comparable() for r in b]
    assert [r.comparable() for r in a] == [r.comparable() for r in c]


def test_record_roundtrip():
    r = H.RunRecord(instance=0, instance_seed=3, algorithm="cacao", init_seed=None, n=4,
                    m=5, T=1.0, dt=1e-3, final_energy=0.5, wall_seconds=1.2)
    back = H.RunRecord.from_dict(json.loads(r.to_json()))
    assert back == r
    assert "wall_seconds" not in r.comparable()


# -- compare -----------------------------------------------------------------------

def test_compare_empty_formula():
    rows = H.compare_family([CnfFormula.from_clauses(3, [])], T_max=2.0)
    assert len(rows) == 2
    for r in rows:
        assert (r["quantum_density"], r["classical_density"]) == (0.0, 0.0)
    s = H.summarize_compare(rows)
    assert s["falqon/cc-falqon"] == {"quantum_better": 0, "classical_better": 0,
                                     "ties": 1, "instances": 1}


def test_compare_censoring():
    f = [generate_random_ksat(6, 2, 7, 1)]
    rows = H.compare_family(f, T_max=0.5, pairs=(("falqon", "cc-falqon"),))
    r = rows[0]
    # FALQON starts with beta = 0 and keeps accelerating over the first half time unit
    assert r["quantum_censored"] and r["quantum_T"] == pytest.approx(0.5)


def test_compare_cli(tmp_path, capsys):
    main(["gen", "--n", "5", "--k", "2", "--m", "6", "--count", "2",
          "--out", str(tmp_path / "f")])
    assert main(["compare", "--problems", str(tmp_path / "f"), "--T-max", "5",
                 "--out", str(tmp_path / "c")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "c" / "compare.csv")))
    assert len(rows) == 4
    summary = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert summary["ifalqon/cc-ifalqon"]["instances"] == 2


# -- dynamics ----------------------------------------------------------------------

def test_dynamics_cacao_controls(tmp_path, capsys):
    main(["gen", "--n", "10", "--k", "3", "--alpha", "4.2", "--count", "1",
          "--out", str(tmp_path / "f")])
    out = tmp_path / "d"
    assert main(["dynamics", "--problem", str(tmp_path / "f" / "inst_0000.cnf"),
                 "--algorithms", "cacao", "hot-cacao-plus", "--seeds", "2", "--T", "4",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "cacao_s0.csv")))
    assert len(rows) <= 20
    assert all(float(r["norm_beta_x"]) == 0 and float(r["norm_beta_pair"]) == 0
               for r in rows)
    assert (out / "hot-cacao-plus_s1.csv").exists()


def test_dynamics_hot_plus_x_peak():
    f = generate_random_ksat(40, 3, 168, 2)
    s = H.dynamics_series("hot-cacao-plus", f, 16.0, 1e-3, init_seed=0)
    x, y, pair = s["norm_beta_x"], s["norm_beta_y"], s["norm_beta_pair"]
    k = int(np.argmax(x))
    assert 0 < k < x.size - 1  # rises, then falls
    late = x.size * 3 // 4
    # relative to their own peaks, Y and pair controls have decayed further
    assert y[late] / y.max() < x[late] / x.max()
    assert pair[late] / pair.max() < x[late] / x.max()


def test_dynamics_depends_on_init():
    f = generate_random_ksat(10, 3, 42, 4)
    finals = [H.simulate("hot-cacao-plus", f, 16.0, 1e-3, init_seed=s).final_energy
              for s in range(10)]
    assert max(finals) - min(finals) > 1e-3


def test_selftest_cli(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_simulate_drift_override():
    # instance 3 at N=1000 trips the guard on the very first HOT-CACAO step
    f = generate_random_ksat(1000, 3, H.clause_count(1000, alpha=4.2), 3)
    with pytest.raises(StepSizeError):
        H.simulate("hot-cacao", f, 0.005, 1e-3, init_seed=0)
    tr = H.simulate("hot-cacao", f, 0.005, 1e-3, init_seed=0, abort_on_drift=False)
    assert tr.max_drift > 1e-6
    assert np.allclose(np.linalg.norm(tr.final_state.m, axis=1), 1.0)
