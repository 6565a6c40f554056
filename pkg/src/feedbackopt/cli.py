"""``feedbackopt`` command line: gen, solve, bench, compare, dynamics, selftest."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import harness as H
from .classical import Algorithm, StepSizeError
from .problem import DimacsError, read_dimacs
from .quantum import DEFAULT_CAP, HARD_CAP, PropagationError, QuantumCapError


def _positive(kind):
    def conv(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {s}")
        return v
    return conv


def _problem_args(p, required=True):
    p.add_argument("--n", type=_positive(int), required=required)
    p.add_argument("--k", type=_positive(int), required=required)
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--alpha", type=_positive(float))
    g.add_argument("--m", type=int)
    p.add_argument("--count", type=_positive(int), default=20)
    p.add_argument("--seed", type=int, default=0, help="instance seed base")


def cmd_gen(a) -> int:
    m = H.clause_count(a.n, alpha=a.alpha, m=a.m)
    paths = H.write_family(a.out, a.n, a.k, m, a.count, a.seed, alpha=a.alpha)
    print(f"wrote {len(paths)} instances (n={a.n}, k={a.k}, m={m}) to {a.out}")
    return 0


def cmd_solve(a) -> int:
    formula = read_dimacs(a.problem)
    quantum = H.is_quantum(a.algorithm)
    dt = a.dt if a.dt is not None else (1e-2 if quantum else 1e-3)
    init_seed = a.seed if a.init == "random" else None
    if quantum and a.init == "random":
        print("note: quantum runs start from the uniform superposition; --init ignored",
              file=sys.stderr)
        init_seed = None
    elif a.init == "random" and Algorithm(a.algorithm).planar:
        print(f"note: {a.algorithm} random init is drawn in the X-Z plane", file=sys.stderr)
    t0 = time.perf_counter()
    if quantum:
        traj = H.simulate(a.algorithm, formula, a.T, dt, quantum_cap=a.cap,
                          emulate_restart=a.emulate_restart)
    else:
        traj = H.simulate(a.algorithm, formula, a.T, dt, init_seed=init_seed, pairs=a.pairs,
                          abort_on_drift=not a.allow_drift)
    wall = time.perf_counter() - t0
    conv = H.convergence_time(traj)
    n = formula.n_vars
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if a.format == "csv" else "dat"
    trace = H.write_trace(out / f"trajectory.{ext}", traj, fmt=a.format, points=a.points)
    side = Path(a.problem).with_suffix(".json")
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    rec = H.RunRecord(
        instance=int(meta.get("index", 0)), instance_seed=int(meta.get("seed", -1)),
        algorithm=a.algorithm, init_seed=init_seed, n=n, m=formula.n_clauses,
        T=a.T, dt=dt, final_energy=traj.final_energy,
        final_energy_density=traj.final_energy / n, convergence_time=conv,
        censored=conv is None, max_drift=None if quantum else traj.max_drift,
        pair_scope=a.pairs if a.algorithm in ("hot-cacao", "hot-cacao-plus") else None,
        wall_seconds=wall, trace=trace.name)
    d = json.loads(rec.to_json())
    if "solution" in traj.meta:
        d["solution"] = traj.meta["solution"].tolist()
    elif traj.final_state is not None:
        d["solution"] = np.where(traj.final_state.m[:, 2] >= 0, 1, -1).tolist()
    text = json.dumps(d, sort_keys=True, indent=2)
    (out / "record.json").write_text(text + "\n", encoding="utf-8")
    if a.snapshots and not quantum:
        np.save(out / "final_state.npy", traj.final_state.m)
    print(text)
    return 0


def cmd_bench(a) -> int:
    cfg = H.ExperimentConfig.load(a.config)
    if a.workers is not None:
        cfg.workers = a.workers
    out = a.out or cfg.output_dir
    records, aggs = H.run_experiment(cfg, out)
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records ({failed} failed), {len(aggs)} aggregate rows -> {out}")
    return 0


def cmd_compare(a) -> int:
    if a.problems:
        formulas = [f for _, f in H.load_family(a.problems)]
    else:
        if a.n is None or a.k is None or (a.alpha is None and a.m is None):
            raise SystemExit("compare: give --problems DIR or --n/--k/--alpha")
        m = H.clause_count(a.n, alpha=a.alpha, m=a.m)
        formulas = H.make_family(a.n, a.k, m, a.count, a.seed)
    T_max = 1e4 if a.long else a.T_max
    rule = H.ConvergenceRule(threshold=a.threshold, dt_check=a.dt_check,
                             criterion=a.criterion)
    rows = H.compare_family(formulas, T_max=T_max, classical_dt=a.dt,
                            quantum_dt=a.quantum_dt, rule=rule,
                            quantum_T_max=a.quantum_T_max)
    summary = H.summarize_compare(rows)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = list(rows[0]) if rows else []
    with open(out / "compare.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(H._fmt(r[c]) if not isinstance(r[c], bool) else str(int(r[c]))
                              for c in cols) + "\n")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_dynamics(a) -> int:
    formula = read_dimacs(a.problem)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [None] if a.init == "fixed" else [a.seed + r for r in range(a.seeds)]
    for name in a.algorithms:
        if H.is_quantum(name):
            raise SystemExit("dynamics: classical algorithms only")
        for s in seeds:
            ser = H.dynamics_series(name, formula, a.T, a.dt, init_seed=s, pairs=a.pairs,
                                    points=a.points)
            tag = "fixed" if s is None else f"s{s}"
            path = out / f"{name}_{tag}.{'csv' if a.format == 'csv' else 'dat'}"
            data = np.column_stack(list(ser.values()))
            if a.format == "csv":
                np.savetxt(path, data, fmt="%.17g", delimiter=",",
                           header=",".join(ser), comments="")
            else:
                np.savetxt(path, data, fmt="%.17g", header=" ".join(ser))
            print(f"{name} {tag}: final energy density {ser['energy_density'][-1]:.6g}"
                  f" -> {path}")
    return 0


def cmd_selftest(a) -> int:
    from .selftest import run_selftest
    return 0 if run_selftest(verbose=True) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="feedbackopt",
                                 description="Feedback-based optimization of k-SAT energies.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random k-SAT family")
    _problem_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run one algorithm on one DIMACS file")
    p.add_argument("--algorithm", required=True, choices=H.ALGORITHMS)
    p.add_argument("--problem", required=True)
    p.add_argument("--T", type=float, default=64.0)
    p.add_argument("--dt", type=_positive(float), default=None,
                   help="integration step (classical, default 1e-3) or feedback "
                        "interval (quantum, default 1e-2)")
    p.add_argument("--init", choices=("fixed", "random"), default="fixed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", choices=("graph", "full"), default="graph")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP,
                   help=f"largest N for quantum runs (at most {HARD_CAP})")
    p.add_argument("--emulate-restart", action="store_true")
    p.add_argument("--allow-drift", action="store_true",
                   help="keep going when a step's norm drift exceeds 1e-6")
    p.add_argument("--out", default="solve_out")
    p.add_argument("--format", choices=("csv", "gnuplot"), default="csv")
    p.add_argument("--points", type=int, default=0, help="downsample trace (0 = all)")
    p.add_argument("--snapshots", action="store_true", help="save final spins as .npy")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=_positive(int), default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="quantum vs classical counterpart per instance")
    p.add_argument("--problems", default=None, help="directory of .cnf files")
    _problem_args(p, required=False)
    p.add_argument("--T-max", dest="T_max", type=_positive(float), default=1e3)
    p.add_argument("--quantum-T-max", dest="quantum_T_max", type=_positive(float),
                   default=None)
    p.add_argument("--long", action="store_true", help="ceiling 1e4")
    p.add_argument("--dt", type=_positive(float), default=1e-3)
    p.add_argument("--quantum-dt", dest="quantum_dt", type=_positive(float), default=1e-2)
    p.add_argument("--threshold", type=_positive(float), default=1e-2)
    p.add_argument("--dt-check", dest="dt_check", type=_positive(float), default=1e-3)
    p.add_argument("--criterion", choices=("rate", "drop"), default="rate")
    p.add_argument("--out", default="compare_out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dynamics", help="energy and control-strength traces")
    p.add_argument("--problem", required=True)
    p.add_argument("--algorithms", nargs="+", required=True, choices=H.CLASSICAL)
    p.add_argument("--init", choices=("fixed", "random"), default="random")
    p.add_argument("--seeds", type=_positive(int), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T", type=float, default=64.0)
    p.add_argument("--dt", type=_positive(float), default=1e-3)
    p.add_argument("--pairs", choices=("graph", "full"), default="graph")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--format", choices=("csv", "gnuplot"), default="csv")
    p.add_argument("--out", default="dynamics_out")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QuantumCapError, DimacsError, StepSizeError, PropagationError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
