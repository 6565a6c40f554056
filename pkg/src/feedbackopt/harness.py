"""Experiment orchestration: instance families, runs, sweeps and aggregates.

Feedback dynamics are causal: the controls at time ``t`` depend only on the
state at ``t``. A run with operation time ``T`` is therefore the prefix of
any longer run from the same start, and a sweep over ``T`` is served by a
single run to the largest ``T`` sampled at every sweep point.

Seeds: instance ``i`` of a family uses ``instance_seed + i``; repetition
``r`` of a random initial state uses ``init_seed + r``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import (Algorithm, IntegratorConfig, PairScope, Trajectory,
                        detect_convergence, init_fixed, init_random, run)
from .problem import (CnfFormula, cnf_to_hubo, generate_random_ksat, read_dimacs,
                      write_instance)
from .quantum import DEFAULT_CAP, QuantumAlgorithm, QuantumRunConfig, run_feedback

__all__ = [
    "ALGORITHMS",
    "CLASSICAL",
    "QUANTUM",
    "CONVERGENCE",
    "AlgorithmSpec",
    "ProblemSpec",
    "SweepSpec",
    "ExperimentConfig",
    "RunRecord",
    "ConvergenceRule",
    "is_quantum",
    "clause_count",
    "make_family",
    "write_family",
    "load_family",
    "simulate",
    "convergence_time",
    "downsample_indices",
    "write_trace",
    "run_experiment",
    "aggregate",
    "compare_family",
    "summarize_compare",
    "dynamics_series",
]

QUANTUM = tuple(a.value for a in QuantumAlgorithm)
CLASSICAL = tuple(a.value for a in Algorithm)
ALGORITHMS = QUANTUM + CLASSICAL


def is_quantum(name: str) -> bool:
    return name in QUANTUM


@dataclass(frozen=True)
class ConvergenceRule:
    """Stopping rule for choosing an operation time from a trajectory.

    ``criterion`` is passed to :func:`detect_convergence`; ``"rate"`` reads
    the threshold as a bound on the energy decrease per unit time.
    """

    threshold: float = 1e-2
    dt_check: float = 1e-3
    criterion: str = "rate"
    persistent: bool = True


CONVERGENCE = ConvergenceRule()


# -- configuration ------------------------------------------------------------

@dataclass
class ProblemSpec:
    n: int
    k: int
    alpha: float | None = None
    m: int | None = None
    count: int = 20
    seed: int = 0

    def __post_init__(self):
        if (self.alpha is None) == (self.m is None):
            raise ValueError("give exactly one of alpha and m")
        if self.n < 1 or self.k < 1 or self.count < 1:
            raise ValueError("n, k and count must be >= 1")

    def clauses(self, n: int | None = None) -> int:
        n = self.n if n is None else n
        return clause_count(n, alpha=self.alpha, m=self.m)


@dataclass
class AlgorithmSpec:
    name: str
    pairs: str = "graph"
    init: str = "fixed"
    init_seeds: int = 1
    init_seed: int = 0

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.name!r}")
        PairScope(self.pairs)
        if self.init not in ("fixed", "random"):
            raise ValueError("init must be 'fixed' or 'random'")
        if self.init_seeds < 1:
            raise ValueError("init_seeds must be >= 1")
        if is_quantum(self.name) and self.init != "fixed":
            raise ValueError("quantum runs always start from the uniform superposition")

    def seeds(self) -> list[int | None]:
        if self.init == "fixed":
            return [None]
        return [self.init_seed + r for r in range(self.init_seeds)]


@dataclass
class SweepSpec:
    axis: str = "none"  # "T", "n" or "none"
    values: list = field(default_factory=list)

    def __post_init__(self):
        if self.axis not in ("T", "n", "none"):
            raise ValueError("sweep axis must be 'T', 'n' or 'none'")
        if self.axis != "none":
            if not self.values:
                raise ValueError("sweep needs values")
            if list(self.values) != sorted(self.values):
                raise ValueError("sweep values must be sorted ascending")
            if self.axis == "n" and any(int(v) < 1 for v in self.values):
                raise ValueError("system sizes must be >= 1")
            if self.axis == "T" and any(v < 0 for v in self.values):
                raise ValueError("operation times must be >= 0")


@dataclass
class ExperimentConfig:
    problem: ProblemSpec
    algorithms: list[AlgorithmSpec]
    sweep: SweepSpec = field(default_factory=SweepSpec)
    dt: float = 1e-3
    T: float = 64.0
    quantum_dt: float = 1e-2
    quantum_cap: int = DEFAULT_CAP
    convergence: bool = False
    abort_on_drift: bool = True
    trace_points: int = 0
    output_dir: str = "experiment"
    workers: int = 1

    def __post_init__(self):
        if not self.algorithms:
            raise ValueError("need at least one algorithm")
        if not (self.dt > 0 and self.quantum_dt > 0):
            raise ValueError("time steps must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["problem"] = ProblemSpec(**d["problem"])
        d["algorithms"] = [AlgorithmSpec(**a) if isinstance(a, dict) else AlgorithmSpec(a)
                           for a in d["algorithms"]]
        d["sweep"] = SweepSpec(**d.get("sweep", {}))
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def times(self) -> list[float]:
        return [float(v) for v in self.sweep.values] if self.sweep.axis == "T" else [self.T]

    def sizes(self) -> list[int]:
        return [int(v) for v in self.sweep.values] if self.sweep.axis == "n" else [self.problem.n]


@dataclass
class RunRecord:
    instance: int
    instance_seed: int
    algorithm: str
    init_seed: int | None
    n: int
    m: int
    T: float
    dt: float
    final_energy: float | None = None
    final_energy_density: float | None = None
    convergence_time: float | None = None
    censored: bool | None = None
    pair_scope: str | None = None
    sweep_value: float | None = None
    max_drift: float | None = None
    status: str = "ok"
    error: str | None = None
    wall_seconds: float = 0.0
    trace: str | None = None

    TIMING_FIELDS = ("wall_seconds",)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)

    def comparable(self) -> dict:
        d = dataclasses.asdict(self)
        for k in self.TIMING_FIELDS:
            d.pop(k)
        return d


# -- instances ----------------------------------------------------------------

def clause_count(n: int, *, alpha: float | None = None, m: int | None = None) -> int:
    """``M = floor(alpha N)`` unless ``m`` is given directly."""
    if m is not None:
        return int(m)
    # guard against 1.2 * 10 = 11.999...
    return int(math.floor(alpha * n + 1e-9))


def make_family(n: int, k: int, m: int, count: int, seed: int) -> list[CnfFormula]:
    return [generate_random_ksat(n, k, m, seed + i) for i in range(count)]


def write_family(out_dir, n: int, k: int, m: int, count: int, seed: int,
                 alpha: float | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(make_family(n, k, m, count, seed)):
        path = out / f"inst_{i:04d}.cnf"
        meta = {"n": n, "k": k, "m": m, "alpha": alpha, "index": i, "seed": seed + i,
                "generator": "uniform-random-ksat"}
        write_instance(path, f, meta)
        paths.append(path)
    return paths


def load_family(directory) -> list[tuple[Path, CnfFormula]]:
    paths = sorted(Path(directory).glob("*.cnf"))
    if not paths:
        raise FileNotFoundError(f"no .cnf files in {directory}")
    return [(p, read_dimacs(p)) for p in paths]


# -- single runs --------------------------------------------------------------

def simulate(name: str, formula: CnfFormula, T: float, dt: float, *,
             init_seed: int | None = None, pairs: str = "graph",
             quantum_cap: int = DEFAULT_CAP, emulate_restart: bool = False,
             trace_stride: int = 1, abort_on_drift: bool = True) -> Trajectory:
    """Run one algorithm on one formula.

    Classical runs start from the fixed all-``+X`` state, or from a random
    state when ``init_seed`` is given (planar for CACAO and HOT-CACAO).
    Quantum runs use ``dt`` as the feedback interval. With
    ``abort_on_drift=False`` a classical step whose pre-renormalisation norm
    drift exceeds the tolerance is accepted (and counted in ``max_drift``).
    """
    hubo = cnf_to_hubo(formula)
    if is_quantum(name):
        cfg = QuantumRunConfig(dt=dt, T=T, cap=quantum_cap, emulate_restart=emulate_restart)
        return run_feedback(name, hubo, cfg)
    alg = Algorithm(name)
    n = formula.n_vars
    init = init_fixed(n) if init_seed is None else init_random(n, init_seed, alg.planar)
    cfg = IntegratorConfig(dt=dt, T=T, abort_on_drift=abort_on_drift)
    return run(alg, hubo, init, cfg, trace_stride=trace_stride, pairs=pairs)


def convergence_time(traj: Trajectory, rule: ConvergenceRule = CONVERGENCE) -> float | None:
    return detect_convergence(traj, rule.threshold, rule.dt_check,
                              persistent=rule.persistent, criterion=rule.criterion)


def _energy_at(traj: Trajectory, t: float) -> float:
    k = int(np.searchsorted(traj.times, t - 1e-9))
    if k >= traj.times.shape[0]:
        raise ValueError(f"time {t} beyond trajectory end {traj.times[-1]}")
    return float(traj.energies[k])


# -- traces -------------------------------------------------------------------

def downsample_indices(times, points: int) -> np.ndarray:
    """Indices of about ``points`` samples, log-spaced in time.

    The first and last samples are always kept.
    """
    t = np.asarray(times, dtype=np.float64)
    if points <= 0 or t.size <= points:
        return np.arange(t.size)
    if t[-1] <= 0:
        return np.array([0])
    lo = t[1] if t[0] <= 0 else t[0]
    targets = np.geomspace(lo, t[-1], points - 1)
    idx = np.searchsorted(t, targets - 1e-12)
    return np.unique(np.concatenate([[0], np.clip(idx, 0, t.size - 1), [t.size - 1]]))


def write_trace(path, traj: Trajectory, fmt: str = "csv", points: int = 0) -> Path:
    """Trajectory columns with 17 significant digits.

    ``fmt="csv"`` writes a header row and commas; ``"gnuplot"`` writes a
    ``#`` header and whitespace-separated columns.
    """
    cols = traj.columns()
    idx = downsample_indices(traj.times, points)
    names = list(cols)
    data = np.column_stack([np.asarray(cols[c], dtype=np.float64)[idx] for c in names])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names),
                   comments="")
    elif fmt == "gnuplot":
        np.savetxt(path, data, fmt="%.17g", delimiter=" ", header=" ".join(names))
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return path


# -- sweeps -------------------------------------------------------------------

def _task_list(cfg: ExperimentConfig):
    tasks = []
    for n in cfg.sizes():
        m = cfg.problem.clauses(n)
        for i in range(cfg.problem.count):
            for spec in cfg.algorithms:
                for s in spec.seeds():
                    tasks.append((n, m, i, spec, s))
    return tasks


def _run_task(args):
    cfg, (n, m, i, spec, init_seed), trace_dir = args
    seed = cfg.problem.seed + i
    quantum = is_quantum(spec.name)
    dt = cfg.quantum_dt if quantum else cfg.dt
    times = cfg.times()
    base = dict(instance=i, instance_seed=seed, algorithm=spec.name, init_seed=init_seed,
                n=n, m=m, dt=dt,
                pair_scope=spec.pairs if spec.name in ("hot-cacao", "hot-cacao-plus") else None)
    sweep_of = (lambda T: T) if cfg.sweep.axis == "T" else (
        (lambda T: float(n)) if cfg.sweep.axis == "n" else (lambda T: None))
    t0 = time.perf_counter()
    try:
        formula = generate_random_ksat(n, cfg.problem.k, m, seed)
        traj = simulate(spec.name, formula, max(times), dt, init_seed=init_seed,
                        pairs=spec.pairs, quantum_cap=cfg.quantum_cap,
                        abort_on_drift=cfg.abort_on_drift)
    except Exception as exc:  # recorded, never fatal for the sweep
        wall = time.perf_counter() - t0
        return [RunRecord(T=T, sweep_value=sweep_of(T), status="failed",
                          error=f"{type(exc).__name__}: {exc}", wall_seconds=wall, **base)
                for T in times]
    wall = time.perf_counter() - t0
    conv = convergence_time(traj) if cfg.convergence else None
    trace = None
    if trace_dir is not None and cfg.trace_points:
        tag = "fixed" if init_seed is None else f"s{init_seed}"
        trace = Path(trace_dir) / f"{spec.name}_n{n}_i{i:04d}_{tag}.csv"
        write_trace(trace, traj, points=cfg.trace_points)
        trace = str(trace.relative_to(Path(trace_dir).parent))
    out = []
    for T in times:
        e = _energy_at(traj, T)
        rec = RunRecord(T=T, sweep_value=sweep_of(T), final_energy=e,
                        final_energy_density=e / n, wall_seconds=wall, trace=trace,
                        max_drift=None if quantum else traj.max_drift, **base)
        if cfg.convergence:
            rec.censored = conv is None or conv > T
            rec.convergence_time = None if rec.censored else conv
        out.append(rec)
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None, *, write: bool = True
                   ) -> tuple[list[RunRecord], list[dict]]:
    """Every (size x instance x algorithm x init seed x sweep point) record.

    With ``write`` the output directory receives ``config.json``,
    ``records.jsonl``, ``aggregates.csv``, one plot-ready ``series/<alg>.dat``
    per algorithm and, when ``trace_points`` is set, ``traces/``.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    trace_dir = out / "traces" if write else None
    tasks = [(cfg, t, trace_dir) for t in _task_list(cfg)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            chunks = list(ex.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    records = [r for c in chunks for r in c]
    aggs = aggregate(records)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
                                         + "\n", encoding="utf-8")
        with open(out / "records.jsonl", "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(r.to_json() + "\n")
        _write_aggregates(out / "aggregates.csv", aggs)
        _write_series(out / "series", aggs)
    return records, aggs


AGG_FIELDS = ["algorithm", "sweep_value", "T", "n", "runs", "failed",
              "mean_energy_density", "std_energy_density", "mean_energy",
              "converged", "censored", "mean_convergence_time"]


def aggregate(records: list[RunRecord]) -> list[dict]:
    """Mean and (population) standard deviation per algorithm and sweep point.

    Failed runs are counted but excluded; censored runs are excluded from
    the convergence-time mean.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.algorithm, r.sweep_value, r.T, r.n), []).append(r)
    rows = []
    for (alg, sv, T, n), rs in groups.items():
        ok = [r for r in rs if r.status == "ok"]
        dens = np.array([r.final_energy_density for r in ok], dtype=np.float64)
        en = np.array([r.final_energy for r in ok], dtype=np.float64)
        conv = [r.convergence_time for r in ok if r.censored is False]
        rows.append({
            "algorithm": alg, "sweep_value": sv, "T": T, "n": n,
            "runs": len(ok), "failed": len(rs) - len(ok),
            "mean_energy_density": float(dens.mean()) if ok else float("nan"),
            "std_energy_density": float(dens.std()) if ok else float("nan"),
            "mean_energy": float(en.mean()) if ok else float("nan"),
            "converged": len(conv),
            "censored": sum(1 for r in ok if r.censored),
            "mean_convergence_time": float(np.mean(conv)) if conv else float("nan"),
        })
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return "" if v is None else str(v)


def _write_aggregates(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(AGG_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in AGG_FIELDS])


def _write_series(directory, rows):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    by_alg: dict[str, list[dict]] = {}
    for r in rows:
        by_alg.setdefault(r["algorithm"], []).append(r)
    for alg, rs in by_alg.items():
        with open(directory / f"{alg}.dat", "w", encoding="utf-8") as fh:
            fh.write("# x mean_energy_density std_energy_density runs\n")
            for r in rs:
                x = r["sweep_value"] if r["sweep_value"] is not None else r["T"]
                fh.write(f"{_fmt(float(x))} {_fmt(r['mean_energy_density'])} "
                         f"{_fmt(r['std_energy_density'])} {r['runs']}\n")


# -- quantum vs classical comparison -----------------------------------------

COMPARE_PAIRS = (("falqon", "cc-falqon"), ("ifalqon", "cc-ifalqon"))


def converged_point(traj: Trajectory, rule: ConvergenceRule):
    t = convergence_time(traj, rule)
    if t is None:
        return float(traj.times[-1]), traj.final_energy, True
    return t, _energy_at(traj, t), False


def compare_family(formulas: list[CnfFormula], *, T_max: float = 1e3,
                   classical_dt: float = 1e-3, quantum_dt: float = 1e-2,
                   rule: ConvergenceRule = CONVERGENCE, pairs=COMPARE_PAIRS,
                   quantum_T_max: float | None = None,
                   quantum_cap: int = DEFAULT_CAP) -> list[dict]:
    """One row per instance and (quantum, classical) pair.

    Each run goes to the ceiling and the operation time is then read off
    with ``rule``; runs that never satisfy it are censored at the ceiling.
    """
    qT = T_max if quantum_T_max is None else quantum_T_max
    cache: dict[tuple[int, str], tuple] = {}
    rows = []
    for idx, f in enumerate(formulas):
        n = f.n_vars
        for qname, cname in pairs:
            for name in (qname, cname):
                if (idx, name) not in cache:
                    quantum = is_quantum(name)
                    traj = simulate(name, f, qT if quantum else T_max,
                                    quantum_dt if quantum else classical_dt,
                                    quantum_cap=quantum_cap)
                    cache[idx, name] = converged_point(traj, rule)
            tq, eq, cq = cache[idx, qname]
            tc, ec, cc = cache[idx, cname]
            rows.append({"instance": idx, "quantum": qname, "classical": cname,
                         "quantum_density": eq / n, "classical_density": ec / n,
                         "quantum_T": tq, "classical_T": tc,
                         "quantum_censored": cq, "classical_censored": cc})
    return rows


def summarize_compare(rows: list[dict], tol: float = 1e-9) -> dict:
    """Per pair: instances where each side reached strictly lower energy."""
    out: dict[str, dict] = {}
    for r in rows:
        key = f"{r['quantum']}/{r['classical']}"
        s = out.setdefault(key, {"quantum_better": 0, "classical_better": 0, "ties": 0,
                                 "instances": 0})
        s["instances"] += 1
        d = r["quantum_density"] - r["classical_density"]
        if d < -tol:
            s["quantum_better"] += 1
        elif d > tol:
            s["classical_better"] += 1
        else:
            s["ties"] += 1
    return out


# -- dynamics traces ----------------------------------------------------------

def dynamics_series(name: str, formula: CnfFormula, T: float, dt: float, *,
                    init_seed: int | None = None, pairs: str = "graph",
                    points: int = 0) -> dict[str, np.ndarray]:
    """Energy density and control strengths over time for one run."""
    traj = simulate(name, formula, T, dt, init_seed=init_seed, pairs=pairs)
    idx = downsample_indices(traj.times, points)
    return {
        "t": traj.times[idx],
        "energy_density": traj.energy_densities[idx],
        "norm_beta_y": traj.control_norms[idx, 1],
        "norm_beta_x": traj.control_norms[idx, 0],
        "norm_beta_pair": traj.control_norms[idx, 2],
    }
