"""Quick oracle checks behind ``feedbackopt selftest`` (well under a minute)."""

from __future__ import annotations

import numpy as np

from .classical import Algorithm, IntegratorConfig, init_fixed, run
from .oracles import (chart_from_spin, commutator_betas, energy_table,
                      finite_diff_gradient, hamilton_chart_integrate,
                      poisson_bracket_residuals)
from .problem import (cnf_to_hubo, count_unsatisfied, generate_random_ksat, gradient_z)
from .quantum import diagonal_problem_operator, measure_betas


def _gradient():
    rng = np.random.default_rng(1)
    worst = 0.0
    for s in range(5):
        h = cnf_to_hubo(generate_random_ksat(20, 3, 84, s))
        z = rng.uniform(-1, 1, 20)
        worst = max(worst, np.max(np.abs(gradient_z(h, z) - finite_diff_gradient(h, z))))
    return worst < 1e-6, f"max |grad - finite diff| = {worst:.2e}"


def _unsat_identity():
    worst = 0.0
    for s, k in enumerate((1, 2, 3)):
        f = generate_random_ksat(8, k, 12, s)
        table = energy_table(cnf_to_hubo(f))
        bits = (np.arange(256)[:, None] >> np.arange(8)) & 1
        counts = np.array([count_unsatisfied(f, 1 - 2 * b) for b in bits])
        worst = max(worst, np.max(np.abs(table - counts)))
    return worst <= 1e-12 * 12, f"max |energy - unsat count| = {worst:.2e}"


def _chart():
    f = generate_random_ksat(3, 2, 3, 15)
    h = cnf_to_hubo(f)
    cfg = IntegratorConfig(dt=1e-3, T=1.0)
    worst = 0.0
    for alg in Algorithm:
        init = init_fixed(3)
        ct = hamilton_chart_integrate(h, alg, chart_from_spin(init), cfg)
        tr = run(alg, h, init, cfg, snapshot_stride=1)
        worst = max(worst, np.max(np.abs(ct.spins() - tr.snapshots)))
    return worst < 1e-8, f"chart vs spin max deviation = {worst:.2e}"


def _poisson():
    rng = np.random.default_rng(2)
    r = poisson_bracket_residuals(rng.uniform(-np.pi, np.pi, (200, 3)),
                                  rng.uniform(-0.49, 0.49, (200, 3)))
    return r < 1e-10, f"Poisson bracket residual = {r:.2e}"


def _commutator():
    rng = np.random.default_rng(3)
    d = diagonal_problem_operator(cnf_to_hubo(generate_random_ksat(6, 2, 7, 0)))
    psi = rng.normal(size=64) + 1j * rng.normal(size=64)
    psi /= np.linalg.norm(psi)
    err = np.max(np.abs(measure_betas(psi, d) - commutator_betas(psi, d)))
    return err < 1e-12, f"beta vs explicit commutator = {err:.2e}"


CHECKS = [
    ("gradient", _gradient),
    ("energy-unsat", _unsat_identity),
    ("chart-equivalence", _chart),
    ("poisson-brackets", _poisson),
    ("commutator", _commutator),
]


def run_selftest(verbose: bool = False) -> bool:
    ok_all = True
    for name, fn in CHECKS:
        ok, msg = fn()
        ok_all &= bool(ok)
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {msg}")
    return ok_all
