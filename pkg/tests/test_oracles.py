import numpy as np
import pytest

from feedbackopt.classical import Algorithm, IntegratorConfig, init_fixed, init_random, run
from feedbackopt.oracles import (ChartPoleError, ChartState, chart_from_spin,
                                 finite_diff_gradient, hamilton_chart_integrate,
                                 poisson_bracket_residuals, spin_from_chart)
from feedbackopt.problem import (CnfFormula, HuboPolynomial, cnf_to_hubo,
                                 generate_random_ksat, gradient_z)

# 3 variables, 3 clauses; stays clear of the chart poles from the fixed start
CHART_INSTANCE = (3, 2, 3, 15)


def test_chart_examples():
    assert spin_from_chart(ChartState([0.0], [0.0])).m.tolist() == [[1.0, 0.0, 0.0]]
    assert spin_from_chart(ChartState([0.0], [0.5])).m.tolist() == [[0.0, 0.0, 1.0]]


def test_chart_unit_norm_and_roundtrip():
    rng = np.random.default_rng(0)
    c = ChartState(rng.uniform(-np.pi, np.pi, 200), rng.uniform(-0.5, 0.5, 200))
    s = spin_from_chart(c)
    assert s.norm_error() < 1e-14
    back = chart_from_spin(s)
    assert back.p == pytest.approx(c.p, abs=1e-15)
    assert back.q == pytest.approx(c.q, abs=1e-12)


def test_chart_domain():
    with pytest.raises(ValueError):
        ChartState([0.0], [0.6])


def test_poisson_brackets():
    assert poisson_bracket_residuals(np.zeros((1, 1)), np.zeros((1, 1))) < 1e-15
    rng = np.random.default_rng(1)
    q = rng.uniform(-np.pi, np.pi, (1000, 1))
    p = rng.uniform(-0.49, 0.49, (1000, 1))
    assert poisson_bracket_residuals(q, p) < 1e-10


def test_poisson_cross_site():
    # three sites: the full 9x9 bracket matrix is checked, including a != b
    rng = np.random.default_rng(2)
    q = rng.uniform(-np.pi, np.pi, (200, 3))
    p = rng.uniform(-0.49, 0.49, (200, 3))
    assert poisson_bracket_residuals(q, p) < 1e-10


def test_fd_linear_exact():
    h = HuboPolynomial.from_terms(4, {(0,): 0.5, (2,): -1.25, (3,): 2.0})
    z = np.array([0.3, -0.2, 0.9, -1.0])
    # any step is exact for a multilinear energy; a wide one keeps rounding small
    assert np.max(np.abs(finite_diff_gradient(h, z, eps=0.25) - gradient_z(h, z))) < 1e-12


def test_fd_constant_zero():
    h = HuboPolynomial.from_terms(3, {(): 4.0})
    assert finite_diff_gradient(h, np.zeros(3)).tolist() == [0.0, 0.0, 0.0]


def test_fd_random_3sat():
    h = cnf_to_hubo(generate_random_ksat(30, 3, 126, 3))
    z = np.random.default_rng(3).uniform(-1, 1, 30)
    assert np.max(np.abs(finite_diff_gradient(h, z) - gradient_z(h, z))) < 1e-6


def test_fd_bad_eps():
    with pytest.raises(ValueError):
        finite_diff_gradient(HuboPolynomial.from_terms(1, {}), np.zeros(1), eps=0)


def test_chart_constant_without_gradient():
    h = cnf_to_hubo(CnfFormula.from_clauses(3, []))
    c0 = chart_from_spin(init_random(3, 2, planar=True))
    ct = hamilton_chart_integrate(h, "cacao", c0, IntegratorConfig(dt=1e-2, T=1))
    assert np.all(ct.q == c0.q) and np.all(ct.p == c0.p)


@pytest.mark.parametrize("kind", list(Algorithm))
def test_chart_matches_spin_short(kind):
    h = cnf_to_hubo(generate_random_ksat(*CHART_INSTANCE))
    cfg = IntegratorConfig(dt=1e-3, T=0.5)
    init = init_fixed(3)
    ct = hamilton_chart_integrate(h, kind, chart_from_spin(init), cfg)
    tr = run(kind, h, init, cfg, snapshot_stride=1)
    assert np.max(np.abs(ct.spins() - tr.snapshots)) < 1e-8
    assert np.max(np.abs(ct.energies - tr.energies)) < 1e-8


def test_chart_pole_refused():
    # a single z term drives CACAO straight to m^Z = -1
    h = HuboPolynomial.from_terms(1, {(0,): 1.0})
    with pytest.raises(ChartPoleError):
        hamilton_chart_integrate(h, "cacao", ChartState([0.0], [0.0]),
                                 IntegratorConfig(dt=1e-2, T=50))


def test_chart_size_mismatch():
    h = cnf_to_hubo(generate_random_ksat(*CHART_INSTANCE))
    with pytest.raises(ValueError):
        hamilton_chart_integrate(h, "cacao", ChartState([0.0], [0.0]))
