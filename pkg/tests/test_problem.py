import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feedbackopt.oracles import energy_table, finite_diff_gradient
from feedbackopt.problem import (BRUTE_FORCE_MAX_N, CnfFormula, DimacsError, HuboPolynomial,
                                 brute_force_ground, cnf_to_hubo, count_unsatisfied,
                                 emit_dimacs, energy, energy_and_gradient,
                                 generate_random_ksat, gradient_component, gradient_z,
                                 interaction_graph, parse_dimacs, round_solution,
                                 write_instance)


def clause_product(f, z):
    """Direct evaluation of sum_a 2^-k prod (1 - s z) from the clause form."""
    total = 0.0
    for vs, ss in zip(f.variables, f.signs):
        total += np.prod([(1 - s * z[v]) / 2 for v, s in zip(vs, ss)])
    return total


@st.composite
def formulas(draw, max_n=8):
    n = draw(st.integers(1, max_n))
    k = draw(st.integers(1, min(3, n)))
    m = draw(st.integers(0, 10))
    seed = draw(st.integers(0, 2**31))
    return generate_random_ksat(n, k, m, seed)


# -- DIMACS -------------------------------------------------------------------

def test_parse_simple_clause():
    f = parse_dimacs("p cnf 2 1\n1 -2 0")
    assert f.n_vars == 2 and f.n_clauses == 1
    assert [(l.variable, l.sign) for l in f.clauses[0]] == [(0, 1), (1, -1)]


def test_parse_comments_and_multiline():
    f = parse_dimacs("c hello\nc more\np cnf 3 2\n1 2\n0 -3 1 0\n")
    assert f.n_clauses == 2
    assert f.clauses[1][0].variable == 2


@pytest.mark.parametrize("text", [
    "p cnf 2 1\n1 1 0",          # repeated variable
    "p cnf 2 1\n1 3 0",          # index out of range
    "p cnf 2 2\n1 2 0",          # count mismatch
    "p dnf 2 1\n1 2 0",          # bad header
    "1 2 0",                      # missing header
    "p cnf 3 2\n1 2 0\n3 0",     # mixed widths
    "p cnf 2 1\n1 x 0",          # junk token
])
def test_parse_errors(text):
    with pytest.raises(DimacsError):
        parse_dimacs(text)


def test_emit_contains_clause_line():
    f = CnfFormula.from_clauses(2, [[(0, 1), (1, -1)]])
    assert "1 -2 0" in emit_dimacs(f).splitlines()


def test_emit_empty_formula():
    f = CnfFormula.from_clauses(4, [])
    lines = emit_dimacs(f).splitlines()
    assert lines == ["p cnf 4 0"]
    assert parse_dimacs(emit_dimacs(f)) == f


@settings(max_examples=60, deadline=None)
@given(formulas())
def test_dimacs_round_trip(f):
    assert parse_dimacs(emit_dimacs(f)) == f


def test_write_instance_sidecar(tmp_path):
    f = generate_random_ksat(5, 2, 6, 1)
    write_instance(tmp_path / "a.cnf", f, {"n": 5, "k": 2, "m": 6, "alpha": 1.2, "seed": 1})
    assert parse_dimacs((tmp_path / "a.cnf").read_text()) == f
    assert json.loads((tmp_path / "a.json").read_text())["seed"] == 1


# -- generation ---------------------------------------------------------------

def test_generate_counts():
    f = generate_random_ksat(12, 2, 14, 0)
    assert f.n_vars == 12 and f.n_clauses == 14 and f.k == 2


def test_generate_large_3sat():
    f = generate_random_ksat(10000, 3, 42000, 3)
    assert f.n_clauses == 42000
    assert np.all(np.sort(f.variables, axis=1)[:, 1:] != np.sort(f.variables, axis=1)[:, :-1])


def test_generate_deterministic_and_distinct_vars():
    a = generate_random_ksat(30, 3, 50, 9)
    b = generate_random_ksat(30, 3, 50, 9)
    c = generate_random_ksat(30, 3, 50, 10)
    assert a == b and a != c
    for row in a.variables:
        assert len(set(row.tolist())) == 3


def test_generate_sign_balance():
    f = generate_random_ksat(50, 3, 4000, 5)
    assert abs(np.mean(f.signs == 1) - 0.5) < 0.02


def test_generate_k_too_large():
    with pytest.raises(ValueError):
        generate_random_ksat(2, 3, 1, 0)


# -- polynomial ---------------------------------------------------------------

def test_hubo_two_literal_clause():
    h = cnf_to_hubo(CnfFormula.from_clauses(2, [[(0, 1), (1, 1)]]))
    assert h.term_dict() == {(): 0.25, (0,): -0.25, (1,): -0.25, (0, 1): 0.25}


def test_hubo_unit_clause():
    h = cnf_to_hubo(CnfFormula.from_clauses(1, [[(0, 1)]]))
    assert h.term_dict() == {(): 0.5, (0,): -0.5}


def test_hubo_merges_like_terms():
    f = CnfFormula.from_clauses(2, [[(0, 1), (1, 1)], [(0, -1), (1, 1)]])
    d = cnf_to_hubo(f).term_dict()
    # (1 - z0 - z1 + z0 z1)/4 + (1 + z0 - z1 - z0 z1)/4
    assert d == {(): 0.5, (0,): 0.0, (1,): -0.5, (0, 1): 0.0}


def test_hubo_incidence_consistent():
    h = cnf_to_hubo(generate_random_ksat(20, 3, 60, 2))
    for i in range(20):
        for t in h.incidence(i):
            assert i in h.var[h.ptr[t]:h.ptr[t + 1]]
    counted = sum(len(h.incidence(i)) for i in range(20))
    assert counted == int(h.ptr[-1])


def test_from_terms_merges_and_sorts():
    h = HuboPolynomial.from_terms(3, [((2, 0), 1.0), ((0, 2), 0.5), ((1,), 2.0)])
    assert h.term_dict() == {(0, 2): 1.5, (1,): 2.0}


def test_from_terms_rejects_repeats():
    with pytest.raises(ValueError):
        HuboPolynomial.from_terms(2, [((0, 0), 1.0)])


def test_clause_form_equals_polynomial_random_3sat():
    f = generate_random_ksat(15, 3, 63, 4)
    h = cnf_to_hubo(f)
    rng = np.random.default_rng(0)
    for _ in range(100):
        z = rng.choice([-1.0, 1.0], size=15)
        assert energy(h, z) == clause_product(f, z)


# -- energy & gradient ---------------------------------------------------------

CLAUSE = CnfFormula.from_clauses(2, [[(0, 1), (1, 1)]])


@pytest.mark.parametrize("z, e", [((1, -1), 0.0), ((-1, -1), 1.0), ((0, 0), 0.25)])
def test_energy_single_clause(z, e):
    assert energy(cnf_to_hubo(CLAUSE), z) == e


def test_gradient_single_clause():
    h = cnf_to_hubo(CLAUSE)
    assert gradient_z(h, [0, 0])[0] == -0.25
    for z1 in (-1.0, -0.3, 0.7):
        assert gradient_z(h, [1, z1])[1] == 0.0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for s in range(5):
        h = cnf_to_hubo(generate_random_ksat(40, 3, 168, s))
        z = rng.uniform(-1, 1, 40)
        assert np.max(np.abs(gradient_z(h, z) - finite_diff_gradient(h, z, 1e-5))) < 1e-6


def test_gradient_component_matches_vector():
    h = cnf_to_hubo(generate_random_ksat(25, 3, 100, 8))
    z = np.random.default_rng(2).uniform(-1, 1, 25)
    g = gradient_z(h, z)
    for i in range(25):
        assert gradient_component(h, z, i) == pytest.approx(g[i], abs=1e-13)


def test_energy_and_gradient_consistent():
    h = cnf_to_hubo(generate_random_ksat(25, 4, 60, 8))
    z = np.random.default_rng(3).uniform(-1, 1, 25)
    e, g = energy_and_gradient(h, z)
    assert e == pytest.approx(energy(h, z), abs=1e-12)
    assert np.allclose(g, gradient_z(h, z), atol=1e-13)


def test_energy_domain_and_shape_errors():
    h = cnf_to_hubo(CLAUSE)
    with pytest.raises(ValueError):
        energy(h, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        energy(h, [1.1, 0.0])
    energy(h, [1.0 + 1e-10, 0.0])


@settings(max_examples=40, deadline=None)
@given(formulas(), st.integers(0, 2**31))
def test_energy_bounded_on_cube(f, seed):
    z = np.random.default_rng(seed).uniform(-1, 1, f.n_vars)
    e = energy(cnf_to_hubo(f), z)
    assert -1e-12 <= e <= f.n_clauses + 1e-12


@settings(max_examples=40, deadline=None)
@given(formulas(), st.integers(0, 2**31), st.data())
def test_energy_affine_in_each_coordinate(f, seed, data):
    h = cnf_to_hubo(f)
    z = np.random.default_rng(seed).uniform(-1, 1, f.n_vars)
    i = data.draw(st.integers(0, f.n_vars - 1))
    g = gradient_z(h, z)[i]
    lo, hi = z.copy(), z.copy()
    lo[i], hi[i] = -1.0, 1.0
    assert energy(h, hi) - energy(h, lo) == pytest.approx(2 * g, abs=1e-12)


# -- assignments --------------------------------------------------------------

def test_round_solution():
    assert round_solution(np.array([0.3, -0.9])).tolist() == [1, -1]
    assert round_solution(np.array([0.0, 0.0])).tolist() == [1, 1]
    m = np.array([[1.0, 0, 0], [0, 0.6, -0.8]])
    assert round_solution(m).tolist() == [1, -1]


def test_count_unsatisfied():
    assert count_unsatisfied(CLAUSE, [-1, -1]) == 1
    assert count_unsatisfied(CLAUSE, [1, -1]) == 0
    with pytest.raises(ValueError):
        count_unsatisfied(CLAUSE, [1, 1, 1])


def test_energy_equals_unsat_on_all_assignments():
    for s, k in enumerate((1, 2, 3, 2, 3)):
        f = generate_random_ksat(9, k, 15, s)
        table = energy_table(cnf_to_hubo(f))
        bits = (np.arange(512)[:, None] >> np.arange(9)) & 1
        for b, row in enumerate(bits):
            assignment = 1 - 2 * row
            assert table[b] == count_unsatisfied(f, assignment)


def test_rounded_energy_equals_unsat():
    rng = np.random.default_rng(4)
    f = generate_random_ksat(10, 3, 30, 6)
    h = cnf_to_hubo(f)
    for _ in range(50):
        r = round_solution(rng.uniform(-1, 1, 10))
        assert energy(h, r) == count_unsatisfied(f, r)


# -- brute force --------------------------------------------------------------

def test_brute_force_satisfiable_clause():
    e, a = brute_force_ground(CLAUSE)
    assert e == 0.0
    # lexicographically smallest satisfying vector: (-1, +1)
    assert a.tolist() == [-1, 1]


def test_brute_force_contradiction():
    f = CnfFormula.from_clauses(1, [[(0, 1)], [(0, -1)]])
    assert brute_force_ground(f)[0] == 1.0


def test_brute_force_matches_enumeration():
    f = generate_random_ksat(12, 2, 14, 11)
    table = energy_table(cnf_to_hubo(f))
    e, a = brute_force_ground(f)
    assert e == table.min()
    assert count_unsatisfied(f, a) == e


def test_brute_force_cap():
    f = generate_random_ksat(BRUTE_FORCE_MAX_N + 1, 2, 3, 0)
    with pytest.raises(ValueError):
        brute_force_ground(f)


# -- interaction graph -----------------------------------------------------------

def test_graph_single_monomial():
    h = HuboPolynomial.from_terms(3, {(0, 1, 2): 1.0})
    assert interaction_graph(h) == {(0, 1), (0, 2), (1, 2)}


def test_graph_linear_is_empty():
    assert interaction_graph(HuboPolynomial.from_terms(3, {(0,): 1.0, (2,): -1.0})) == set()


def test_graph_degrees_match_clause_recount():
    f = generate_random_ksat(40, 3, 120, 12)
    edges = interaction_graph(cnf_to_hubo(f))
    recount = set()
    for row in f.variables.tolist():
        for a in row:
            for b in row:
                if a < b:
                    recount.add((a, b))
    assert edges == recount
