"""k-SAT / HUBO problem instances.

A clause-level :class:`CnfFormula` is kept for exact unsatisfied-clause
counting, and :func:`cnf_to_hubo` expands it into a multilinear
:class:`HuboPolynomial` over relaxed spin coordinates ``z_i in [-1, 1]``::

    H_P(z) = sum_a 2**-k * prod_m (1 - s_am * z_am)

which counts unsatisfied clauses on every +-1 assignment.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels as K

__all__ = [
    "Literal",
    "CnfFormula",
    "HuboTerm",
    "HuboPolynomial",
    "DimacsError",
    "parse_dimacs",
    "emit_dimacs",
    "read_dimacs",
    "write_instance",
    "generate_random_ksat",
    "cnf_to_hubo",
    "energy",
    "gradient_z",
    "round_solution",
    "count_unsatisfied",
    "brute_force_ground",
    "interaction_graph",
    "BRUTE_FORCE_MAX_N",
]

BRUTE_FORCE_MAX_N = 24
_Z_SLACK = 1e-9


class DimacsError(ValueError):
    """Malformed or inconsistent DIMACS CNF input."""


class Literal(NamedTuple):
    variable: int
    sign: int  # +1: satisfied when z = +1; -1: satisfied when z = -1


@dataclass(frozen=True, eq=False)
class CnfFormula:
    """k-SAT formula with ``M`` clauses over ``n_vars`` variables.

    ``variables`` and ``signs`` are ``(M, k)`` integer arrays; row ``a`` holds
    the literals of clause ``a`` in their original order.
    """

    n_vars: int
    variables: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variables, dtype=np.int64)
        s = np.asarray(self.signs, dtype=np.int64)
        if v.ndim != 2 or v.shape != s.shape:
            raise ValueError("variables and signs must be equal-shape (M, k) arrays")
        if v.shape[0] and v.shape[1] < 1:
            raise ValueError("clauses need at least one literal")
        if v.size and (v.min() < 0 or v.max() >= self.n_vars):
            raise ValueError("variable index out of range")
        if s.size and not np.all(np.abs(s) == 1):
            raise ValueError("literal signs must be +1 or -1")
        if v.shape[1] > 1 and v.shape[0]:
            srt = np.sort(v, axis=1)
            if np.any(srt[:, 1:] == srt[:, :-1]):
                raise ValueError("repeated variable in clause")
        v.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "variables", v)
        object.__setattr__(self, "signs", s)

    @classmethod
    def from_clauses(cls, n_vars: int, clauses, k: int | None = None) -> "CnfFormula":
        """Build from an iterable of clauses, each a sequence of
        ``Literal`` / ``(variable, sign)`` pairs."""
        clauses = [list(c) for c in clauses]
        if k is None:
            k = len(clauses[0]) if clauses else 0
        if any(len(c) != k for c in clauses):
            raise ValueError("all clauses must have exactly k literals")
        v = np.array([[lit[0] for lit in c] for c in clauses], dtype=np.int64).reshape(len(clauses), k)
        s = np.array([[lit[1] for lit in c] for c in clauses], dtype=np.int64).reshape(len(clauses), k)
        return cls(n_vars, v, s)

    @property
    def n_clauses(self) -> int:
        return self.variables.shape[0]

    @property
    def k(self) -> int:
        return self.variables.shape[1]

    @property
    def clauses(self) -> list[tuple[Literal, ...]]:
        return [
            tuple(Literal(int(v), int(s)) for v, s in zip(vr, sr))
            for vr, sr in zip(self.variables, self.signs)
        ]

    def __eq__(self, other):
        if not isinstance(other, CnfFormula):
            return NotImplemented
        if self.n_vars != other.n_vars or self.n_clauses != other.n_clauses:
            return False
        if self.n_clauses == 0:
            return True
        return (np.array_equal(self.variables, other.variables)
                and np.array_equal(self.signs, other.signs))

    def __repr__(self):
        return f"CnfFormula(n_vars={self.n_vars}, n_clauses={self.n_clauses}, k={self.k})"


@dataclass(frozen=True)
class HuboTerm:
    coefficient: float
    variables: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class HuboPolynomial:
    """Multilinear polynomial ``sum_S c_S prod_{i in S} z_i`` in CSR layout.

    ``incidence`` (``inc_ptr``/``inc_terms``) lists, for each variable, the
    terms that contain it.
    """

    n_vars: int
    ptr: np.ndarray
    var: np.ndarray
    coef: np.ndarray
    inc_ptr: np.ndarray = field(repr=False)
    inc_terms: np.ndarray = field(repr=False)

    @classmethod
    def from_terms(cls, n_vars: int, terms) -> "HuboPolynomial":
        """Build from ``{variables: coefficient}`` or ``(variables, coefficient)``
        pairs; like variable sets are merged in first-seen order."""
        items = terms.items() if isinstance(terms, dict) else terms
        merged: dict[tuple[int, ...], float] = {}
        for vars_, c in items:
            key = tuple(sorted(int(v) for v in vars_))
            if len(set(key)) != len(key):
                raise ValueError(f"repeated variable in term {vars_}")
            if key and (key[0] < 0 or key[-1] >= n_vars):
                raise ValueError(f"term {vars_} out of range for n_vars={n_vars}")
            if not np.isfinite(c):
                raise ValueError("coefficients must be finite")
            merged[key] = merged.get(key, 0.0) + float(c)
        return cls._from_merged(n_vars, merged)

    @classmethod
    def _from_merged(cls, n_vars, merged):
        # grouped by order (stable), which keeps the kernels' branches predictable
        keys = sorted(merged, key=len)
        sizes = np.fromiter((len(k) for k in keys), dtype=np.int64, count=len(keys))
        ptr = np.zeros(len(keys) + 1, dtype=np.int64)
        np.cumsum(sizes, out=ptr[1:])
        var = np.fromiter(itertools.chain.from_iterable(keys), dtype=np.int64,
                          count=int(ptr[-1]))
        coef = np.fromiter((merged[k] for k in keys), dtype=np.float64, count=len(keys))
        term_of = np.repeat(np.arange(len(keys), dtype=np.int64), sizes)
        order = np.argsort(var, kind="stable")
        inc_terms = term_of[order]
        inc_ptr = np.zeros(n_vars + 1, dtype=np.int64)
        np.cumsum(np.bincount(var, minlength=n_vars), out=inc_ptr[1:])
        return cls(n_vars, ptr, var, coef, inc_ptr, inc_terms)

    @property
    def n_terms(self) -> int:
        return self.coef.shape[0]

    @property
    def terms(self) -> list[HuboTerm]:
        return [
            HuboTerm(float(self.coef[t]),
                     tuple(int(v) for v in self.var[self.ptr[t]:self.ptr[t + 1]]))
            for t in range(self.n_terms)
        ]

    def term_dict(self) -> dict[tuple[int, ...], float]:
        return {t.variables: t.coefficient for t in self.terms}

    def incidence(self, i: int) -> np.ndarray:
        """Indices of the terms that contain variable ``i``."""
        return self.inc_terms[self.inc_ptr[i]:self.inc_ptr[i + 1]]

    @property
    def max_order(self) -> int:
        return int(np.diff(self.ptr).max()) if self.n_terms else 0

    def __repr__(self):
        return (f"HuboPolynomial(n_vars={self.n_vars}, n_terms={self.n_terms}, "
                f"max_order={self.max_order})")


# -- DIMACS -------------------------------------------------------------------

def parse_dimacs(text: str) -> CnfFormula:
    """Parse DIMACS CNF text.

    Comment lines start with ``c``; clauses may span lines and are
    terminated by ``0``. Variable ``v`` maps to index ``v - 1``.
    """
    header = None
    tokens: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise DimacsError(f"line {lineno}: duplicate header")
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {line!r}") from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before header")
        try:
            tokens.extend(int(t) for t in line.split())
        except ValueError:
            raise DimacsError(f"line {lineno}: non-integer token in {line!r}") from None
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    n, m = header

    clauses = []
    cur: list[int] = []
    for t in tokens:
        if t == 0:
            if not cur:
                raise DimacsError("empty clause")
            clauses.append(cur)
            cur = []
        else:
            cur.append(t)
    if cur:
        raise DimacsError("last clause is not terminated by 0")
    if len(clauses) != m:
        raise DimacsError(f"header declares {m} clauses, found {len(clauses)}")

    lits = []
    for a, c in enumerate(clauses):
        vs = [abs(t) - 1 for t in c]
        if max(vs) >= n:
            raise DimacsError(f"clause {a + 1}: variable index out of range (n={n})")
        if len(set(vs)) != len(vs):
            raise DimacsError(f"clause {a + 1}: repeated variable")
        lits.append([(abs(t) - 1, 1 if t > 0 else -1) for t in c])
    if len({len(c) for c in lits}) > 1:
        raise DimacsError("clauses of mixed width; a k-SAT instance is required")
    return CnfFormula.from_clauses(n, lits)


def emit_dimacs(formula: CnfFormula, comments: list[str] | None = None) -> str:
    lines = [f"c {c}" for c in (comments or [])]
    lines.append(f"p cnf {formula.n_vars} {formula.n_clauses}")
    lit = (formula.variables + 1) * formula.signs
    for row in lit:
        lines.append(" ".join(str(int(x)) for x in row) + " 0")
    return "\n".join(lines) + "\n"


def read_dimacs(path) -> CnfFormula:
    return parse_dimacs(Path(path).read_text(encoding="utf-8"))


def write_instance(path, formula: CnfFormula, meta: dict | None = None) -> None:
    """Write a DIMACS file and, if ``meta`` is given, a ``.json`` sidecar."""
    path = Path(path)
    path.write_text(emit_dimacs(formula), encoding="utf-8")
    if meta is not None:
        path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n",
                                             encoding="utf-8")


# -- generation ---------------------------------------------------------------

def generate_random_ksat(n: int, k: int, m: int, seed: int) -> CnfFormula:
    """Uniform random k-SAT: each clause draws k distinct variables and
    negates each independently with probability 1/2."""
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    if k < 1 or m < 0:
        raise ValueError("need k >= 1 and m >= 0")
    rng = np.random.default_rng(seed)
    variables = np.empty((m, k), dtype=np.int64)
    for a in range(m):
        variables[a] = rng.choice(n, size=k, replace=False)
    signs = rng.integers(0, 2, size=(m, k)) * 2 - 1
    return CnfFormula(n, variables, signs)


# -- Hamiltonian --------------------------------------------------------------

def cnf_to_hubo(formula: CnfFormula) -> HuboPolynomial:
    """Expand ``sum_a 2**-k prod_m (1 - s z)`` into merged monomials.

    Terms whose merged coefficient cancels to zero are kept, so every pair of
    co-occurring clause variables stays present in the term structure.
    """
    k = formula.k
    merged: dict[tuple[int, ...], float] = {}
    if formula.n_clauses:
        scale = 2.0 ** -k
        subsets = [c for r in range(k + 1) for c in itertools.combinations(range(k), r)]
        for vrow, srow in zip(formula.variables.tolist(), formula.signs.tolist()):
            for sub in subsets:
                c = scale
                for a in sub:
                    c *= -srow[a]
                key = tuple(sorted(vrow[a] for a in sub))
                merged[key] = merged.get(key, 0.0) + c
    return HuboPolynomial._from_merged(formula.n_vars, merged)


def _as_z(hubo: HuboPolynomial, z) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.shape != (hubo.n_vars,):
        raise ValueError(f"expected vector of length {hubo.n_vars}, got shape {z.shape}")
    if z.size and np.max(np.abs(z)) > 1.0 + _Z_SLACK:
        raise ValueError("relaxed spin coordinates must lie in [-1, 1]")
    return z


def energy(hubo: HuboPolynomial, z) -> float:
    z = _as_z(hubo, z)
    return float(K.poly_energy(z, hubo.ptr, hubo.var, hubo.coef))


def gradient_z(hubo: HuboPolynomial, z) -> np.ndarray:
    """Partial derivatives ``dH_P/dz_i`` (exact for the multilinear form)."""
    z = _as_z(hubo, z)
    g = np.empty(hubo.n_vars)
    K.poly_energy_grad(z, hubo.ptr, hubo.var, hubo.coef, g)
    return g


def energy_and_gradient(hubo: HuboPolynomial, z) -> tuple[float, np.ndarray]:
    z = _as_z(hubo, z)
    g = np.empty(hubo.n_vars)
    e = K.poly_energy_grad(z, hubo.ptr, hubo.var, hubo.coef, g)
    return float(e), g


def gradient_component(hubo: HuboPolynomial, z, i: int) -> float:
    """Single partial derivative, touching only the terms incident to ``i``."""
    z = _as_z(hubo, z)
    return float(K.poly_gradient_component(z, hubo.ptr, hubo.var, hubo.coef,
                                           hubo.inc_ptr, hubo.inc_terms, int(i)))


def round_solution(spins) -> np.ndarray:
    """Sign-round ``m^Z`` (or a bare z vector) to +-1; zero rounds to +1."""
    m = np.asarray(getattr(spins, "m", spins), dtype=np.float64)
    z = m[:, 2] if m.ndim == 2 else m
    return np.where(z >= 0.0, 1, -1).astype(np.int64)


def count_unsatisfied(formula: CnfFormula, assignment) -> int:
    x = np.asarray(assignment)
    if x.shape != (formula.n_vars,):
        raise ValueError(f"assignment must have length {formula.n_vars}")
    if formula.n_clauses == 0:
        return 0
    violated = x[formula.variables] == -formula.signs
    return int(np.count_nonzero(violated.all(axis=1)))


def _clause_masks(formula: CnfFormula):
    bits = np.left_shift(np.int64(1), formula.variables)
    masks = bits.sum(axis=1).astype(np.int64)
    # literal violated when z = -s; z = -1 is bit 1
    viol = np.where(formula.signs > 0, bits, 0).sum(axis=1).astype(np.int64)
    return masks, viol


def brute_force_ground(formula: CnfFormula) -> tuple[float, np.ndarray]:
    """Exhaustive minimum of the unsatisfied-clause count.

    Among all minimizers, returns the lexicographically smallest value
    vector (variable 0 compared first, ``-1 < +1``).
    """
    n = formula.n_vars
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, got {n}")
    if formula.n_clauses == 0:
        return 0.0, -np.ones(n, dtype=np.int64)
    masks, viol = _clause_masks(formula)
    best, code = K.clause_ground(n, masks, viol)
    assignment = np.where((code >> np.arange(n)) & 1, -1, 1).astype(np.int64)
    return float(best), assignment


def interaction_graph(hubo: HuboPolynomial) -> set[tuple[int, int]]:
    """Undirected edges ``(i, j)``, ``i < j``, of variables sharing a term."""
    edges: set[tuple[int, int]] = set()
    for t in range(hubo.n_terms):
        vs = hubo.var[hubo.ptr[t]:hubo.ptr[t + 1]].tolist()
        if len(vs) > 1:
            edges.update(itertools.combinations(vs, 2))
    return edges


def energy_density(hubo: HuboPolynomial, e: float) -> float:
    return e / hubo.n_vars if hubo.n_vars else 0.0
