"""Independent reference computations used to cross-check the engines.

Nothing here calls the numba kernels. The canonical-chart integrator
re-derives the feedback dynamics from scratch in ``(q, p)`` coordinates,
where a unit spin is

    m = (sqrt(1 - 4p^2) cos q, sqrt(1 - 4p^2) sin q, 2p)

and the motion is Hamilton's ``dq/dt = dH/dp``, ``dp/dt = -dH/dq``. The
chart is singular at the poles ``2p = +-1``; trajectories that come within
``POLE_BAND`` of them are refused rather than re-charted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classical import Algorithm, ClassicalSpinState, IntegratorConfig, PairScope
from .problem import HuboPolynomial

__all__ = [
    "POLE_BAND",
    "ChartState",
    "ChartTrajectory",
    "ChartPoleError",
    "spin_from_chart",
    "chart_from_spin",
    "hamilton_chart_integrate",
    "poisson_bracket_residuals",
    "finite_diff_gradient",
    "energy_table",
    "commutator_betas",
    "z_marginals",
]

POLE_BAND = 1e-6


class ChartPoleError(RuntimeError):
    """The chart trajectory got too close to ``m^Z = +-1``."""


@dataclass
class ChartState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=np.float64))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=np.float64))
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have the same shape")
        if np.any(np.abs(2.0 * self.p) > 1.0):
            raise ValueError("chart out of domain: |2p| > 1")

    @property
    def n(self) -> int:
        return self.q.shape[-1]


def _spins(q, p):
    u = 2.0 * p
    r = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    return np.stack([r * np.cos(q), r * np.sin(q), u], axis=-1)


def spin_from_chart(chart: ChartState) -> ClassicalSpinState:
    return ClassicalSpinState(_spins(chart.q, chart.p).reshape(-1, 3))


def chart_from_spin(spins: ClassicalSpinState | np.ndarray) -> ChartState:
    m = np.asarray(getattr(spins, "m", spins), dtype=np.float64)
    return ChartState(np.arctan2(m[:, 1], m[:, 0]), np.clip(m[:, 2], -1.0, 1.0) / 2.0)


def _jacobians(q, p):
    """Per-site partials of (m^X, m^Y, m^Z) w.r.t. q and p, shape (..., 3)."""
    u = 2.0 * p
    r = np.sqrt(1.0 - u * u)
    dr = -4.0 * p / r
    c, s = np.cos(q), np.sin(q)
    dq = np.stack([-r * s, r * c, np.zeros_like(q)], axis=-1)
    dp = np.stack([dr * c, dr * s, 2.0 * np.ones_like(p)], axis=-1)
    return dq, dp


def poisson_bracket_residuals(q, p) -> float:
    """Largest deviation of ``{m_a^u, m_b^v}`` from ``2 delta_ab eps_uvw m_a^w``.

    ``q`` and ``p`` have shape ``(samples, N)`` (or ``(samples,)`` for one
    site). All ``3N x 3N`` brackets are formed from the analytic chart
    derivatives, so cross-site brackets are checked to vanish as well.
    """
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.ndim == 1:
        q, p = q[:, None], p[:, None]
    s, n = q.shape
    dq, dp = _jacobians(q, p)
    m = _spins(q, p)
    # J[s, a, u, k]: derivative of m_a^u w.r.t. coordinate k (only k = a non-zero)
    eye = np.eye(n)
    jq = dq[:, :, :, None] * eye[None, :, None, :]
    jp = dp[:, :, :, None] * eye[None, :, None, :]
    br = (np.einsum("saui,sbvi->saubv", jq, jp)
          - np.einsum("saui,sbvi->saubv", jp, jq))
    eps = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[a, b, c] = 1.0
        eps[b, a, c] = -1.0
    want = 2.0 * np.einsum("uvw,saw,ab->saubv", eps, m, eye)
    return float(np.max(np.abs(br - want))) if br.size else 0.0


def finite_diff_gradient(hubo: HuboPolynomial, z, eps: float = 1e-5) -> np.ndarray:
    """Central differences of the energy; exact for multilinear energies.

    All ``2N`` stencil points are evaluated together with plain numpy,
    grouping monomials by order. Points pushed slightly past ``|z_i| = 1``
    are fine since the polynomial is evaluated term by term.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=np.float64)
    n = hubo.n_vars
    if z.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {z.shape}")
    pts = np.repeat(z[None, :], 2 * n, axis=0)
    pts[np.arange(n), np.arange(n)] += eps
    pts[n + np.arange(n), np.arange(n)] -= eps
    vals = np.zeros(2 * n)
    by_order: dict[int, tuple[list, list]] = {}
    for t, c in hubo.term_dict().items():
        idx, cs = by_order.setdefault(len(t), ([], []))
        idx.append(t)
        cs.append(c)
    for order, (idx, cs) in by_order.items():
        if order == 0:
            vals += sum(cs)
            continue
        cols = np.array(idx, dtype=np.int64)
        vals += pts[:, cols].prod(axis=2) @ np.array(cs)
    return (vals[:n] - vals[n:]) / (2.0 * eps)


def _value(terms, z):
    zl = z.tolist()
    return math.fsum(c * math.prod(zl[b] for b in t) for t, c in terms)


def energy_table(hubo: HuboPolynomial) -> np.ndarray:
    """Energy of every assignment; index bit ``i`` set means ``z_i = -1``."""
    n = hubo.n_vars
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    z = 1.0 - 2.0 * bits
    out = np.zeros(1 << n)
    for t, c in hubo.term_dict().items():
        out += c * (np.prod(z[:, list(t)], axis=1) if t else 1.0)
    return out


def _flip(state, i, n):
    return state.reshape((2,) * (n - i - 1) + (2,) + (2,) * i)[
        (slice(None),) * (n - i - 1) + (slice(None, None, -1),)].reshape(-1)


def commutator_betas(state: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """``i <psi|[D, X_i]|psi>`` per site, by applying both operator orders."""
    state = np.asarray(state, dtype=np.complex128)
    n = int(state.shape[0]).bit_length() - 1
    out = np.empty(n)
    for i in range(n):
        xs = _flip(state, i, n)
        val = 1j * (np.vdot(state, diag * xs) - np.vdot(state, _flip(diag * state, i, n)))
        out[i] = val.real
    return out


def z_marginals(state: np.ndarray) -> np.ndarray:
    """``<Z_i>`` from the marginal distribution of each qubit."""
    prob = np.abs(np.asarray(state)) ** 2
    n = int(prob.shape[0]).bit_length() - 1
    t = prob.reshape((2,) * n)
    out = np.empty(n)
    for i in range(n):
        axis = n - 1 - i
        marg = t.sum(axis=tuple(a for a in range(n) if a != axis))
        out[i] = marg[0] - marg[1]
    return out


# -- chart integrator ---------------------------------------------------------

def _grad(terms, z):
    zl = z.tolist()
    g = [0.0] * len(zl)
    for t, c in terms:
        for a in t:
            g[a] += c * math.prod(zl[b] for b in t if b != a)
    return np.array(g)


def _pairs(hubo, scope):
    n = hubo.n_vars
    if PairScope(scope) is PairScope.FULL:
        und = [(a, b) for a in range(n) for b in range(a + 1, n)]
    else:
        und = sorted({(a, b) for t in hubo.term_dict() for a in t for b in t if a < b})
    return und


@dataclass
class _Controls:
    bx: np.ndarray
    by: np.ndarray
    bsym: dict  # unordered pair -> b_ij + b_ji


def _controls(kind, m, g, und):
    n = m.shape[0]
    bx = np.zeros(n)
    by = np.zeros(n)
    bsym = {}
    if kind is Algorithm.CC_FALQON:
        bx[:] = -2.0 * np.sum(m[:, 1] * g)
    if kind in (Algorithm.CC_IFALQON, Algorithm.HOT_CACAO_PLUS):
        bx = -2.0 * m[:, 1] * g
    if kind in (Algorithm.CACAO, Algorithm.HOT_CACAO, Algorithm.HOT_CACAO_PLUS):
        by = 2.0 * m[:, 0] * g
    if kind in (Algorithm.HOT_CACAO, Algorithm.HOT_CACAO_PLUS):
        for a, b in und:
            bsym[(a, b)] = 2.0 * m[a, 0] * m[b, 2] * g[a] + 2.0 * m[b, 0] * m[a, 2] * g[b]
    return _Controls(bx, by, bsym)


def _dH_dm(kind, m, terms, ctl):
    """Gradient of the frozen-control Hamiltonian with respect to each spin."""
    d = np.zeros_like(m)
    if kind in (Algorithm.CC_FALQON, Algorithm.CC_IFALQON, Algorithm.HOT_CACAO_PLUS):
        d[:, 2] += _grad(terms, m[:, 2])
    d[:, 0] += ctl.bx
    d[:, 1] += ctl.by
    for (a, b), c in ctl.bsym.items():
        # c (m_a^Y m_b^Z + m_a^Z m_b^Y)
        d[a, 1] += c * m[b, 2]
        d[b, 2] += c * m[a, 1]
        d[a, 2] += c * m[b, 1]
        d[b, 1] += c * m[a, 2]
    return d


def _chart_rhs(kind, q, p, terms, ctl):
    if np.any(np.abs(2.0 * p) >= 1.0 - POLE_BAND):
        raise ChartPoleError("chart trajectory entered the pole band")
    m = _spins(q, p)
    d = _dH_dm(kind, m, terms, ctl)
    dq, dp = _jacobians(q, p)
    h_q = np.sum(d * dq, axis=1)
    h_p = np.sum(d * dp, axis=1)
    return h_p, -h_q


@dataclass
class ChartTrajectory:
    times: np.ndarray
    q: np.ndarray  # (K, N)
    p: np.ndarray
    energies: np.ndarray

    def spins(self) -> np.ndarray:
        """``(K, N, 3)`` spin vectors along the trajectory."""
        return _spins(self.q, self.p)


def hamilton_chart_integrate(hubo: HuboPolynomial, kind: Algorithm | str,
                             chart0: ChartState,
                             cfg: IntegratorConfig = IntegratorConfig()) -> ChartTrajectory:
    """RK4 on Hamilton's equations with controls frozen over each step.

    The controls come from the spin state at the start of the step, as in
    the spin engine, so differences isolate the choice of coordinates.
    Pairs follow the interaction graph of ``hubo``.
    """
    kind = Algorithm(kind)
    if chart0.n != hubo.n_vars:
        raise ValueError("chart size does not match the problem")
    terms = [(t, c) for t, c in hubo.term_dict().items()]
    und = _pairs(hubo, PairScope.GRAPH)
    q = chart0.q.copy()
    p = chart0.p.copy()
    nsteps = cfg.n_steps
    dt = cfg.dt
    qs = np.empty((nsteps + 1, q.shape[0]))
    ps = np.empty_like(qs)
    es = np.empty(nsteps + 1)
    for step in range(nsteps + 1):
        qs[step] = q
        ps[step] = p
        m = _spins(q, p)
        es[step] = _value(terms, m[:, 2])
        if step == nsteps:
            break
        ctl = _controls(kind, m, _grad(terms, m[:, 2]), und)
        k1 = _chart_rhs(kind, q, p, terms, ctl)
        k2 = _chart_rhs(kind, q + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1], terms, ctl)
        k3 = _chart_rhs(kind, q + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1], terms, ctl)
        k4 = _chart_rhs(kind, q + dt * k3[0], p + dt * k3[1], terms, ctl)
        q = q + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        p = p + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        if np.any(np.abs(2.0 * p) >= 1.0 - POLE_BAND):
            raise ChartPoleError(f"pole band reached at step {step + 1}")
    return ChartTrajectory(np.arange(nsteps + 1) * dt, qs, ps, es)
