"""Classical feedback spin dynamics.

Unit spins ``m_i`` follow ``dm_i/dt = 2 m_i x h_i`` with ``h_i = -dH_t/dm_i``.
Each algorithm chooses control terms in ``H_t`` whose coefficients (the
feedback parameters) are computed from the current state so that the
problem energy ``H_P(m^Z)`` never increases:

=================  =====================================================
``CC_FALQON``      ``H_P + b sum_i m_i^X``,  ``b = -2 sum_i m_i^Y g_i``
``CC_IFALQON``     ``H_P + sum_i b_i m_i^X``, ``b_i = -2 m_i^Y g_i``
``CACAO``          ``sum_i b_i m_i^Y``,       ``b_i = 2 m_i^X g_i``
``HOT_CACAO``      CACAO + ``sum_{i!=j} b_ij (m_i^Y m_j^Z + m_i^Z m_j^Y)``,
                   ``b_ij = 2 m_i^X m_j^Z g_i``
``HOT_CACAO_PLUS`` ``H_P`` + both single-site families + the pair family
=================  =====================================================

with ``g_i = dH_P/dm_i^Z``. Controls are evaluated once per time step and
held fixed over the RK4 stages.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .problem import HuboPolynomial, energy_and_gradient, interaction_graph

__all__ = [
    "Algorithm",
    "PairScope",
    "PairSet",
    "ClassicalSpinState",
    "ControlSnapshot",
    "IntegratorConfig",
    "Trajectory",
    "StepSizeError",
    "init_fixed",
    "init_random",
    "pair_set",
    "compute_controls",
    "effective_field",
    "eom_rhs",
    "rk4_step",
    "run",
    "control_strengths",
    "descent_rate",
    "detect_convergence",
]


class Algorithm(str, enum.Enum):
    CC_FALQON = "cc-falqon"
    CC_IFALQON = "cc-ifalqon"
    CACAO = "cacao"
    HOT_CACAO = "hot-cacao"
    HOT_CACAO_PLUS = "hot-cacao-plus"

    @property
    def code(self) -> int:
        return _CODES[self]

    @property
    def uses_pairs(self) -> bool:
        return self in (Algorithm.HOT_CACAO, Algorithm.HOT_CACAO_PLUS)

    @property
    def planar(self) -> bool:
        """Random initial states are drawn in the X-Z plane for these."""
        return self in (Algorithm.CACAO, Algorithm.HOT_CACAO)


_CODES = {
    Algorithm.CC_FALQON: K.CC_FALQON,
    Algorithm.CC_IFALQON: K.CC_IFALQON,
    Algorithm.CACAO: K.CACAO,
    Algorithm.HOT_CACAO: K.HOT_CACAO,
    Algorithm.HOT_CACAO_PLUS: K.HOT_CACAO_PLUS,
}


class PairScope(str, enum.Enum):
    GRAPH = "graph"
    FULL = "full"


class StepSizeError(RuntimeError):
    """Norm drift of an RK4 step exceeded the configured tolerance."""


@dataclass(frozen=True)
class PairSet:
    """Ordered spin pairs ``(i, j)``, ``i != j``, carrying second-order controls."""

    scope: PairScope
    i: np.ndarray
    j: np.ndarray

    def __len__(self):
        return self.i.shape[0]


_EMPTY_IDX = np.zeros(0, dtype=np.int64)


def pair_set(hubo: HuboPolynomial, scope: PairScope | str = PairScope.GRAPH) -> PairSet:
    """Ordered pairs for the second-order controls.

    Layout: the first half lists each unordered edge ``(a, b)``, ``a < b``;
    the second half lists the reversed pairs in the same order.
    """
    scope = PairScope(scope)
    if scope is PairScope.FULL:
        a, b = np.triu_indices(hubo.n_vars, k=1)
        e = np.column_stack([a, b]).astype(np.int64)
    else:
        edges = sorted(interaction_graph(hubo))
        e = np.array(edges, dtype=np.int64).reshape(len(edges), 2)
    ii = np.concatenate([e[:, 0], e[:, 1]])
    jj = np.concatenate([e[:, 1], e[:, 0]])
    return PairSet(scope, np.ascontiguousarray(ii), np.ascontiguousarray(jj))


@dataclass
class ClassicalSpinState:
    """``m`` is an ``(N, 3)`` array of unit vectors ``(m^X, m^Y, m^Z)``."""

    m: np.ndarray

    def __post_init__(self):
        self.m = np.ascontiguousarray(self.m, dtype=np.float64)
        if self.m.ndim != 2 or self.m.shape[1] != 3 or self.m.shape[0] < 1:
            raise ValueError("spin state must be an (N, 3) array with N >= 1")

    @property
    def n(self) -> int:
        return self.m.shape[0]

    def copy(self) -> "ClassicalSpinState":
        return ClassicalSpinState(self.m.copy())

    def norm_error(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.m, axis=1) - 1.0)))


@dataclass
class ControlSnapshot:
    """Feedback parameters at one instant.

    ``beta_x``/``beta_y`` are per-site arrays (CC-FALQON's single shared
    value is replicated over all sites, with ``shared_x`` set). ``beta_pair``
    is aligned with ``pairs``.
    """

    beta_x: np.ndarray | None = None
    beta_y: np.ndarray | None = None
    beta_pair: np.ndarray | None = None
    pairs: PairSet | None = None
    shared_x: bool = False
    time: float = 0.0

    @property
    def shared_beta_x(self) -> float | None:
        if not self.shared_x or self.beta_x is None or self.beta_x.size == 0:
            return None
        return float(self.beta_x[0])


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    T: float = 64.0
    renorm: bool = True
    drift_tolerance: float = 1e-6
    abort_on_drift: bool = True
    refresh_controls_per_stage: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")

    @property
    def n_steps(self) -> int:
        # tolerate T/dt landing a hair below an integer
        return int(math.floor(self.T / self.dt + 1e-9))


@dataclass
class Trajectory:
    times: np.ndarray
    energies: np.ndarray
    control_norms: np.ndarray  # (K, 3): |beta^X|_1, |beta^Y|_1, |beta_pair|_1
    n: int
    final_state: object = None
    snapshots: np.ndarray | None = None
    snapshot_times: np.ndarray | None = None
    raw_beta_x: np.ndarray | None = None
    max_drift: float = 0.0
    extra: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def energy_densities(self) -> np.ndarray:
        return self.energies / self.n

    @property
    def final_energy(self) -> float:
        return float(self.energies[-1])

    def columns(self) -> dict[str, np.ndarray]:
        cols = {
            "t": self.times,
            "energy": self.energies,
            "energy_density": self.energy_densities,
            "norm_beta_x": self.control_norms[:, 0],
            "norm_beta_y": self.control_norms[:, 1],
            "norm_beta_pair": self.control_norms[:, 2],
        }
        cols.update(self.extra)
        return cols


# -- initial states -----------------------------------------------------------

def init_fixed(n: int) -> ClassicalSpinState:
    """All spins along +X, the ground state of ``-sum_i m_i^X``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = np.zeros((n, 3))
    m[:, 0] = 1.0
    return ClassicalSpinState(m)


def init_random(n: int, seed: int, planar: bool = False) -> ClassicalSpinState:
    """Spins with polar angle ~ U[0, pi] and azimuth ~ U[0, 2pi).

    Note this is uniform in the angles, not on the sphere. With ``planar``
    the azimuth is zero so all spins lie in the X-Z plane.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, np.pi, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    if planar:
        phi = np.zeros(n)
    m = np.column_stack([np.sin(theta) * np.cos(phi),
                         np.sin(theta) * np.sin(phi),
                         np.cos(theta)])
    return ClassicalSpinState(m)


# -- single-instant quantities ------------------------------------------------

def _pairs_for(kind: Algorithm, pairs: PairSet | None):
    if kind.uses_pairs:
        if pairs is None:
            raise ValueError(f"{kind.value} needs a pair set (graph or full scope)")
        return pairs.i, pairs.j
    return _EMPTY_IDX, _EMPTY_IDX


def compute_controls(kind: Algorithm | str, spins: ClassicalSpinState, grad,
                     pairs: PairSet | None = None, time: float = 0.0) -> ControlSnapshot:
    kind = Algorithm(kind)
    n = spins.n
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    pi, pj = _pairs_for(kind, pairs)
    bx, by, bp = np.zeros(n), np.zeros(n), np.zeros(len(pi))
    K.compute_controls(kind.code, spins.m, grad, pi, pj, bx, by, bp)
    snap = ControlSnapshot(time=time, shared_x=kind is Algorithm.CC_FALQON)
    if kind in (Algorithm.CC_FALQON, Algorithm.CC_IFALQON, Algorithm.HOT_CACAO_PLUS):
        snap.beta_x = bx
    if kind in (Algorithm.CACAO, Algorithm.HOT_CACAO, Algorithm.HOT_CACAO_PLUS):
        snap.beta_y = by
    if kind.uses_pairs:
        snap.beta_pair = bp
        snap.pairs = pairs
    return snap


def _control_arrays(kind: Algorithm, n: int, controls: ControlSnapshot):
    needs_x = kind in (Algorithm.CC_FALQON, Algorithm.CC_IFALQON, Algorithm.HOT_CACAO_PLUS)
    needs_y = kind in (Algorithm.CACAO, Algorithm.HOT_CACAO, Algorithm.HOT_CACAO_PLUS)
    if needs_x != (controls.beta_x is not None) or needs_y != (controls.beta_y is not None):
        raise ValueError(f"control snapshot inconsistent with {kind.value}")
    if kind.uses_pairs and (controls.beta_pair is None or controls.pairs is None):
        raise ValueError(f"{kind.value} snapshot is missing pair controls")
    bx = controls.beta_x if needs_x else np.zeros(n)
    by = controls.beta_y if needs_y else np.zeros(n)
    bp = controls.beta_pair if kind.uses_pairs else np.zeros(0)
    return (np.ascontiguousarray(bx, dtype=np.float64),
            np.ascontiguousarray(by, dtype=np.float64),
            np.ascontiguousarray(bp, dtype=np.float64))


def effective_field(kind: Algorithm | str, spins: ClassicalSpinState,
                    controls: ControlSnapshot, grad) -> np.ndarray:
    """``h_i = -dH_t/dm_i`` with the feedback parameters held constant."""
    kind = Algorithm(kind)
    bx, by, bp = _control_arrays(kind, spins.n, controls)
    pi, pj = _pairs_for(kind, controls.pairs)
    h = np.empty((spins.n, 3))
    K.effective_field(kind.code, spins.m, np.ascontiguousarray(grad, dtype=np.float64),
                      pi, pj, bx, by, bp, h)
    return h


def eom_rhs(spins: ClassicalSpinState | np.ndarray, fields) -> np.ndarray:
    m = np.ascontiguousarray(getattr(spins, "m", spins), dtype=np.float64)
    h = np.ascontiguousarray(fields, dtype=np.float64)
    if m.shape != h.shape:
        raise ValueError("spin and field arrays differ in shape")
    out = np.empty_like(m)
    K.eom_rhs(m, h, out)
    return out


def control_strengths(snapshot: ControlSnapshot) -> tuple[float, float, float]:
    """L1 norms of the X, Y and pair control families (absent ones are 0)."""
    def l1(a):
        return float(np.abs(a).sum()) if a is not None else 0.0
    return l1(snapshot.beta_x), l1(snapshot.beta_y), l1(snapshot.beta_pair)


def descent_rate(kind: Algorithm | str, snapshot: ControlSnapshot) -> float:
    """Instantaneous ``dE_P/dt`` implied by the feedback law (always <= 0)."""
    kind = Algorithm(kind)
    rate = 0.0
    if kind is Algorithm.CC_FALQON:
        b = snapshot.shared_beta_x
        rate -= 0.0 if b is None else b * b
    elif snapshot.beta_x is not None:
        rate -= float(np.dot(snapshot.beta_x, snapshot.beta_x))
    if snapshot.beta_y is not None:
        rate -= float(np.dot(snapshot.beta_y, snapshot.beta_y))
    if snapshot.beta_pair is not None and len(snapshot.beta_pair):
        half = len(snapshot.beta_pair) // 2
        # symmetric coefficient b_ij + b_ji, once per unordered pair
        sym = snapshot.beta_pair[:half] + snapshot.beta_pair[half:]
        rate -= float(np.dot(sym, sym))
    return rate


# -- integration --------------------------------------------------------------

def rk4_step(spins: ClassicalSpinState, hubo: HuboPolynomial, kind: Algorithm | str,
             dt: float, pairs: PairSet | None = None, *, renorm: bool = True,
             refresh_controls: bool = False
             ) -> tuple[ClassicalSpinState, ControlSnapshot, float]:
    """Advance one step of length ``dt``.

    Returns the new state, the controls used (evaluated at the input state)
    and the norm drift before renormalization.
    """
    kind = Algorithm(kind)
    _, g = energy_and_gradient(hubo, spins.m[:, 2])
    snap = compute_controls(kind, spins, g, pairs)
    bx, by, bp = _control_arrays(kind, spins.n, snap)
    pi, pj = _pairs_for(kind, pairs)
    m = spins.m.copy()
    drift = K.rk4_advance(kind.code, m, float(dt), hubo.ptr, hubo.var, hubo.coef,
                          pi, pj, bx.copy(), by.copy(), bp.copy(),
                          refresh_controls, renorm, g)
    return ClassicalSpinState(m), snap, float(drift)


def run(kind: Algorithm | str, hubo: HuboPolynomial, init: ClassicalSpinState,
        cfg: IntegratorConfig = IntegratorConfig(), trace_stride: int = 1,
        pairs: PairSet | PairScope | str | None = PairScope.GRAPH,
        snapshot_stride: int = 0) -> Trajectory:
    """Integrate from ``t = 0`` to ``cfg.T`` and record a trajectory.

    Energies and control norms are recorded every ``trace_stride`` steps and
    at the final time. ``pairs`` may be a prepared :class:`PairSet` or a
    scope (ignored by algorithms without pair controls).
    """
    kind = Algorithm(kind)
    if hubo.n_vars != init.n:
        raise ValueError(f"problem has {hubo.n_vars} variables, state has {init.n} spins")
    if trace_stride < 1:
        raise ValueError("trace_stride must be >= 1")
    if kind.uses_pairs:
        if pairs is None:
            raise ValueError(f"{kind.value} needs a pair scope")
        if not isinstance(pairs, PairSet):
            pairs = pair_set(hubo, pairs)
        pi, pj = pairs.i, pairs.j
    else:
        pairs = None
        pi = pj = _EMPTY_IDX
    nsteps = cfg.n_steps
    nrec = nsteps // trace_stride + 1 + (1 if nsteps % trace_stride else 0)
    energies = np.zeros(nrec)
    norms = np.zeros((nrec, 3))
    raw_bx = np.zeros(nrec)
    if snapshot_stride > 0:
        nsnap = nsteps // snapshot_stride + 1
        snaps = np.zeros((nsnap, init.n, 3))
    else:
        snaps = np.zeros((0, init.n, 3))
    m = init.m.copy()
    done, max_drift, failed = K.spin_run(
        kind.code, m, float(cfg.dt), nsteps, hubo.ptr, hubo.var, hubo.coef, pi, pj,
        cfg.refresh_controls_per_stage, cfg.renorm, float(cfg.drift_tolerance),
        cfg.abort_on_drift, int(trace_stride), energies, norms, raw_bx, snaps,
        int(snapshot_stride))
    if failed >= 0:
        raise StepSizeError(
            f"{kind.value}: norm drift {max_drift:.3g} exceeded "
            f"{cfg.drift_tolerance:.3g} at step {failed} (t={failed * cfg.dt:.6g}); "
            f"reduce dt")
    steps = np.arange(0, nsteps + 1, trace_stride)
    if steps[-1] != nsteps:
        steps = np.append(steps, nsteps)
    traj = Trajectory(
        times=steps * cfg.dt,
        energies=energies,
        control_norms=norms,
        n=init.n,
        final_state=ClassicalSpinState(m),
        max_drift=float(max_drift),
    )
    if kind is Algorithm.CC_FALQON:
        traj.raw_beta_x = raw_bx
        traj.extra["beta_x_raw"] = raw_bx
    if snapshot_stride > 0:
        traj.snapshots = snaps
        traj.snapshot_times = np.arange(snaps.shape[0]) * snapshot_stride * cfg.dt
    traj.meta = {"algorithm": kind.value,
                 "pair_scope": pairs.scope.value if pairs is not None else None}
    return traj


def detect_convergence(traj: Trajectory, threshold: float = 1e-2,
                       dt_check: float = 1e-3, *, persistent: bool = False,
                       criterion: str = "drop") -> float | None:
    """Operation time ``T`` at which the energy has stopped falling.

    ``criterion="drop"`` tests ``E(T) - E(T + dt_check) <= threshold``
    directly and needs a trace at least as fine as ``dt_check``.
    ``criterion="rate"`` tests the per-unit-time decrease
    ``(E(T) - E(T + d)) / d <= threshold`` with ``d`` the larger of
    ``dt_check`` and the trace spacing, so coarse traces are accepted.

    By default the earliest satisfying sample is returned. With
    ``persistent`` the test must also hold at every later sample, i.e. the
    returned time follows the last violating sample; this guards against
    transients such as a feedback law that starts from zero. ``None`` when
    no such time exists inside the trace.
    """
    if criterion not in ("drop", "rate"):
        raise ValueError(f"unknown convergence criterion {criterion!r}")
    t = np.asarray(traj.times, dtype=np.float64)
    e = np.asarray(traj.energies, dtype=np.float64)
    if t.size == 0:
        return None
    if t.size == 1:
        return float(t[0])
    spacing = float(np.max(np.diff(t)))
    if criterion == "drop" and spacing > dt_check * (1 + 1e-9):
        raise ValueError(f"trace spacing {spacing:g} is coarser than dt_check={dt_check:g}")
    # partner sample: first one at least dt_check later (next sample if coarser)
    idx = np.searchsorted(t, t + dt_check * (1 - 1e-9))
    idx = np.maximum(idx, np.arange(1, t.size + 1))
    checkable = idx < t.size
    ok_idx = np.flatnonzero(checkable)
    if ok_idx.size == 0:
        return None
    drop = e[ok_idx] - e[idx[ok_idx]]
    if criterion == "rate":
        drop = drop / (t[idx[ok_idx]] - t[ok_idx])
    good = drop <= threshold
    if not persistent:
        hits = ok_idx[good]
        return float(t[hits[0]]) if hits.size else None
    bad = ok_idx[~good]
    if bad.size == 0:
        return float(t[0])
    nxt = bad[-1] + 1
    if nxt > ok_idx[-1]:
        return None
    return float(t[nxt])
