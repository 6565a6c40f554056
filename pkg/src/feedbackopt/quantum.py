"""Dense statevector reference for FALQON and iFALQON.

Basis convention: qubit ``i`` is bit ``i`` of the basis index (little
endian) and bit value 0 means ``Z_i = +1``. The problem Hamiltonian is
diagonal, so it is stored as the vector of its basis-state energies.

A run starts from the uniform superposition and alternates: measure the
feedback parameters ``beta = i<[H_P, X]>`` exactly from the current state,
then evolve one interval ``dt`` under ``H_P + sum_i beta_i X_i`` with
``beta`` frozen. Re-preparing and re-evolving the state from ``t = 0`` on
each iteration (as hardware must) gives the same state in noiseless
simulation, so by default the state is kept; ``emulate_restart=True``
replays the schedule from scratch every iteration instead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .classical import Trajectory
from .problem import HuboPolynomial

__all__ = [
    "QuantumAlgorithm",
    "QuantumRunConfig",
    "QuantumCapError",
    "PropagationError",
    "DEFAULT_CAP",
    "HARD_CAP",
    "diagonal_problem_operator",
    "init_uniform_superposition",
    "basis_state",
    "expectation_energy",
    "expectation_z",
    "bloch_vectors",
    "measure_beta_falqon",
    "measure_beta_ifalqon",
    "measure_betas",
    "propagate",
    "run_feedback",
]

DEFAULT_CAP = 16
HARD_CAP = 20
# |<Z_i>| below this is rounding noise on an exact tie and rounds to +1
_TIE = 1e-12


class QuantumAlgorithm(str, enum.Enum):
    FALQON = "falqon"
    IFALQON = "ifalqon"

    @property
    def code(self) -> int:
        return K.FALQON if self is QuantumAlgorithm.FALQON else K.IFALQON


class QuantumCapError(ValueError):
    pass


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuantumRunConfig:
    dt: float = 1e-2
    T: float = 10.0
    propagation_tolerance: float = 1e-9
    cap: int = DEFAULT_CAP
    emulate_restart: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.cap > HARD_CAP:
            raise ValueError(f"cap may not exceed {HARD_CAP}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.T / self.dt + 1e-9))


def _check_cap(n: int, cap: int = DEFAULT_CAP) -> None:
    if n > min(cap, HARD_CAP):
        raise QuantumCapError(f"quantum engine cap exceeded: N={n} > {min(cap, HARD_CAP)}")


def diagonal_problem_operator(hubo: HuboPolynomial, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Energy of every computational basis state (length ``2**N``)."""
    _check_cap(hubo.n_vars, cap)
    return K.poly_diagonal(hubo.n_vars, hubo.ptr, hubo.var, hubo.coef)


def _n_qubits(state: np.ndarray) -> int:
    n = int(state.shape[0]).bit_length() - 1
    if state.ndim != 1 or (1 << n) != state.shape[0]:
        raise ValueError("state length must be a power of two")
    return n


def init_uniform_superposition(n: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    _check_cap(n, cap)
    return np.full(1 << n, 2.0 ** (-n / 2), dtype=np.complex128)


def basis_state(n: int, bits: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=np.complex128)
    psi[bits] = 1.0
    return psi


def _check_dims(state, diag):
    if state.shape != diag.shape:
        raise ValueError(f"state length {state.shape} does not match operator {diag.shape}")


def _split(state):
    state = np.asarray(state, dtype=np.complex128)
    return np.ascontiguousarray(state.real), np.ascontiguousarray(state.imag)


def expectation_energy(state: np.ndarray, diag: np.ndarray) -> float:
    _check_dims(state, diag)
    re, im = _split(state)
    return float(K.sv_energy(re, im, np.ascontiguousarray(diag, dtype=np.float64)))


def expectation_z(state: np.ndarray, i: int) -> float:
    n = _n_qubits(state)
    if not 0 <= i < n:
        raise IndexError(f"qubit {i} out of range for N={n}")
    p = np.abs(state) ** 2
    sign = 1.0 - 2.0 * ((np.arange(state.shape[0]) >> i) & 1)
    return float(np.dot(p, sign))


def bloch_vectors(state: np.ndarray) -> np.ndarray:
    """``(N, 3)`` array of single-qubit expectations ``<X_i>, <Y_i>, <Z_i>``."""
    n = _n_qubits(state)
    out = np.empty((n, 3))
    re, im = _split(state)
    K.sv_bloch(re, im, n, out)
    return out


def measure_betas(state: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Per-site ``i<psi|[H_P, X_i]|psi>`` (the iFALQON parameters).

    Pairing each basis state with its bit-flipped partner makes the sum
    manifestly real, so there is no imaginary residue to discard.
    """
    _check_dims(state, diag)
    n = _n_qubits(state)
    out = np.empty(n)
    re, im = _split(state)
    K.sv_measure_betas(re, im, np.ascontiguousarray(diag, dtype=np.float64), out)
    return out


def measure_beta_falqon(state: np.ndarray, diag: np.ndarray) -> float:
    """``i<psi|[H_P, sum_i X_i]|psi>``."""
    return float(measure_betas(state, diag).sum())


def measure_beta_ifalqon(state: np.ndarray, diag: np.ndarray, i: int) -> float:
    betas = measure_betas(state, diag)
    if not 0 <= i < betas.shape[0]:
        raise IndexError(f"qubit {i} out of range")
    return float(betas[i])


def propagate(state: np.ndarray, beta, diag: np.ndarray, dt: float,
              tol: float = 1e-9) -> np.ndarray:
    """Apply ``exp(-i dt (H_P + sum_i beta_i X_i))``.

    ``beta`` is a scalar (shared over all sites) or a per-site vector. The
    result is renormalized; a norm deviation above 1e-6 raises.
    """
    _check_dims(state, diag)
    n = _n_qubits(state)
    b = np.broadcast_to(np.asarray(beta, dtype=np.float64), (n,)).copy()
    re, im = _split(state)
    nrm = K.sv_propagate(re, im, np.ascontiguousarray(diag, dtype=np.float64), b,
                         float(dt), float(tol))
    if abs(nrm - 1.0) > 1e-6:
        raise PropagationError(f"norm deviation {abs(nrm - 1.0):.3g} after propagation")
    re /= nrm
    im /= nrm
    return re + 1j * im


def run_feedback(kind: QuantumAlgorithm | str, hubo: HuboPolynomial,
                 cfg: QuantumRunConfig = QuantumRunConfig(), *,
                 record_bloch: bool = False, initial_state: np.ndarray | None = None,
                 stop_energy: float = -np.inf) -> Trajectory:
    """Feedback loop from the uniform superposition (or ``initial_state``).

    The trajectory records, at every interval start ``t_k = k dt``, the
    energy, ``<Z_i>`` (``traj.meta["z"]``), the applied parameters and
    control norms. ``stop_energy`` ends the run early once the energy
    reaches it. The final solution is ``sign(<Z_i(T)>)`` in
    ``traj.meta["solution"]``.
    """
    kind = QuantumAlgorithm(kind)
    n = hubo.n_vars
    _check_cap(n, cfg.cap)
    diag = diagonal_problem_operator(hubo, cfg.cap)
    psi0 = (init_uniform_superposition(n, cfg.cap) if initial_state is None
            else np.array(initial_state, dtype=np.complex128))
    nsteps = cfg.n_steps
    energies = np.zeros(nsteps + 1)
    betas = np.zeros((nsteps + 1, n))
    norm_dev = np.zeros(nsteps + 1)
    zs = np.zeros((nsteps + 1, n))
    bloch = np.zeros((nsteps + 1 if record_bloch else 1, n, 3))

    if cfg.emulate_restart:
        psi, done = _run_with_restarts(kind, psi0, diag, cfg, energies, betas,
                                       norm_dev, zs, bloch, record_bloch, stop_energy)
    else:
        re, im = _split(psi0)
        done, status = K.sv_feedback_run(kind.code, re, im, diag, float(cfg.dt), nsteps,
                                         float(cfg.propagation_tolerance), energies,
                                         betas, norm_dev, zs, bloch, record_bloch,
                                         float(stop_energy))
        if status:
            raise PropagationError(f"propagation failed at step {done}")
        psi = re + 1j * im

    k = done + 1
    betas = betas[:k]
    if kind is QuantumAlgorithm.FALQON:
        shared = betas[:, 0]
        norm_x = n * np.abs(shared)
        extra = {"beta": shared}
    else:
        norm_x = np.abs(betas).sum(axis=1)
        extra = {"beta_l1": norm_x}
    norms = np.column_stack([norm_x, np.zeros(k), np.zeros(k)])
    z = bloch_vectors(psi)[:, 2] if n else np.zeros(0)
    traj = Trajectory(
        times=np.arange(k) * cfg.dt,
        energies=energies[:k],
        control_norms=norms,
        n=n,
        final_state=psi,
        raw_beta_x=np.abs(betas[:, 0]) if kind is QuantumAlgorithm.FALQON else None,
        extra=extra,
    )
    traj.meta = {
        "algorithm": kind.value,
        "betas": betas,
        "norm_deviation": norm_dev[:k],
        "z": zs[:k],
        "final_z": z,
        "solution": np.where(z >= -_TIE, 1, -1).astype(np.int64),
    }
    if record_bloch:
        traj.meta["bloch"] = bloch[:k]
    return traj


def _run_with_restarts(kind, psi0, diag, cfg, energies, betas, norm_dev, zs, bloch,
                       record_bloch, stop_energy):
    """Algorithm-faithful loop: every iteration re-evolves from ``t = 0``."""
    n = betas.shape[1]
    schedule: list[np.ndarray] = []
    nsteps = cfg.n_steps
    psi = psi0
    for step in range(nsteps + 1):
        psi = psi0.copy()
        for b in schedule:
            psi = propagate(psi, b, diag, cfg.dt, cfg.propagation_tolerance)
        site = measure_betas(psi, diag)
        beta = np.full(n, site.sum()) if kind is QuantumAlgorithm.FALQON else site
        energies[step] = expectation_energy(psi, diag)
        betas[step] = beta
        norm_dev[step] = abs(np.linalg.norm(psi) - 1.0)
        zs[step] = [expectation_z(psi, i) for i in range(n)]
        if record_bloch:
            bloch[step] = bloch_vectors(psi)
        if step == nsteps or energies[step] <= stop_energy:
            return psi, step
        schedule.append(beta)
    return psi, nsteps
