"""Feedback-based quantum and classical optimization of k-SAT energies."""

from .classical import (Algorithm, ClassicalSpinState, ControlSnapshot, IntegratorConfig,
                        PairScope, StepSizeError, Trajectory, descent_rate,
                        detect_convergence, init_fixed, init_random, pair_set, run)
from .problem import (CnfFormula, DimacsError, HuboPolynomial, brute_force_ground,
                      cnf_to_hubo, count_unsatisfied, emit_dimacs, energy,
                      energy_and_gradient, generate_random_ksat, gradient_z,
                      parse_dimacs, read_dimacs, round_solution)
from .quantum import (QuantumAlgorithm, QuantumCapError, QuantumRunConfig,
                      run_feedback)

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "ClassicalSpinState", "ControlSnapshot", "IntegratorConfig",
    "PairScope", "StepSizeError", "Trajectory", "descent_rate", "detect_convergence",
    "init_fixed", "init_random", "pair_set", "run",
    "CnfFormula", "DimacsError", "HuboPolynomial", "brute_force_ground", "cnf_to_hubo",
    "count_unsatisfied", "emit_dimacs", "energy", "energy_and_gradient",
    "generate_random_ksat", "gradient_z", "parse_dimacs", "read_dimacs", "round_solution",
    "QuantumAlgorithm", "QuantumCapError", "QuantumRunConfig", "run_feedback",
]
