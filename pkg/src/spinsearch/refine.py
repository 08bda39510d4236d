"""Post-processing: continuous angle refinement plus greedy wire reassignment.

The loop lifts both discretizations the pool imposes on generated
circuits.  First, all rotation angles of the fixed gate sequence are
optimized as unconstrained reals (quasi-Newton with exact parameter-shift
gradients, or derivative-free).  Then each gate position in turn is
trialed on every combination of qubits (pairs canonicalized to i < j since
XX/YY/ZZ are exchange-symmetric), the whole trial sequence is re-refined,
and the move is kept only on strict energy improvement.  Gate count,
order, and templates never change; only angles and qubit assignments do.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
import torch
from scipy.optimize import minimize

from .circuits import Gate, circuit_rotations
from .model import CircuitGenerator, sample_circuits
from .pool import Vocabulary
from .sim import Hamiltonian, energy_gradient, expectation, simulate, zero_state

METHODS = ("quasi-newton", "derivative-free")


@dataclass(frozen=True)
class RefineConfig:
    method: str = "quasi-newton"
    max_iters: int = 500
    gradient_tolerance: float = 1e-7
    energy_tolerance: float = 1e-9

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.gradient_tolerance <= 0 or self.energy_tolerance <= 0:
            raise ValueError("tolerances must be > 0")


@dataclass
class RefinableCircuit:
    """Gate sequence with continuous angles and its last evaluated energy.

    ``warning`` is set when the last refinement stopped on the iteration
    cap instead of its tolerances.
    """

    gates: list[Gate]
    energy: float
    warning: bool = False


def evaluate_circuit(gates: Sequence[Gate], hamiltonian: Hamiltonian) -> float:
    state = simulate(circuit_rotations(gates), zero_state(hamiltonian.n_qubits))
    return expectation(state, hamiltonian)


def circuit_from_tokens(
    vocab: Vocabulary, token_ids: Sequence[int], hamiltonian: Hamiltonian
) -> RefinableCircuit:
    """Turn sampled token ids into an evaluated, refinable circuit."""
    gates = vocab.tokens_to_gates(token_ids)
    return RefinableCircuit(gates=gates, energy=evaluate_circuit(gates, hamiltonian))


def _with_angles(gates: Sequence[Gate], angles: np.ndarray) -> list[Gate]:
    return [g.with_angle(float(a)) for g, a in zip(gates, angles)]


def angle_refinement(
    circuit: RefinableCircuit, hamiltonian: Hamiltonian, cfg: RefineConfig
) -> RefinableCircuit:
    """Locally minimize the circuit energy over all rotation angles.

    Gate order and qubit assignments are untouched.  Angles are
    unconstrained (Pauli rotations are periodic, so bounds add nothing).
    Never raises on non-convergence: the best iterate comes back with
    ``warning=True``.
    """
    if not circuit.gates:
        raise ValueError("circuit must contain at least one gate")
    paulis = [g.pauli() for g in circuit.gates]
    initial_state = zero_state(hamiltonian.n_qubits)
    x0 = np.array([g.angle for g in circuit.gates], dtype=float)

    def fun(x: np.ndarray) -> float:
        state = simulate(list(zip(paulis, x)), initial_state)
        return expectation(state, hamiltonian)

    def jac(x: np.ndarray) -> np.ndarray:
        return np.asarray(energy_gradient(list(zip(paulis, x)), hamiltonian, initial_state))

    f0 = fun(x0)
    if cfg.method == "quasi-newton":
        result = minimize(
            fun, x0, jac=jac, method="L-BFGS-B",
            options={
                "maxiter": cfg.max_iters,
                "gtol": cfg.gradient_tolerance,
                "ftol": cfg.energy_tolerance,
            },
        )
    else:
        result = minimize(
            fun, x0, method="COBYLA", tol=1e-8,
            options={"maxiter": cfg.max_iters, "rhobeg": 0.5},
        )
    warning = not bool(result.success)
    if result.fun <= f0:
        return RefinableCircuit(_with_angles(circuit.gates, result.x), float(result.fun), warning)
    # Optimizer made no progress; keep the input point.
    return RefinableCircuit(list(circuit.gates), f0, warning)


def wire_swap_loop(
    circuit: RefinableCircuit,
    hamiltonian: Hamiltonian,
    cfg: RefineConfig,
    repeat_until_converged: bool = False,
    max_passes: int = 20,
) -> RefinableCircuit:
    """Greedy wire reassignment with re-refinement after every trial.

    Refines angles first, then for each gate position in order tries
    moving that gate to every combination of distinct qubits (ascending
    lexicographic order over i < j pairs, single qubits in index order),
    re-refining the whole trial sequence and accepting only strict energy
    improvements.  One pass by default; ``repeat_until_converged`` repeats
    passes until none improves (capped at ``max_passes``).
    """
    if not circuit.gates:
        raise ValueError("circuit must contain at least one gate")
    n = hamiltonian.n_qubits
    current = angle_refinement(circuit, hamiltonian, cfg)
    for _ in range(max_passes if repeat_until_converged else 1):
        improved = False
        for position in range(len(current.gates)):
            op = current.gates[position]
            for qubits in combinations(range(n), len(op.qubits)):
                trial_gates = list(current.gates)
                trial_gates[position] = op.with_qubits(qubits)
                trial = angle_refinement(
                    RefinableCircuit(trial_gates, evaluate_circuit(trial_gates, hamiltonian)),
                    hamiltonian, cfg,
                )
                if trial.energy < current.energy:
                    current = trial
                    improved = True
        if not improved:
            break
    return current


def postprocess_best_of(
    model: CircuitGenerator,
    vocab: Vocabulary,
    hamiltonian: Hamiltonian,
    n_samples: int,
    cfg: RefineConfig,
    length: int = 12,
    temperature: float = 0.5,
    generator: torch.Generator | None = None,
) -> tuple[RefinableCircuit, float]:
    """Sample ``n_samples`` circuits, post-process each, return the best.

    Returns the minimum-energy refined circuit and its energy.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if generator is None:
        generator = torch.Generator().manual_seed(0)
    samples = sample_circuits(model, vocab, n_samples, length, temperature, generator)
    best: RefinableCircuit | None = None
    for s in samples:
        candidate = circuit_from_tokens(vocab, s.token_ids, hamiltonian)
        refined = wire_swap_loop(candidate, hamiltonian, cfg)
        if best is None or refined.energy < best.energy:
            best = refined
    assert best is not None
    return best, best.energy
