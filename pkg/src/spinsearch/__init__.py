"""spinsearch: generative transformer search for spin-chain ground states.

A decoder-only transformer learns a distribution over discrete
Pauli-rotation circuits whose cumulative logits track prefix energies of a
target spin Hamiltonian; sampled circuits are then sharpened by continuous
angle refinement and greedy wire reassignment.
"""

from .circuits import Gate, circuit_energy, load_circuit, save_circuit
from .heisenberg import (
    HeisenbergSpec,
    build_heisenberg,
    commutes_with_exchange,
    critical_field_scan,
    exchange_hamiltonian,
    first_departure,
    total_sz,
)
from .model import (
    CircuitGenerator,
    ModelConfig,
    SampledSequence,
    average_checkpoints,
    cumulative_logits_for,
    load_checkpoint,
    sample_circuits,
    save_checkpoint,
)
from .pool import PoolConfig, Vocabulary, build_vocabulary, pool_angles
from .refine import (
    RefinableCircuit,
    RefineConfig,
    angle_refinement,
    postprocess_best_of,
    wire_swap_loop,
)
from .sim import (
    Hamiltonian,
    PauliString,
    apply_pauli_rotation,
    basis_state,
    dense_matrix,
    energy_gradient,
    exact_ground_energy,
    expectation,
    prefix_energies,
    zero_state,
)
from .training import (
    EpochRecord,
    TrainConfig,
    TrainResult,
    energy_weight,
    gate_statistics,
    select_and_average_best,
    train,
    weighted_mse_loss,
)

__version__ = "0.1.0"
