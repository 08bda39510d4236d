"""Dense statevector simulation of Pauli-rotation circuits.

States are complex128 numpy vectors of length 2**n.  Qubit 0 maps to the
most significant bit of the basis index, so ``basis_state("0011")`` puts
qubits 2 and 3 in state |1>.

Every Pauli string P is an involution (P^2 = I), so the rotation
exp(-i*theta/2 * P) is applied exactly as

    cos(theta/2) * psi - i*sin(theta/2) * (P psi)

with P psi computed by a bit-mask permutation plus phases; no matrix
exponentials and no matrices larger than the statevector are ever formed
during circuit simulation.  Dense 2^n x 2^n matrices appear only in
:func:`dense_matrix` / :func:`exact_ground_energy`, which are capped at
``MAX_DENSE_QUBITS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

PAULI_AXES = ("X", "Y", "Z")

#: Largest system for which dense matrices (exact diagonalization) are built.
MAX_DENSE_QUBITS = 12


class QubitIndexError(ValueError):
    """A Pauli factor addresses a qubit outside the simulated register."""

    def __init__(self, index: int, n_qubits: int, context: str = ""):
        self.index = index
        self.n_qubits = n_qubits
        prefix = f"{context}: " if context else ""
        super().__init__(
            f"{prefix}qubit index {index} out of range for a {n_qubits}-qubit system"
        )


class DimensionMismatchError(ValueError):
    """State and operator act on different numbers of qubits."""


class SystemSizeError(ValueError):
    """Dense-matrix operation requested beyond ``MAX_DENSE_QUBITS``."""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits
        super().__init__(
            f"dense operations support at most {MAX_DENSE_QUBITS} qubits, got {n_qubits}"
        )


class PauliString:
    """Tensor product of single-qubit Paulis on 0-based qubit indices.

    Qubits absent from ``factors`` act as identity; an empty mapping is the
    identity operator.  Instances are immutable and hashable, so gate masks
    can be cached per (string, system size).

    Parameters
    ----------
    factors:
        Mapping from qubit index to axis, e.g. ``{0: "X", 1: "X"}``.
    """

    __slots__ = ("_factors",)

    def __init__(self, factors: Mapping[int, str] | Iterable[tuple[int, str]] = ()):
        items = dict(factors)
        for q, axis in items.items():
            if not isinstance(q, int) or q < 0:
                raise ValueError(f"qubit index must be a non-negative int, got {q!r}")
            if axis not in PAULI_AXES:
                raise ValueError(f"Pauli axis must be one of {PAULI_AXES}, got {axis!r}")
        self._factors = tuple(sorted(items.items()))

    @property
    def factors(self) -> dict[int, str]:
        return dict(self._factors)

    @property
    def is_identity(self) -> bool:
        return not self._factors

    def min_qubits(self) -> int:
        """Smallest register size this string fits in."""
        return 1 + max((q for q, _ in self._factors), default=-1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PauliString):
            return NotImplemented
        return self._factors == other._factors

    def __hash__(self) -> int:
        return hash(self._factors)

    def __repr__(self) -> str:
        if not self._factors:
            return "PauliString()"
        body = " ".join(f"{axis}{q}" for q, axis in self._factors)
        return f"PauliString({body})"


@dataclass(frozen=True)
class Hamiltonian:
    """Real-weighted sum of Pauli strings acting on ``n_qubits`` qubits."""

    terms: tuple[tuple[float, PauliString], ...]
    n_qubits: int

    def __init__(self, terms: Iterable[tuple[float, PauliString]], n_qubits: int):
        terms = tuple((float(c), p) for c, p in terms)
        if n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {n_qubits}")
        for coeff, pauli in terms:
            if not math.isfinite(coeff):
                raise ValueError(f"non-finite coefficient {coeff!r} in Hamiltonian term")
            if pauli.min_qubits() > n_qubits:
                raise QubitIndexError(pauli.min_qubits() - 1, n_qubits, "Hamiltonian term")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "n_qubits", int(n_qubits))

    def __len__(self) -> int:
        return len(self.terms)


def zero_state(n_qubits: int) -> np.ndarray:
    """Return |0...0> on ``n_qubits`` qubits."""
    if n_qubits < 1:
        raise ValueError(f"n_qubits must be positive, got {n_qubits}")
    state = np.zeros(2**n_qubits, dtype=np.complex128)
    state[0] = 1.0
    return state


def basis_state(bits: str) -> np.ndarray:
    """Return the computational basis state for a bit string like ``"0011"``."""
    if not bits or any(b not in "01" for b in bits):
        raise ValueError(f"bits must be a non-empty string over {{0,1}}, got {bits!r}")
    state = np.zeros(2 ** len(bits), dtype=np.complex128)
    state[int(bits, 2)] = 1.0
    return state


def num_qubits_of(state: np.ndarray) -> int:
    n = int(np.log2(len(state)))
    if 2**n != len(state):
        raise ValueError(f"state length {len(state)} is not a power of two")
    return n


@lru_cache(maxsize=512)
def _pauli_action(pauli: PauliString, n_qubits: int) -> tuple[np.ndarray, np.ndarray]:
    """Source indices and coefficients so that (P psi)[i] = coeff[i]*psi[src[i]]."""
    flip = 0
    phase_mask = 0
    n_y = 0
    for q, axis in pauli.factors.items():
        bit = 1 << (n_qubits - 1 - q)
        if axis in ("X", "Y"):
            flip |= bit
        if axis in ("Y", "Z"):
            phase_mask |= bit
        if axis == "Y":
            n_y += 1
    idx = np.arange(2**n_qubits, dtype=np.int64)
    src = idx ^ flip
    # P|j> = i^{n_y} * (-1)^{popcount(j & phase_mask)} |j ^ flip>
    parity = np.bitwise_count(src & phase_mask) & 1
    coeff = (1j**(n_y % 4)) * np.where(parity, -1.0, 1.0)
    src.setflags(write=False)
    coeff.setflags(write=False)
    return src, coeff


def apply_pauli(pauli: PauliString, state: np.ndarray) -> np.ndarray:
    """Return P|psi> for a Pauli string P."""
    n = num_qubits_of(state)
    if pauli.min_qubits() > n:
        raise QubitIndexError(pauli.min_qubits() - 1, n)
    src, coeff = _pauli_action(pauli, n)
    return coeff * state[src]


def apply_pauli_rotation(state: np.ndarray, pauli: PauliString, theta: float) -> np.ndarray:
    """Apply exp(-i*theta/2 * P) to ``state`` and return the new state.

    Uses the involution identity cos(theta/2)*I - i*sin(theta/2)*P, which is
    exact for Pauli strings and preserves the norm.
    """
    if not math.isfinite(theta):
        raise ValueError(f"rotation angle must be finite, got {theta!r}")
    half = 0.5 * theta
    return math.cos(half) * state - 1j * math.sin(half) * apply_pauli(pauli, state)


def expectation(state: np.ndarray, hamiltonian: Hamiltonian) -> float:
    """Return <psi|H|psi> as a real number.

    The value is mathematically real for a normalized state and real
    coefficients; any imaginary residue beyond 1e-10 signals a bug and
    raises instead of being silently dropped.
    """
    n = num_qubits_of(state)
    if n != hamiltonian.n_qubits:
        raise DimensionMismatchError(
            f"state has {n} qubits but Hamiltonian expects {hamiltonian.n_qubits}"
        )
    value = 0.0 + 0.0j
    for coeff, pauli in hamiltonian.terms:
        value += coeff * np.vdot(state, apply_pauli(pauli, state))
    if abs(value.imag) > 1e-10:
        raise ArithmeticError(f"expectation has imaginary residue {value.imag:g}")
    return float(value.real)


Rotation = tuple[PauliString, float]


def simulate(rotations: Sequence[Rotation], initial: np.ndarray) -> np.ndarray:
    """Apply a sequence of (Pauli string, angle) rotations to ``initial``."""
    state = initial
    for step, (pauli, theta) in enumerate(rotations):
        try:
            state = apply_pauli_rotation(state, pauli, theta)
        except QubitIndexError as err:
            raise QubitIndexError(err.index, err.n_qubits, f"gate {step}") from err
    return state


def prefix_energies(
    rotations: Sequence[Rotation],
    hamiltonian: Hamiltonian,
    initial: np.ndarray,
) -> list[float]:
    """Energies after each prefix of the circuit, computed incrementally.

    Returns ``[E_1, ..., E_T]`` where ``E_t`` is the expectation of
    ``hamiltonian`` in the state prepared by the first ``t`` rotations
    applied to ``initial``.  One gate application per step; the circuit is
    never re-simulated from scratch.
    """
    if len(rotations) < 1:
        raise ValueError("circuit must contain at least one gate")
    energies = []
    state = initial
    for step, (pauli, theta) in enumerate(rotations):
        try:
            state = apply_pauli_rotation(state, pauli, theta)
        except QubitIndexError as err:
            raise QubitIndexError(err.index, err.n_qubits, f"gate {step}") from err
        energies.append(expectation(state, hamiltonian))
    return energies


def energy_gradient(
    rotations: Sequence[Rotation],
    hamiltonian: Hamiltonian,
    initial: np.ndarray,
) -> list[float]:
    """d(final energy)/d(theta_j) for each gate via the parameter-shift rule.

    For Pauli-rotation generators the identity
    dE/dtheta = [E(theta + pi/2) - E(theta - pi/2)] / 2 is exact.  Prefix
    states are cached so each component costs only the suffix re-simulation.
    """
    if len(rotations) < 1:
        raise ValueError("circuit must contain at least one gate")
    prefixes = [initial]
    for pauli, theta in rotations:
        prefixes.append(apply_pauli_rotation(prefixes[-1], pauli, theta))

    half_pi = 0.5 * math.pi
    grads = []
    for j, (pauli, theta) in enumerate(rotations):
        shifted = []
        for sign in (1.0, -1.0):
            state = apply_pauli_rotation(prefixes[j], pauli, theta + sign * half_pi)
            for pauli2, theta2 in rotations[j + 1:]:
                state = apply_pauli_rotation(state, pauli2, theta2)
            shifted.append(expectation(state, hamiltonian))
        grads.append(0.5 * (shifted[0] - shifted[1]))
    return grads


def dense_matrix(hamiltonian: Hamiltonian) -> np.ndarray:
    """Dense 2^n x 2^n matrix of the Hamiltonian (n <= MAX_DENSE_QUBITS)."""
    n = hamiltonian.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise SystemSizeError(n)
    dim = 2**n
    matrix = np.zeros((dim, dim), dtype=np.complex128)
    idx = np.arange(dim)
    for coeff, pauli in hamiltonian.terms:
        src, phase = _pauli_action(pauli, n)
        # column j contributes coeff*phase(j) at row j ^ flip, i.e. at src[j]
        matrix[src, idx] += coeff * phase
    return matrix


def exact_ground_energy(hamiltonian: Hamiltonian) -> tuple[float, np.ndarray]:
    """Minimum eigenvalue and a unit-norm ground eigenvector.

    Dense self-adjoint diagonalization; ties in a degenerate ground space
    are broken by the eigensolver.  Raises :class:`SystemSizeError` above
    ``MAX_DENSE_QUBITS`` qubits.
    """
    matrix = dense_matrix(hamiltonian)
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    energy = float(eigenvalues[0])
    vector = np.ascontiguousarray(eigenvectors[:, 0])
    return energy, vector
