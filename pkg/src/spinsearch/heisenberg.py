"""One-dimensional Heisenberg chain with an external field.

Open-boundary chain of N qubits:

    H = J * sum_{n=0}^{N-2} (X_n X_{n+1} + Y_n Y_{n+1} + Z_n Z_{n+1})
        + h * sum_{n=0}^{N-1} Z_n

Site indices are 0-based.  For even N the ground energy is protected by
conservation of total S_z: it stays at its h=0 value until a level
crossing at a critical field, which :func:`critical_field_scan` plus
:func:`first_departure` locate numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sim import Hamiltonian, PauliString, SystemSizeError, dense_matrix, exact_ground_energy

MAX_SCAN_QUBITS = 12


@dataclass(frozen=True)
class HeisenbergSpec:
    """Chain parameters: exchange coupling J, field strength h, length N."""

    J: float
    h: float
    N: int

    def __post_init__(self):
        problems = []
        if not isinstance(self.N, int) or self.N < 2:
            problems.append(f"N must be an integer >= 2, got {self.N!r}")
        if not math.isfinite(self.J):
            problems.append(f"J must be finite, got {self.J!r}")
        if not math.isfinite(self.h):
            problems.append(f"h must be finite, got {self.h!r}")
        if problems:
            raise ValueError("invalid Heisenberg spec: " + "; ".join(problems))


def build_heisenberg(spec: HeisenbergSpec) -> Hamiltonian:
    """Build the open-boundary chain Hamiltonian for ``spec``.

    Always emits 3*(N-1) exchange terms followed by N field terms (4N-3
    total), even when J or h vanishes.
    """
    terms: list[tuple[float, PauliString]] = []
    for n in range(spec.N - 1):
        for axis in ("X", "Y", "Z"):
            terms.append((spec.J, PauliString({n: axis, n + 1: axis})))
    for n in range(spec.N):
        terms.append((spec.h, PauliString({n: "Z"})))
    return Hamiltonian(terms, spec.N)


def exchange_hamiltonian(N: int, J: float = 1.0) -> Hamiltonian:
    """Exchange part only: J * sum (XX + YY + ZZ) over nearest neighbors."""
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    terms = [
        (J, PauliString({n: axis, n + 1: axis}))
        for n in range(N - 1)
        for axis in ("X", "Y", "Z")
    ]
    return Hamiltonian(terms, N)


def total_sz(N: int) -> Hamiltonian:
    """Total magnetization operator (1/2) * sum_n Z_n."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return Hamiltonian([(0.5, PauliString({n: "Z"})) for n in range(N)], N)


def commutes_with_exchange(spec: HeisenbergSpec) -> bool:
    """True iff the exchange part commutes with total S_z (dense check).

    Builds dense matrices for both operators and tests that the max-abs
    entry of the commutator is below 1e-10.
    """
    if spec.N > MAX_SCAN_QUBITS:
        raise SystemSizeError(spec.N)
    exchange = dense_matrix(exchange_hamiltonian(spec.N, spec.J))
    sz = dense_matrix(total_sz(spec.N))
    commutator = exchange @ sz - sz @ exchange
    return bool(np.max(np.abs(commutator)) < 1e-10)


def critical_field_scan(
    J: float, N: int, h_grid: Sequence[float]
) -> list[tuple[float, float]]:
    """Exact ground energies across a grid of field strengths.

    Returns ``[(h, E0(J, h, N)), ...]`` in grid order.  Consumers locate
    the symmetry-breaking crossing with :func:`first_departure`.
    """
    if N % 2 != 0:
        raise ValueError(f"N must be even for the scan, got {N}")
    if N > MAX_SCAN_QUBITS:
        raise SystemSizeError(N)
    if any(h < 0 for h in h_grid):
        raise ValueError("all field strengths must be >= 0")
    rows = []
    for h in h_grid:
        energy, _ = exact_ground_energy(build_heisenberg(HeisenbergSpec(J, float(h), N)))
        rows.append((float(h), energy))
    return rows


def first_departure(
    rows: Sequence[tuple[float, float]],
    reference_energy: float,
    rel_tol: float = 1e-9,
) -> float | None:
    """First grid field where E0 departs from ``reference_energy``.

    Departure means ``|E0 - reference| > rel_tol * |reference|``.  Returns
    None when the whole grid stays on the reference level.
    """
    threshold = rel_tol * abs(reference_energy)
    for h, energy in rows:
        if abs(energy - reference_energy) > threshold:
            return h
    return None
