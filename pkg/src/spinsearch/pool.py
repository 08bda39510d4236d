"""Discrete operator pool and its token vocabulary.

The standard pool mirrors the Hamiltonian's Pauli structure: single-qubit Z
rotations on every site plus XX/YY/ZZ rotations on nearest-neighbor pairs,
each at the ten discrete angles {+-pi/2^k | k = 1..5}.  The enlarged
variant additionally offers X and Y single-qubit rotations and
next-nearest-neighbor (i, i+2) pairs.

Token id 0 is reserved for the BOS marker that seeds autoregressive
generation; it maps to no gate and never appears inside a circuit.  Ids
1..|V|-1 enumerate gates sorted by (template, qubits, angle), so two builds
from the same config produce identical vocabularies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

from .circuits import Gate

VARIANTS = ("standard", "enlarged")
DEFAULT_ANGLE_EXPONENTS = (1, 2, 3, 4, 5)

BOS_ID = 0


class TokenError(ValueError):
    """A token id has no gate (BOS or out of range)."""


@dataclass(frozen=True)
class PoolConfig:
    """Operator-pool parameters: system size, variant, discrete angle set."""

    n_qubits: int
    variant: str = "standard"
    angle_exponents: tuple[int, ...] = DEFAULT_ANGLE_EXPONENTS

    def __post_init__(self):
        if not isinstance(self.n_qubits, int) or self.n_qubits < 2:
            raise ValueError(f"n_qubits must be an int >= 2, got {self.n_qubits!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        exponents = tuple(int(k) for k in self.angle_exponents)
        object.__setattr__(self, "angle_exponents", exponents)
        if not exponents:
            raise ValueError("angle_exponents must not be empty")
        if any(k < 1 for k in exponents):
            raise ValueError(f"angle exponents must be >= 1, got {exponents}")


def pool_angles(exponents: tuple[int, ...] = DEFAULT_ANGLE_EXPONENTS) -> tuple[float, ...]:
    """The discrete angle set {+-pi/2^k} for the given exponents, ascending."""
    angles = set()
    for k in exponents:
        angles.add(math.pi / 2**k)
        angles.add(-math.pi / 2**k)
    return tuple(sorted(angles))


@dataclass(frozen=True)
class Vocabulary:
    """Dense bijection between token ids 1..|V|-1 and pool gates (id 0 = BOS)."""

    n_qubits: int
    gates: tuple[Gate, ...]
    _ids: dict[Gate, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = {gate: i + 1 for i, gate in enumerate(self.gates)}
        if len(ids) != len(self.gates):
            raise ValueError("vocabulary gates must be distinct")
        object.__setattr__(self, "_ids", ids)

    @property
    def size(self) -> int:
        """Token count including BOS."""
        return len(self.gates) + 1

    def token_to_gate(self, token_id: int) -> Gate:
        if token_id == BOS_ID:
            raise TokenError("BOS has no gate")
        if not 1 <= token_id < self.size:
            raise TokenError(f"token id {token_id} out of range 1..{self.size - 1}")
        return self.gates[token_id - 1]

    def gate_to_token(self, gate: Gate) -> int:
        try:
            return self._ids[gate]
        except KeyError:
            raise TokenError(f"gate {gate} is not in the vocabulary") from None

    def tokens_to_gates(self, token_ids) -> list[Gate]:
        return [self.token_to_gate(t) for t in token_ids]

    def format_table(self) -> str:
        """Text table (id, template, qubits, angle) for debugging and dumps."""
        lines = ["id\ttemplate\tqubits\tangle", f"{BOS_ID}\tBOS\t-\t-"]
        for i, gate in enumerate(self.gates):
            qubits = ",".join(str(q) for q in gate.qubits)
            lines.append(f"{i + 1}\t{gate.template}\t{qubits}\t{gate.angle!r}")
        return "\n".join(lines)


def _pool_placements(cfg: PoolConfig) -> Iterator[tuple[str, tuple[int, ...]]]:
    n = cfg.n_qubits
    singles = ("Z",) if cfg.variant == "standard" else ("X", "Y", "Z")
    for template in singles:
        for q in range(n):
            yield template, (q,)
    spans = (1,) if cfg.variant == "standard" else (1, 2)
    for template in ("XX", "YY", "ZZ"):
        for span in spans:
            for q in range(n - span):
                yield template, (q, q + span)


def build_vocabulary(cfg: PoolConfig) -> Vocabulary:
    """Enumerate the pool for ``cfg`` as an ordered, deterministic vocabulary."""
    angles = pool_angles(cfg.angle_exponents)
    gates = [
        Gate(template, qubits, angle)
        for template, qubits in _pool_placements(cfg)
        for angle in angles
    ]
    gates.sort(key=lambda g: (g.template, g.qubits, g.angle))
    return Vocabulary(cfg.n_qubits, tuple(gates))
