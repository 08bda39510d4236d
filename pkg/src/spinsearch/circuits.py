"""Gate and circuit value types plus the on-disk circuit format.

A circuit is an ordered sequence of :class:`Gate` values.  The JSON file
format is::

    {
      "n_qubits": 4,
      "gates": [{"template": "XX", "qubits": [0, 1], "angle": 0.785...}, ...],
      "energy": -60.25          # optional
    }

Angles round-trip losslessly (Python's json emits shortest-repr floats,
which carry full double precision).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .sim import Hamiltonian, PauliString, Rotation, expectation, simulate, zero_state

TEMPLATES = ("X", "Y", "Z", "XX", "YY", "ZZ")


class CircuitFormatError(ValueError):
    """A circuit file violates the schema; the message names the field."""


@dataclass(frozen=True)
class Gate:
    """One Pauli rotation: template letters applied to ``qubits`` at ``angle``."""

    template: str
    qubits: tuple[int, ...]
    angle: float

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown gate template {self.template!r}")
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "angle", float(self.angle))
        if len(qubits) != len(self.template):
            raise ValueError(
                f"template {self.template!r} needs {len(self.template)} qubits, got {qubits}"
            )
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"gate qubits must be distinct, got {qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError(f"gate qubits must be non-negative, got {qubits}")
        if not math.isfinite(self.angle):
            raise ValueError(f"gate angle must be finite, got {self.angle!r}")

    def pauli(self) -> PauliString:
        return PauliString({q: axis for q, axis in zip(self.qubits, self.template)})

    def rotation(self) -> Rotation:
        return (self.pauli(), self.angle)

    def with_angle(self, angle: float) -> "Gate":
        return Gate(self.template, self.qubits, angle)

    def with_qubits(self, qubits: tuple[int, ...]) -> "Gate":
        return Gate(self.template, qubits, self.angle)


def circuit_rotations(gates: Sequence[Gate]) -> list[Rotation]:
    return [g.rotation() for g in gates]


def circuit_energy(gates: Sequence[Gate], hamiltonian: Hamiltonian) -> float:
    """Energy of the state the circuit prepares from |0...0>."""
    state = simulate(circuit_rotations(gates), zero_state(hamiltonian.n_qubits))
    return expectation(state, hamiltonian)


def circuit_to_dict(
    gates: Sequence[Gate], n_qubits: int, energy: float | None = None
) -> dict:
    doc = {
        "n_qubits": int(n_qubits),
        "gates": [
            {"template": g.template, "qubits": list(g.qubits), "angle": g.angle}
            for g in gates
        ],
    }
    if energy is not None:
        doc["energy"] = float(energy)
    return doc


def circuit_from_dict(doc: dict) -> tuple[int, list[Gate], float | None]:
    """Parse a circuit document, raising :class:`CircuitFormatError` on schema errors."""
    if not isinstance(doc, dict):
        raise CircuitFormatError("circuit document must be a JSON object")
    if "n_qubits" not in doc:
        raise CircuitFormatError("missing field 'n_qubits'")
    n_qubits = doc["n_qubits"]
    if not isinstance(n_qubits, int) or n_qubits < 1:
        raise CircuitFormatError(f"field 'n_qubits' must be a positive int, got {n_qubits!r}")
    if "gates" not in doc:
        raise CircuitFormatError("missing field 'gates'")
    raw_gates = doc["gates"]
    if not isinstance(raw_gates, list):
        raise CircuitFormatError("field 'gates' must be a list")
    gates = []
    for i, entry in enumerate(raw_gates):
        if not isinstance(entry, dict):
            raise CircuitFormatError(f"gates[{i}] must be an object")
        for field in ("template", "qubits", "angle"):
            if field not in entry:
                raise CircuitFormatError(f"gates[{i}] missing field '{field}'")
        if not isinstance(entry["qubits"], list):
            raise CircuitFormatError(f"gates[{i}].qubits must be a list")
        if not isinstance(entry["angle"], (int, float)) or isinstance(entry["angle"], bool):
            raise CircuitFormatError(f"gates[{i}].angle must be a number")
        try:
            gate = Gate(entry["template"], tuple(entry["qubits"]), float(entry["angle"]))
        except (ValueError, TypeError) as err:
            raise CircuitFormatError(f"gates[{i}]: {err}") from err
        if max(gate.qubits) >= n_qubits:
            raise CircuitFormatError(
                f"gates[{i}].qubits {list(gate.qubits)} exceed n_qubits={n_qubits}"
            )
        gates.append(gate)
    energy = doc.get("energy")
    if energy is not None and (not isinstance(energy, (int, float)) or isinstance(energy, bool)):
        raise CircuitFormatError("field 'energy' must be a number when present")
    return n_qubits, gates, None if energy is None else float(energy)


def save_circuit(
    path: str | Path, gates: Sequence[Gate], n_qubits: int, energy: float | None = None
) -> None:
    Path(path).write_text(json.dumps(circuit_to_dict(gates, n_qubits, energy), indent=2))


def load_circuit(path: str | Path) -> tuple[int, list[Gate], float | None]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise CircuitFormatError(f"not valid JSON: {err}") from err
    return circuit_from_dict(doc)
