"""Online training loop: sample, evaluate, weight, regress, checkpoint.

Each epoch samples a fresh batch of circuits from the model, measures the
exact energy of every gate prefix, and takes one AdamW step on the
sigmoid-weighted MSE between the model's cumulative logits and those
energies.  Energies act purely as regression targets: no gradient flows
through them or through the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .circuits import circuit_rotations
from .model import (
    CircuitGenerator,
    average_checkpoints,
    cumulative_logits_batch,
    load_checkpoint,
    sample_circuits,
    save_checkpoint,
)
from .pool import Vocabulary
from .sim import Hamiltonian, expectation, prefix_energies, zero_state

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults are the reference configuration."""

    beta: float = 0.3
    circuits_per_epoch: int = 10
    circuit_length: int = 12
    temperature: float = 0.5
    lr: float = 4e-4
    weight_decay: float = 0.01
    epochs: int = 700
    checkpoint_every: int = 50
    n_best_checkpoints: int = 3
    eval_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if min(self.circuits_per_epoch, self.circuit_length) < 1:
            raise ValueError("circuits_per_epoch and circuit_length must be >= 1")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.checkpoint_every < 1:
            raise ValueError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")


@dataclass
class EpochRecord:
    """Per-epoch training trace: loss plus final-energy statistics."""

    epoch: int
    loss: float
    energies_final: list[float]
    min_energy: float
    mean_energy: float
    max_energy: float
    sequences: list[list[int]]


@dataclass
class TrainResult:
    model: CircuitGenerator
    records: list[EpochRecord]
    checkpoint_paths: list[Path]


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending batch for diagnosis."""

    def __init__(self, epoch: int, loss: float, sequences: list[list[int]],
                 energies: list[list[float]]):
        self.epoch = epoch
        self.loss = loss
        self.sequences = sequences
        self.energies = energies
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}; "
            f"batch of {len(sequences)} sequences attached"
        )


def energy_weight(energy: float, beta: float) -> float:
    """Sigmoid weight 1/(1 + exp(beta*energy)); lower energy, higher weight.

    Saturates to exactly 0.0 / 1.0 when |beta*energy| > 700 to avoid
    float overflow in exp.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if not math.isfinite(energy):
        raise ValueError(f"energy must be finite, got {energy!r}")
    z = beta * energy
    if z > 700.0:
        return 0.0
    if z < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(z))


def weighted_mse_loss(
    cumulative_logits: Sequence[torch.Tensor],
    energies: Sequence[Sequence[float]],
    beta: float,
) -> torch.Tensor:
    """Energy-weighted MSE between cumulative logits and prefix energies.

    loss = (1/M) * sum_i w(E_final_i, beta) * sum_t (l_t_i - E_t_i)^2

    Weights come from each circuit's final energy and are constants in the
    autograd graph, as are the energies themselves; only the logits carry
    gradient.
    """
    if len(cumulative_logits) != len(energies):
        raise ValueError(
            f"got {len(cumulative_logits)} logit sequences but {len(energies)} energy sequences"
        )
    if not cumulative_logits:
        raise ValueError("batch must contain at least one circuit")
    total = None
    for i, (logits, circuit_energies) in enumerate(zip(cumulative_logits, energies)):
        if len(logits) != len(circuit_energies):
            raise ValueError(
                f"circuit {i}: {len(logits)} cumulative logits vs "
                f"{len(circuit_energies)} prefix energies"
            )
        targets = torch.as_tensor(list(circuit_energies), dtype=logits.dtype)
        weight = energy_weight(float(circuit_energies[-1]), beta)
        term = weight * torch.sum((logits - targets) ** 2)
        total = term if total is None else total + term
    return total / len(cumulative_logits)


def _batch_prefix_energies(
    sequences: list[list[int]],
    vocab: Vocabulary,
    hamiltonian: Hamiltonian,
) -> list[list[float]]:
    initial = zero_state(hamiltonian.n_qubits)
    out = []
    for ids in sequences:
        rotations = circuit_rotations(vocab.tokens_to_gates(ids))
        out.append(prefix_energies(rotations, hamiltonian, initial))
    return out


def train(
    model: CircuitGenerator,
    hamiltonian: Hamiltonian,
    vocab: Vocabulary,
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Run the online training loop and return the trained model and trace.

    Every epoch: sample ``circuits_per_epoch`` circuits of
    ``circuit_length`` gates at ``temperature``, measure all prefix
    energies from |0...0>, compute teacher-forced cumulative logits, take
    one AdamW step on the weighted MSE.  Checkpoints are written every
    ``checkpoint_every`` epochs when ``checkpoint_dir`` is given.  Fully
    deterministic for a fixed config (the sampler is seeded with
    ``cfg.seed``).
    """
    if vocab.n_qubits != hamiltonian.n_qubits:
        raise ValueError(
            f"vocabulary is for {vocab.n_qubits} qubits but Hamiltonian has "
            f"{hamiltonian.n_qubits}"
        )
    if vocab.size != model.config.vocab_size:
        raise ValueError(
            f"model vocab_size {model.config.vocab_size} does not match vocabulary "
            f"size {vocab.size}"
        )
    sampler = torch.Generator().manual_seed(cfg.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=cfg.lr,
        betas=ADAM_BETAS,
        eps=ADAM_EPS,
        weight_decay=cfg.weight_decay,
    )
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    records: list[EpochRecord] = []
    checkpoint_paths: list[Path] = []
    for epoch in range(1, cfg.epochs + 1):
        samples = sample_circuits(
            model, vocab, cfg.circuits_per_epoch, cfg.circuit_length,
            cfg.temperature, sampler,
        )
        sequences = [s.token_ids for s in samples]
        energies = _batch_prefix_energies(sequences, vocab, hamiltonian)

        ids = torch.as_tensor(sequences, dtype=torch.int64)
        cumulative = cumulative_logits_batch(model, ids)
        loss = weighted_mse_loss(list(cumulative), energies, cfg.beta)
        loss_value = float(loss.detach())
        if not math.isfinite(loss_value):
            raise TrainingDiverged(epoch, loss_value, sequences, energies)

        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        finals = [e[-1] for e in energies]
        records.append(EpochRecord(
            epoch=epoch,
            loss=loss_value,
            energies_final=finals,
            min_energy=min(finals),
            mean_energy=sum(finals) / len(finals),
            max_energy=max(finals),
            sequences=sequences,
        ))
        if checkpoint_dir is not None and epoch % cfg.checkpoint_every == 0:
            path = checkpoint_dir / f"epoch_{epoch:06d}.ckpt"
            save_checkpoint(model, path)
            checkpoint_paths.append(path)
    return TrainResult(model=model, records=records, checkpoint_paths=checkpoint_paths)


def rank_checkpoints(
    checkpoint_paths: Sequence[str | Path],
    hamiltonian: Hamiltonian,
    vocab: Vocabulary,
    cfg: TrainConfig,
) -> list[tuple[float, Path]]:
    """Score checkpoints by the minimum final energy of sampled circuits.

    Each checkpoint gets its own sampler seeded from ``cfg.seed`` so the
    ranking is deterministic and independent of evaluation order.
    """
    initial = zero_state(hamiltonian.n_qubits)
    scored = []
    for index, path in enumerate(checkpoint_paths):
        model = load_checkpoint(path, expected_vocab_size=vocab.size)
        sampler = torch.Generator().manual_seed(cfg.seed + 7919 * (index + 1))
        samples = sample_circuits(
            model, vocab, cfg.eval_samples, cfg.circuit_length, cfg.temperature, sampler
        )
        best = math.inf
        for s in samples:
            rotations = circuit_rotations(vocab.tokens_to_gates(s.token_ids))
            best = min(best, prefix_energies(rotations, hamiltonian, initial)[-1])
        scored.append((best, Path(path)))
    scored.sort(key=lambda pair: (pair[0], str(pair[1])))
    return scored


def select_and_average_best(
    checkpoint_paths: Sequence[str | Path],
    hamiltonian: Hamiltonian,
    vocab: Vocabulary,
    cfg: TrainConfig,
) -> CircuitGenerator:
    """Average the ``n_best_checkpoints`` checkpoints with the lowest sampled energy."""
    if len(checkpoint_paths) < cfg.n_best_checkpoints:
        raise ValueError(
            f"need at least {cfg.n_best_checkpoints} checkpoints, got {len(checkpoint_paths)}"
        )
    ranking = rank_checkpoints(checkpoint_paths, hamiltonian, vocab, cfg)
    best_paths = [path for _, path in ranking[:cfg.n_best_checkpoints]]
    models = [load_checkpoint(p, expected_vocab_size=vocab.size) for p in best_paths]
    return average_checkpoints(models)


@dataclass
class GateStatistics:
    """Histograms over sampled gates, keyed by (template, qubits)."""

    placement_counts: dict[tuple[str, tuple[int, ...]], int]
    angle_counts: dict[tuple[str, tuple[int, ...]], dict[float, int]]
    total: int = field(init=False)

    def __post_init__(self):
        self.total = sum(self.placement_counts.values())


def gate_statistics(
    model: CircuitGenerator,
    vocab: Vocabulary,
    n_samples: int,
    length: int,
    temperature: float,
    generator: torch.Generator | None = None,
) -> GateStatistics:
    """Count (template, qubits) placements and per-placement angles.

    Buckets cover the whole vocabulary, so unused placements report zero.
    Counts sum to ``n_samples * length``.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if generator is None:
        generator = torch.Generator().manual_seed(0)
    placements: dict[tuple[str, tuple[int, ...]], int] = {}
    angles: dict[tuple[str, tuple[int, ...]], dict[float, int]] = {}
    for gate in vocab.gates:
        key = (gate.template, gate.qubits)
        placements.setdefault(key, 0)
        angles.setdefault(key, {})[gate.angle] = 0
    samples = sample_circuits(model, vocab, n_samples, length, temperature, generator)
    for s in samples:
        for gate in vocab.tokens_to_gates(s.token_ids):
            key = (gate.template, gate.qubits)
            placements[key] += 1
            angles[key][gate.angle] += 1
    return GateStatistics(placement_counts=placements, angle_counts=angles)
