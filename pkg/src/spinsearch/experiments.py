"""Experiment configuration files and the runners behind the CLI.

Configs are flat JSON: one named key per hyperparameter, every key
optional with the reference default.  Validation collects every violation
before raising, so a bad file reports all of its problems at once.

All runners are deterministic under a fixed seed.  CSV outputs start with
a ``#`` metadata comment holding the fully resolved configuration, then a
header row; floats are written with full round-trip precision.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import torch

from .circuits import circuit_rotations
from .heisenberg import HeisenbergSpec, build_heisenberg
from .model import CircuitGenerator, ModelConfig, sample_circuits, save_checkpoint
from .pool import PoolConfig, build_vocabulary
from .refine import RefineConfig, postprocess_best_of
from .sim import exact_ground_energy, prefix_energies, zero_state
from .training import TrainConfig, select_and_average_best, train

CONFIG_DEFAULTS: dict = {
    "J": 10.0,
    "h": 10.0,
    "N": 4,
    "pool_variant": "standard",
    "angle_exponents": [1, 2, 3, 4, 5],
    "n_layers": 4,
    "n_heads": 4,
    "d_model": 128,
    "d_ff": 512,
    "max_seq_len": 16,
    "output_scale": 8.0,
    "table_scale": 16.0,
    "init_std": 0.2,
    "beta": 0.3,
    "circuits_per_epoch": 10,
    "circuit_length": 12,
    "temperature": 0.5,
    "lr": 4e-4,
    "weight_decay": 0.01,
    "epochs": 700,
    "checkpoint_every": 50,
    "n_best_checkpoints": 3,
    "eval_samples": 100,
    "seed": 0,
    "output_dir": None,
}

_INT_KEYS = {
    "N", "n_layers", "n_heads", "d_model", "d_ff", "max_seq_len",
    "circuits_per_epoch", "circuit_length", "epochs", "checkpoint_every",
    "n_best_checkpoints", "eval_samples", "seed",
}
_FLOAT_KEYS = {"J", "h", "beta", "temperature", "lr", "weight_decay",
               "output_scale", "table_scale", "init_std"}


class ConfigError(ValueError):
    """Invalid experiment config; the message lists every violated field."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class ExperimentConfig:
    """Cross-validated bundle of Hamiltonian, pool, model, and training configs."""

    hamiltonian: HeisenbergSpec
    pool: PoolConfig
    model: ModelConfig
    train: TrainConfig
    output_dir: Path | None = None

    def resolved(self) -> dict:
        """Flat dict of every key, suitable for metadata comments."""
        return {
            "J": self.hamiltonian.J,
            "h": self.hamiltonian.h,
            "N": self.hamiltonian.N,
            "pool_variant": self.pool.variant,
            "angle_exponents": list(self.pool.angle_exponents),
            "n_layers": self.model.n_layers,
            "n_heads": self.model.n_heads,
            "d_model": self.model.d_model,
            "d_ff": self.model.d_ff,
            "max_seq_len": self.model.max_seq_len,
            "output_scale": self.model.output_scale,
            "table_scale": self.model.table_scale,
            "init_std": self.model.init_std,
            "vocab_size": self.model.vocab_size,
            "beta": self.train.beta,
            "circuits_per_epoch": self.train.circuits_per_epoch,
            "circuit_length": self.train.circuit_length,
            "temperature": self.train.temperature,
            "lr": self.train.lr,
            "weight_decay": self.train.weight_decay,
            "epochs": self.train.epochs,
            "checkpoint_every": self.train.checkpoint_every,
            "n_best_checkpoints": self.train.n_best_checkpoints,
            "eval_samples": self.train.eval_samples,
            "seed": self.train.seed,
            "output_dir": str(self.output_dir) if self.output_dir else None,
        }

    def build_parts(self) -> tuple:
        """Instantiate (hamiltonian, vocabulary, model) for this config."""
        hamiltonian = build_heisenberg(self.hamiltonian)
        vocab = build_vocabulary(self.pool)
        model = CircuitGenerator(self.model)
        return hamiltonian, vocab, model


def config_from_dict(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a flat config dict and build an :class:`ExperimentConfig`.

    Unknown keys, wrong types, and out-of-range values are all collected
    and reported together in a single :class:`ConfigError`.
    """
    problems: list[str] = []
    merged = dict(CONFIG_DEFAULTS)
    for source in (raw, overrides or {}):
        for key, value in source.items():
            if key not in CONFIG_DEFAULTS:
                problems.append(f"unknown key {key!r}")
            else:
                merged[key] = value

    def _int(key: str) -> int | None:
        value = merged[key]
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{key}: must be an integer, got {value!r}")
            return None
        return value

    def _float(key: str) -> float | None:
        value = merged[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{key}: must be a number, got {value!r}")
            return None
        return float(value)

    values: dict = {}
    for key in _INT_KEYS:
        values[key] = _int(key)
    for key in _FLOAT_KEYS:
        values[key] = _float(key)
    if not isinstance(merged["pool_variant"], str):
        problems.append(f"pool_variant: must be a string, got {merged['pool_variant']!r}")
    if not isinstance(merged["angle_exponents"], (list, tuple)) or not all(
        isinstance(k, int) and not isinstance(k, bool) for k in merged["angle_exponents"]
    ):
        problems.append(
            f"angle_exponents: must be a list of integers, got {merged['angle_exponents']!r}"
        )
    output_dir = merged["output_dir"]
    if output_dir is not None and not isinstance(output_dir, (str, Path)):
        problems.append(f"output_dir: must be a path string, got {output_dir!r}")
    if problems:
        raise ConfigError(problems)

    def attempt(name: str, builder: Callable):
        try:
            return builder()
        except (ValueError, TypeError) as err:
            problems.append(f"{name}: {err}")
            return None

    spec = attempt("hamiltonian", lambda: HeisenbergSpec(values["J"], values["h"], values["N"]))
    pool = attempt("pool", lambda: PoolConfig(
        n_qubits=values["N"],
        variant=merged["pool_variant"],
        angle_exponents=tuple(merged["angle_exponents"]),
    ))
    train_cfg = attempt("train", lambda: TrainConfig(
        beta=values["beta"],
        circuits_per_epoch=values["circuits_per_epoch"],
        circuit_length=values["circuit_length"],
        temperature=values["temperature"],
        lr=values["lr"],
        weight_decay=values["weight_decay"],
        epochs=values["epochs"],
        checkpoint_every=values["checkpoint_every"],
        n_best_checkpoints=values["n_best_checkpoints"],
        eval_samples=values["eval_samples"],
        seed=values["seed"],
    ))
    model_cfg = None
    if pool is not None and train_cfg is not None:
        vocab_size = build_vocabulary(pool).size
        model_cfg = attempt("model", lambda: ModelConfig(
            vocab_size=vocab_size,
            n_layers=values["n_layers"],
            n_heads=values["n_heads"],
            d_model=values["d_model"],
            d_ff=values["d_ff"],
            max_seq_len=values["max_seq_len"],
            seed=values["seed"],
            output_scale=values["output_scale"],
            table_scale=values["table_scale"],
            init_std=values["init_std"],
        ))
        if model_cfg is not None and model_cfg.max_seq_len < train_cfg.circuit_length + 1:
            problems.append(
                f"max_seq_len: must be >= circuit_length + 1 "
                f"({train_cfg.circuit_length + 1}), got {model_cfg.max_seq_len}"
            )
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        hamiltonian=spec,
        pool=pool,
        model=model_cfg,
        train=train_cfg,
        output_dir=Path(output_dir) if output_dir else None,
    )


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError([f"config file is not valid JSON: {err}"]) from err
    if not isinstance(raw, dict):
        raise ConfigError(["config file must contain a JSON object"])
    return config_from_dict(raw, overrides)


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], meta: dict) -> None:
    """Write rows with a metadata comment line and full float precision."""
    lines = ["# config: " + json.dumps(meta, sort_keys=True)]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


@dataclass
class TrainOutputs:
    convergence_csv: Path
    checkpoint_paths: list[Path]
    final_model_path: Path
    records: list


def run_training(cfg: ExperimentConfig, output_dir: Path) -> TrainOutputs:
    """Full training pipeline: train, checkpoint, select-and-average, persist."""
    output_dir.mkdir(parents=True, exist_ok=True)
    hamiltonian, vocab, model = cfg.build_parts()
    result = train(model, hamiltonian, vocab, cfg.train, checkpoint_dir=output_dir / "checkpoints")

    rows = [
        (r.epoch, r.loss, r.min_energy, r.mean_energy, r.max_energy)
        for r in result.records
    ]
    convergence_csv = output_dir / "convergence.csv"
    write_csv(convergence_csv, ("epoch", "loss", "min_energy", "mean_energy", "max_energy"),
              rows, cfg.resolved())

    final_path = output_dir / "final_model.ckpt"
    if len(result.checkpoint_paths) >= cfg.train.n_best_checkpoints:
        final_model = select_and_average_best(
            result.checkpoint_paths, hamiltonian, vocab, cfg.train
        )
    else:
        # Too few checkpoints to rank (short runs): persist the end state.
        final_model = result.model
    save_checkpoint(final_model, final_path)
    return TrainOutputs(
        convergence_csv=convergence_csv,
        checkpoint_paths=result.checkpoint_paths,
        final_model_path=final_path,
        records=result.records,
    )


def run_scan(
    J: float,
    N: int,
    ratios: Sequence[float],
    n_samples: int,
    with_postprocess: bool,
    seed: int,
    refine_cfg: RefineConfig,
    model: CircuitGenerator | None = None,
    pool_variant: str = "standard",
    circuit_length: int = 12,
    temperature: float = 0.5,
    jobs: int = 1,
) -> list[tuple[float, float, float | None, float]]:
    """Energy comparison across field/coupling ratios.

    For each ratio r the Hamiltonian is Heisenberg(J, h=r*J, N).  Returns
    rows (ratio, best sampled energy, best post-processed energy or None,
    exact ground energy).  When ``model`` is None a fresh random-init
    generator (seeded per row) is used, which isolates the power of
    post-processing from training.
    """
    if not ratios:
        raise ValueError("ratio grid must not be empty")
    pool = PoolConfig(n_qubits=N, variant=pool_variant)
    vocab = build_vocabulary(pool)

    def one_row(index_ratio: tuple[int, float]):
        index, ratio = index_ratio
        spec = HeisenbergSpec(float(J), float(ratio) * float(J), N)
        hamiltonian = build_heisenberg(spec)
        exact, _ = exact_ground_energy(hamiltonian)
        row_model = model
        if row_model is None:
            row_model = CircuitGenerator(ModelConfig(vocab_size=vocab.size, seed=seed + index))
        sampler = torch.Generator().manual_seed(seed + 1009 * (index + 1))
        samples = sample_circuits(
            row_model, vocab, n_samples, circuit_length, temperature, sampler
        )
        initial = zero_state(N)
        best_sampled = min(
            prefix_energies(circuit_rotations(vocab.tokens_to_gates(s.token_ids)),
                            hamiltonian, initial)[-1]
            for s in samples
        )
        best_post = None
        if with_postprocess:
            post_gen = torch.Generator().manual_seed(seed + 2003 * (index + 1))
            _, best_post = postprocess_best_of(
                row_model, vocab, hamiltonian, n_samples, refine_cfg,
                length=circuit_length, temperature=temperature, generator=post_gen,
            )
        return (float(ratio), best_sampled, best_post, exact)

    items = list(enumerate(ratios))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            rows = list(pool_exec.map(one_row, items))
    else:
        rows = [one_row(item) for item in items]
    return rows


def run_gridsearch(
    base: ExperimentConfig,
    betas: Sequence[float],
    batch_sizes: Sequence[int],
    jobs: int = 1,
) -> list[tuple[float, int, float]]:
    """Train one model per (beta, circuits-per-epoch) cell.

    Returns rows (beta, circuits_per_epoch, best sampled energy over the
    whole run).  Cell seeds are derived from the base seed and the cell
    index so results do not depend on execution order.
    """
    if not betas or not batch_sizes:
        raise ValueError("grids must not be empty")
    cells = [(b, m) for b in betas for m in batch_sizes]

    def one_cell(index_cell: tuple[int, tuple[float, int]]):
        index, (beta, batch) = index_cell
        seed = base.train.seed + index
        cell_cfg = ExperimentConfig(
            hamiltonian=base.hamiltonian,
            pool=base.pool,
            model=replace(base.model, seed=seed),
            train=replace(base.train, beta=float(beta), circuits_per_epoch=int(batch), seed=seed),
        )
        hamiltonian, vocab, model = cell_cfg.build_parts()
        result = train(model, hamiltonian, vocab, cell_cfg.train)
        best = min(r.min_energy for r in result.records) if result.records else float("nan")
        return (float(beta), int(batch), best)

    items = list(enumerate(cells))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            rows = list(pool_exec.map(one_cell, items))
    else:
        rows = [one_cell(item) for item in items]
    return rows
