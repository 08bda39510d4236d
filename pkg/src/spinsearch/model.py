"""Decoder-only transformer over the gate vocabulary.

Architecture: learned token + position embeddings, pre-norm residual
blocks (causal self-attention, then a GELU MLP with d_ff = 4*d_model by
default), a final LayerNorm, and two zero-initialized output channels
summed into the logits: a scaled untied linear head and a scaled direct
(position, token) score table.

Sign convention, fixed project-wide: logits are trained toward circuit
energies, and lower energy is better, so sampling draws tokens with
probability proportional to softmax(-logit / temperature).  The BOS logit
is masked out during sampling so BOS is never emitted mid-sequence.

The output scales exist because logits must reach the energy range of the
target Hamiltonian (tens of units) while an adaptive-moment optimizer
displaces each parameter by at most ~lr per step; desk-scale runs last a
few hundred steps, so without amplification the logits could never span
their targets.  Both channels start at zero, making the first sampling
epoch exactly uniform over gates.

Weights are float64.  That keeps teacher-forced logit replay, checkpoint
round-trips, and finite-difference gradient checks exact to tight
tolerances on CPU; the models are small enough that the cost is
irrelevant.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

CHECKPOINT_MAGIC = b"SPINSRCH"
CHECKPOINT_VERSION = 1

DTYPE = torch.float64


class SequenceLengthError(ValueError):
    """Input sequence exceeds the model's maximum length."""


class CheckpointError(RuntimeError):
    """Base class for checkpoint file problems."""


class CorruptCheckpointError(CheckpointError):
    """Checkpoint file is truncated or otherwise unreadable."""


class CheckpointConfigError(CheckpointError):
    """Checkpoint config conflicts with what the caller expects."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and init-seed description of a generator model.

    ``output_scale`` multiplies the final linear projection and
    ``table_scale`` the (position, token) bias table; see the module
    docstring for why the logit channels are amplified.  ``init_std`` sets
    the init scale of embeddings and block weights: over short training
    budgets those act mostly as frozen random features, and generous
    initialization makes them informative.
    """

    vocab_size: int
    n_layers: int = 4
    n_heads: int = 4
    d_model: int = 128
    d_ff: int = 512
    max_seq_len: int = 16
    seed: int = 0
    output_scale: float = 8.0
    table_scale: float = 16.0
    init_std: float = 0.2

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if min(self.n_layers, self.n_heads, self.d_model, self.d_ff, self.max_seq_len) < 1:
            raise ValueError("all architecture dimensions must be positive")
        if self.output_scale <= 0 or self.table_scale <= 0:
            raise ValueError("output_scale and table_scale must be > 0")
        if self.init_std <= 0:
            raise ValueError(f"init_std must be > 0, got {self.init_std}")


class _Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.d_model // cfg.n_heads
        self.ln_attn = nn.LayerNorm(cfg.d_model, dtype=DTYPE)
        self.qkv = nn.Linear(cfg.d_model, 3 * cfg.d_model, dtype=DTYPE)
        self.attn_out = nn.Linear(cfg.d_model, cfg.d_model, dtype=DTYPE)
        self.ln_mlp = nn.LayerNorm(cfg.d_model, dtype=DTYPE)
        self.mlp_in = nn.Linear(cfg.d_model, cfg.d_ff, dtype=DTYPE)
        self.mlp_out = nn.Linear(cfg.d_ff, cfg.d_model, dtype=DTYPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, d_model = x.shape
        h = self.ln_attn(x)
        q, k, v = self.qkv(h).split(d_model, dim=2)
        shape = (batch, length, self.n_heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        causal = torch.triu(
            torch.full((length, length), float("-inf"), dtype=x.dtype), diagonal=1
        )
        att = torch.softmax(scores + causal, dim=-1)
        h = (att @ v).transpose(1, 2).reshape(batch, length, d_model)
        x = x + self.attn_out(h)
        x = x + self.mlp_out(F.gelu(self.mlp_in(self.ln_mlp(x))))
        return x


class CircuitGenerator(nn.Module):
    """Decoder-only transformer mapping token prefixes to next-token logits."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.d_model, dtype=DTYPE)
        self.position_embedding = nn.Embedding(config.max_seq_len, config.d_model, dtype=DTYPE)
        self.blocks = nn.ModuleList(_Block(config) for _ in range(config.n_layers))
        self.ln_final = nn.LayerNorm(config.d_model, dtype=DTYPE)
        self.head = nn.Linear(config.d_model, config.vocab_size, dtype=DTYPE)
        # Direct (position, token) score table.  Each cell only ever receives
        # gradient from its own occurrences, so it adapts at the optimizer's
        # full rate with no cross-token interference; untouched cells stay at
        # exactly zero, a neutral prior.  The attention stack supplies the
        # context-dependent correction on top.
        self.position_token_bias = nn.Parameter(
            torch.zeros(config.max_seq_len, config.vocab_size, dtype=DTYPE)
        )
        self._reset_parameters()

    def _reset_parameters(self):
        # Few-hundred-step training budgets barely move the feature
        # parameters (an adaptive-moment step displaces each by ~lr), so the
        # network behaves like a regressor on mostly-frozen random prefix
        # features; a generous init_std makes those features rich.  The head
        # starts at zero so initial logits vanish: the first sampling epoch
        # is exactly uniform over gates.
        gen = torch.Generator().manual_seed(self.config.seed)
        residual_scale = 1.0 / math.sqrt(2 * self.config.n_layers)
        with torch.no_grad():
            self.head.weight.zero_()
            self.head.bias.zero_()
            self.position_token_bias.zero_()
            for name, param in self.named_parameters():
                if name.startswith("head.") or name == "position_token_bias":
                    continue
                if "ln" in name:
                    if name.endswith("weight"):
                        param.fill_(1.0)
                    else:
                        param.zero_()
                elif name.endswith("bias"):
                    param.zero_()
                else:
                    std = self.config.init_std
                    if "attn_out" in name or "mlp_out" in name:
                        std *= residual_scale
                    param.normal_(0.0, std, generator=gen)

    @property
    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """Next-token logits for every position of a (batch of) prefix(es).

        ``tokens`` is int64, shape (length,) or (batch, length), BOS
        included at position 0.  Output has shape (..., length, vocab_size)
        and is causal: position t depends only on tokens 0..t.
        """
        squeeze = tokens.dim() == 1
        if squeeze:
            tokens = tokens.unsqueeze(0)
        length = tokens.shape[1]
        if length > self.config.max_seq_len:
            raise SequenceLengthError(
                f"sequence length {length} exceeds max_seq_len {self.config.max_seq_len}"
            )
        positions = torch.arange(length)
        x = self.token_embedding(tokens) + self.position_embedding(positions)
        for block in self.blocks:
            x = block(x)
        logits = self.config.output_scale * self.head(self.ln_final(x))
        logits = logits + self.config.table_scale * self.position_token_bias[:length]
        return logits.squeeze(0) if squeeze else logits


@dataclass
class SampledSequence:
    """One generated circuit: token ids plus the logits behind each choice.

    ``cumulative_logits[t]`` is the exact running sum of the chosen tokens'
    raw (pre-softmax) logits through step t.
    """

    token_ids: list[int]
    step_logits: list[float]
    cumulative_logits: list[float]


def sample_circuits(
    model: CircuitGenerator,
    vocab,
    n_circuits: int,
    length: int,
    temperature: float,
    generator: torch.Generator,
) -> list[SampledSequence]:
    """Autoregressively sample ``n_circuits`` gate sequences of ``length`` tokens.

    At each step, token probability is proportional to
    exp(-logit / temperature) over non-BOS tokens: low predicted energy
    means high probability.  The recorded per-step logits are the raw
    logits of the chosen tokens.
    """
    if n_circuits < 1 or length < 1:
        raise ValueError("n_circuits and length must be >= 1")
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if vocab.size != model.config.vocab_size:
        raise ValueError(
            f"vocabulary size {vocab.size} does not match model vocab_size "
            f"{model.config.vocab_size}"
        )
    tokens = torch.zeros((n_circuits, 1), dtype=torch.int64)
    chosen_logits = torch.zeros((n_circuits, length), dtype=DTYPE)
    with torch.no_grad():
        for step in range(length):
            logits = model(tokens)[:, -1, :]
            masked = logits.clone()
            masked[:, 0] = float("inf")
            probs = torch.softmax(-masked / temperature, dim=-1)
            next_ids = torch.multinomial(probs, num_samples=1, generator=generator)
            chosen_logits[:, step] = logits.gather(1, next_ids).squeeze(1)
            tokens = torch.cat([tokens, next_ids], dim=1)
    cumulative = torch.cumsum(chosen_logits, dim=1)
    return [
        SampledSequence(
            token_ids=tokens[i, 1:].tolist(),
            step_logits=chosen_logits[i].tolist(),
            cumulative_logits=cumulative[i].tolist(),
        )
        for i in range(n_circuits)
    ]


def cumulative_logits_batch(model: CircuitGenerator, sequences: torch.Tensor) -> torch.Tensor:
    """Teacher-forced cumulative logits for a batch of token sequences.

    ``sequences`` is int64 of shape (batch, T), BOS excluded.  Returns a
    differentiable (batch, T) tensor whose entry [i, t] is the sum over
    steps s <= t of the logit the model assigns to token s of sequence i
    given its prefix.
    """
    if sequences.dim() != 2:
        raise ValueError("sequences must be a 2-D (batch, T) tensor")
    if sequences.numel() and not (
        0 < int(sequences.min()) and int(sequences.max()) < model.config.vocab_size
    ):
        raise ValueError("token ids must lie in 1..vocab_size-1 (no BOS inside sequences)")
    batch, length = sequences.shape
    bos = torch.zeros((batch, 1), dtype=torch.int64)
    inputs = torch.cat([bos, sequences[:, :-1]], dim=1)
    logits = model(inputs)
    step_logits = logits.gather(2, sequences.unsqueeze(2)).squeeze(2)
    return torch.cumsum(step_logits, dim=1)


def cumulative_logits_for(model: CircuitGenerator, token_ids: Sequence[int]) -> torch.Tensor:
    """Cumulative logits l_1..l_T for one sequence (see :func:`cumulative_logits_batch`)."""
    if len(token_ids) < 1:
        raise ValueError("sequence must contain at least one token")
    ids = torch.as_tensor(list(token_ids), dtype=torch.int64).unsqueeze(0)
    return cumulative_logits_batch(model, ids).squeeze(0)


def average_checkpoints(models: Sequence[CircuitGenerator]) -> CircuitGenerator:
    """Elementwise mean of the parameters of models sharing one config."""
    if not models:
        raise ValueError("need at least one model to average")
    config = models[0].config
    for m in models[1:]:
        if m.config != config:
            raise CheckpointConfigError(
                f"cannot average models with different configs: {m.config} vs {config}"
            )
    averaged = CircuitGenerator(config)
    with torch.no_grad():
        state = averaged.state_dict()
        for name in state:
            stacked = torch.stack([m.state_dict()[name] for m in models])
            state[name] = stacked.mean(dim=0)
        averaged.load_state_dict(state)
    return averaged


def save_checkpoint(model: CircuitGenerator, path: str | Path) -> None:
    """Write config and named parameter tensors to a versioned binary file."""
    tensors = [(name, param.detach().cpu().numpy()) for name, param in model.state_dict().items()]
    header = {
        "config": asdict(model.config),
        "tensors": [
            {"name": name, "shape": list(array.shape), "dtype": str(array.dtype)}
            for name, array in tensors
        ],
    }
    header_bytes = json.dumps(header).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
    buf.write(header_bytes)
    for _, array in tensors:
        buf.write(np.ascontiguousarray(array).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, expected_vocab_size: int | None = None) -> CircuitGenerator:
    """Load a checkpoint written by :func:`save_checkpoint`.

    Raises :class:`CorruptCheckpointError` for truncated or malformed
    files, and :class:`CheckpointConfigError` when the stored vocab size
    disagrees with ``expected_vocab_size``.
    """
    data = Path(path).read_bytes()
    if len(data) < len(CHECKPOINT_MAGIC) + 8 or not data.startswith(CHECKPOINT_MAGIC):
        raise CorruptCheckpointError(f"{path}: not a checkpoint file (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<II", data, offset)
    offset += 8
    if version != CHECKPOINT_VERSION:
        raise CheckpointConfigError(
            f"{path}: unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )
    if len(data) < offset + header_len:
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
        config = ModelConfig(**header["config"])
        manifest = header["tensors"]
    except (ValueError, KeyError, TypeError) as err:
        raise CorruptCheckpointError(f"{path}: malformed header ({err})") from err
    offset += header_len
    if expected_vocab_size is not None and config.vocab_size != expected_vocab_size:
        raise CheckpointConfigError(
            f"{path}: checkpoint vocab_size {config.vocab_size} does not match "
            f"expected {expected_vocab_size}"
        )

    model = CircuitGenerator(config)
    state = model.state_dict()
    if [entry["name"] for entry in manifest] != list(state.keys()):
        raise CorruptCheckpointError(f"{path}: tensor manifest does not match architecture")
    loaded = {}
    for entry in manifest:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        if len(data) < offset + nbytes:
            raise CorruptCheckpointError(f"{path}: truncated tensor data for {entry['name']}")
        array = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
        loaded[entry["name"]] = torch.from_numpy(array.reshape(shape).copy())
        offset += nbytes
    for name, tensor in loaded.items():
        if tuple(tensor.shape) != tuple(state[name].shape):
            raise CorruptCheckpointError(
                f"{path}: tensor {name} has shape {tuple(tensor.shape)}, "
                f"expected {tuple(state[name].shape)}"
            )
    model.load_state_dict(loaded)
    return model
