"""Command-line harness for running experiments at desk scale.

Subcommands: exact, train, postprocess, scan, gridsearch, stats.  All
commands are deterministic under ``--seed``; CSV outputs are plot-ready
and carry the resolved configuration in a leading comment line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from .circuits import CircuitFormatError, load_circuit, save_circuit
from .experiments import (
    ConfigError,
    load_config,
    run_gridsearch,
    run_scan,
    run_training,
    write_csv,
)
from .heisenberg import HeisenbergSpec, build_heisenberg
from .model import CircuitGenerator, load_checkpoint, sample_circuits
from .pool import PoolConfig, build_vocabulary
from .refine import (
    RefinableCircuit,
    RefineConfig,
    angle_refinement,
    evaluate_circuit,
    wire_swap_loop,
)
from .sim import exact_ground_energy
from .training import gate_statistics

PAPER_GRID_BETAS = (0.1, 0.3, 0.7, 1.0, 2.0)
PAPER_GRID_BATCHES = (10, 25, 40)


def _add_shared(parser: argparse.ArgumentParser, seed_default: int | None = 0) -> None:
    parser.add_argument("--seed", type=int, default=seed_default,
                        help="RNG seed" + (" (default 0)" if seed_default == 0
                                           else " (default: value from the config file)"))
    parser.add_argument("--jobs", type=int, default=1,
                        help="max parallel jobs for multi-row commands (default 1)")
    parser.add_argument("--output-dir", type=Path, default=Path("."),
                        help="directory for output files (default: cwd)")


def _spec_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--J", type=float, required=True, help="exchange coupling")
    parser.add_argument("--h", type=float, required=True, help="field strength")
    parser.add_argument("--N", type=int, required=True, help="chain length")


def cmd_exact(args: argparse.Namespace) -> int:
    spec = HeisenbergSpec(args.J, args.h, args.N)
    hamiltonian = build_heisenberg(spec)
    energy, vector = exact_ground_energy(hamiltonian)
    print(f"E0 = {energy:.6f}")
    args.output_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "J": spec.J,
        "h": spec.h,
        "N": spec.N,
        "ground_energy": energy,
        "n_terms": len(hamiltonian),
    }
    (args.output_dir / "ground_state.json").write_text(json.dumps(summary, indent=2))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    output_dir = args.output_dir if args.output_dir != Path(".") else (cfg.output_dir or Path("."))
    outputs = run_training(cfg, output_dir)
    best = min((r.min_energy for r in outputs.records), default=float("nan"))
    print(f"trained {len(outputs.records)} epochs; best sampled energy {best:.6f}")
    print(f"convergence: {outputs.convergence_csv}")
    print(f"final model: {outputs.final_model_path}")
    return 0


def _refine_config(args: argparse.Namespace) -> RefineConfig:
    return RefineConfig(method=args.method, max_iters=args.max_iters)


def cmd_postprocess(args: argparse.Namespace) -> int:
    spec = HeisenbergSpec(args.J, args.h, args.N)
    hamiltonian = build_heisenberg(spec)
    cfg = _refine_config(args)
    args.output_dir.mkdir(parents=True, exist_ok=True)

    if args.circuit is not None:
        n_qubits, gates, _ = load_circuit(args.circuit)
        if n_qubits != args.N:
            raise CircuitFormatError(
                f"circuit file is for {n_qubits} qubits but --N is {args.N}"
            )
        candidates = [gates]
    else:
        vocab = build_vocabulary(PoolConfig(n_qubits=args.N))
        model = load_checkpoint(args.model, expected_vocab_size=vocab.size)
        sampler = torch.Generator().manual_seed(args.seed)
        samples = sample_circuits(model, vocab, args.samples, args.length,
                                  args.temperature, sampler)
        candidates = [vocab.tokens_to_gates(s.token_ids) for s in samples]

    best = None
    for gates in candidates:
        base_energy = evaluate_circuit(gates, hamiltonian)
        refined = angle_refinement(RefinableCircuit(list(gates), base_energy), hamiltonian, cfg)
        swapped = wire_swap_loop(refined, hamiltonian, cfg)
        stages = (base_energy, refined.energy, swapped.energy)
        if best is None or swapped.energy < best[1].energy:
            best = (stages, swapped)
    stages, final = best

    rows = [("base", stages[0]), ("angle_refined", stages[1]), ("wire_swapped", stages[2])]
    meta = {"J": spec.J, "h": spec.h, "N": spec.N, "seed": args.seed,
            "method": args.method, "samples": args.samples if args.circuit is None else 1}
    write_csv(args.output_dir / "stages.csv", ("stage", "energy"), rows, meta)
    save_circuit(args.output_dir / "refined_circuit.json", final.gates, args.N, final.energy)
    for stage, energy in rows:
        print(f"{stage}: {energy:.6f}")
    return 0


def cmd_scan(args: argparse.Namespace) -> int:
    ratios = [float(r) for r in args.ratios.split(",") if r]
    model = None
    if args.model is not None:
        model = load_checkpoint(args.model)
    rows = run_scan(
        J=args.J,
        N=args.N,
        ratios=ratios,
        n_samples=args.samples,
        with_postprocess=not args.no_postprocess,
        seed=args.seed,
        refine_cfg=_refine_config(args),
        model=model,
        jobs=args.jobs,
    )
    out_rows = [
        (ratio, sampled, "" if post is None else post, exact)
        for ratio, sampled, post, exact in rows
    ]
    meta = {"J": args.J, "N": args.N, "samples": args.samples, "seed": args.seed,
            "postprocess": not args.no_postprocess, "model": str(args.model or "random-init")}
    args.output_dir.mkdir(parents=True, exist_ok=True)
    path = args.output_dir / "scan.csv"
    write_csv(path, ("h_over_J", "e_model", "e_postprocessed", "e_exact"), out_rows, meta)
    print(f"wrote {path}")
    return 0


def cmd_gridsearch(args: argparse.Namespace) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    base = load_config(args.config, overrides)
    betas = [float(b) for b in args.betas.split(",")] if args.betas else list(PAPER_GRID_BETAS)
    batches = [int(m) for m in args.batch_sizes.split(",")] if args.batch_sizes \
        else list(PAPER_GRID_BATCHES)
    rows = run_gridsearch(base, betas, batches, jobs=args.jobs)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    path = args.output_dir / "gridsearch.csv"
    write_csv(path, ("beta", "circuits_per_epoch", "best_energy"), rows, base.resolved())
    print(f"wrote {path}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.model)
    n_qubits = _infer_n_qubits(model, args)
    vocab = build_vocabulary(PoolConfig(n_qubits=n_qubits, variant=args.pool_variant))
    if vocab.size != model.config.vocab_size:
        raise ConfigError([
            f"model vocab_size {model.config.vocab_size} does not match the "
            f"{args.pool_variant} pool on {n_qubits} qubits ({vocab.size} tokens)"
        ])
    generator = torch.Generator().manual_seed(args.seed)
    stats = gate_statistics(model, vocab, args.samples, args.length,
                            args.temperature, generator)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    meta = {"model": str(args.model), "samples": args.samples, "length": args.length,
            "temperature": args.temperature, "seed": args.seed}
    pair_rows = [
        (template, "-".join(map(str, qubits)), count)
        for (template, qubits), count in sorted(stats.placement_counts.items())
    ]
    write_csv(args.output_dir / "gate_counts.csv",
              ("template", "qubits", "count"), pair_rows, meta)
    angle_rows = [
        (template, "-".join(map(str, qubits)), angle, count)
        for (template, qubits), hist in sorted(stats.angle_counts.items())
        for angle, count in sorted(hist.items())
    ]
    write_csv(args.output_dir / "angle_counts.csv",
              ("template", "qubits", "angle", "count"), angle_rows, meta)
    print(f"wrote {args.output_dir / 'gate_counts.csv'} and "
          f"{args.output_dir / 'angle_counts.csv'}")
    return 0


def _infer_n_qubits(model: CircuitGenerator, args: argparse.Namespace) -> int:
    if args.N is not None:
        return args.N
    # Invert the standard-pool size formula |V| = 1 + 10*(4N - 3).
    for n in range(2, 64):
        for variant in ("standard", "enlarged"):
            if build_vocabulary(PoolConfig(n_qubits=n, variant=variant)).size \
                    == model.config.vocab_size:
                if variant == args.pool_variant:
                    return n
    raise ConfigError([
        f"cannot infer qubit count from vocab_size {model.config.vocab_size}; pass --N"
    ])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinsearch",
        description="Generative circuit search for spin-chain ground states.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="exact ground energy by dense diagonalization")
    _spec_args(p)
    _add_shared(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("train", help="run the online training loop from a config file")
    p.add_argument("--config", type=Path, required=True, help="flat JSON config file")
    _add_shared(p, seed_default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("postprocess", help="angle refinement + greedy wire swaps")
    _spec_args(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", type=Path, help="checkpoint to sample circuits from")
    group.add_argument("--circuit", type=Path, help="circuit JSON file to refine")
    p.add_argument("--samples", type=int, default=20, help="circuits to sample (default 20)")
    p.add_argument("--length", type=int, default=12, help="gates per sampled circuit")
    p.add_argument("--temperature", type=float, default=0.5, help="sampling temperature")
    p.add_argument("--method", choices=("quasi-newton", "derivative-free"),
                   default="quasi-newton")
    p.add_argument("--max-iters", type=int, default=500)
    _add_shared(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("scan", help="compare model/postprocessed/exact energies over h/J")
    p.add_argument("--J", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--ratios", type=str, required=True,
                   help="comma-separated h/J values, e.g. 0.01,0.1,1,2")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--model", type=Path, default=None,
                   help="checkpoint to sample from (default: random-init model)")
    p.add_argument("--no-postprocess", action="store_true")
    p.add_argument("--method", choices=("quasi-newton", "derivative-free"),
                   default="quasi-newton")
    p.add_argument("--max-iters", type=int, default=500)
    _add_shared(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("gridsearch", help="train one model per (beta, batch) grid cell")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--betas", type=str, default=None,
                   help="comma-separated beta grid (default 0.1,0.3,0.7,1.0,2.0)")
    p.add_argument("--batch-sizes", type=str, default=None,
                   help="comma-separated circuits-per-epoch grid (default 10,25,40)")
    _add_shared(p, seed_default=None)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("stats", help="gate and angle histograms of sampled circuits")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--length", type=int, default=12)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--N", type=int, default=None, help="qubit count (inferred if omitted)")
    p.add_argument("--pool-variant", choices=("standard", "enlarged"), default="standard")
    _add_shared(p)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    # Single-threaded torch keeps outputs byte-identical across machines/invocations.
    torch.set_num_threads(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CircuitFormatError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
