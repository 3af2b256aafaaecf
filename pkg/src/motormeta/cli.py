"""Command-line pipeline: gen-data, train, eval, sweep, optimize, validate-pareto.

Every command is deterministic for fixed --seed and writes its artifacts plus a
manifest (checksums of every output) into --out-dir. Exit codes: 0 success,
2 configuration errors, 3 data errors, 4 numeric failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import artifacts
from .designspace import TopologyRegistry, default_registry
from .errors import ConfigError, DataError, NumericError
from .nsga2 import (
    Nsga2Config,
    build_machine_problem,
    decode_archive,
    evolve,
    latent_bounds_from_training,
    parse_objectives,
    select_representatives,
)
from .surrogate import OracleConfig, build_dataset, kpi_oracle, load_dataset, write_dataset
from .training import (
    TrainConfig,
    dataset_matrices,
    evaluate_kpis,
    evaluate_reconstruction,
    latent_sweep,
    train,
)
from .vae import VaeModel, model_for_registry


def _registry_from_args(args) -> TopologyRegistry:
    if args.config:
        return TopologyRegistry.from_config_file(args.config)
    return default_registry()


def _check_registry_override(args, registry: TopologyRegistry) -> None:
    """A --config given alongside a dataset must agree with the dataset's registry."""
    if args.config:
        override = TopologyRegistry.from_config_file(args.config)
        if override.content_hash() != registry.content_hash():
            raise DataError("--config topologies do not match the dataset's registry hash")


def _parse_float_list(text: str, expected: int, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from None
    if len(values) != expected:
        raise ConfigError(f"{flag} expects {expected} values, got {len(values)}")
    return values


def _parse_dims(text: str) -> list[int]:
    try:
        dims = [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--dims expects comma-separated integers, got {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise ConfigError("--dims entries must be positive")
    return dims


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_snapshot(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_gen_data(args) -> None:
    start = time.perf_counter()
    registry = _registry_from_args(args)
    counts: dict[str, int] = {}
    if args.counts:
        for part in args.counts.split(","):
            name, _, num = part.partition("=")
            try:
                counts[name] = int(num)
            except ValueError:
                raise ConfigError(f"--counts expects name=N entries, got {part!r}") from None
    else:
        counts = {"sv": args.sv, "dv": args.dv}
    for name in counts:
        registry.spec_by_name(name)  # raises ConfigError on unknown topology
    fractions = _parse_float_list(args.split, 3, "--split")
    noise = _parse_float_list(args.noise_std, 4, "--noise-std")
    cfg = OracleConfig(seed=args.seed, noise_std=noise, counts=counts)
    dataset = build_dataset(registry, cfg, fractions)
    out = _out_dir(args)
    paths = write_dataset(dataset, registry, out / "dataset.csv")
    artifacts.write_manifest(
        out, "gen-data", _config_snapshot(args), args.seed, [], paths,
        registry.content_hash(), time.perf_counter() - start,
    )
    print(f"wrote {len(dataset)} samples to {paths[0]}")


def cmd_train(args) -> None:
    start = time.perf_counter()
    dataset, registry = load_dataset(args.data)
    _check_registry_override(args, registry)
    model = model_for_registry(
        registry.n, registry.content_hash(), m=args.latent_dim, seed=args.seed,
        kl_weight=args.beta,
    )
    cfg = TrainConfig(
        epochs=args.epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        lr_start=args.lr,
        lr_floor=args.lr_floor,
        seed=args.seed,
    )
    trace = train(model, registry, dataset, cfg)
    out = _out_dir(args)
    outputs = [
        model.save(out / "model.json"),
        artifacts.write_trace_csv(out / "trace.csv", trace),
        artifacts.write_metrics_csv(
            out / "kpi_metrics_test.csv", evaluate_kpis(model, registry, dataset, "test")
        ),
    ]
    recon = evaluate_reconstruction(model, registry, dataset, "test")
    outputs.append(artifacts.write_metrics_csv(out / "recon_metrics_test.csv", recon.rows))
    artifacts.write_manifest(
        out, "train", _config_snapshot(args), args.seed, [args.data], outputs,
        registry.content_hash(), time.perf_counter() - start,
    )
    print(
        f"trained m={args.latent_dim}: best epoch {trace.best_epoch} "
        f"(val {trace.best_val_total:.5f}, stop: {trace.stopping_reason}), "
        f"topology-id recovery {recon.id_recovery_rate:.3f}"
    )


def _eval_split(args) -> str:
    if args.split not in ("train", "val", "test"):
        raise ConfigError(f"--split must be train, val or test, got {args.split!r}")
    return args.split


def cmd_eval(args) -> None:
    start = time.perf_counter()
    dataset, registry = load_dataset(args.data)
    _check_registry_override(args, registry)
    model = VaeModel.load(args.model, expected_registry_hash=registry.content_hash())
    split = _eval_split(args)
    out = _out_dir(args)
    recon = evaluate_reconstruction(model, registry, dataset, split)
    outputs = [
        artifacts.write_metrics_csv(
            out / f"kpi_metrics_{split}.csv", evaluate_kpis(model, registry, dataset, split)
        ),
        artifacts.write_metrics_csv(out / f"recon_metrics_{split}.csv", recon.rows),
    ]
    artifacts.write_manifest(
        out, "eval", _config_snapshot(args), args.seed, [args.data, args.model], outputs,
        registry.content_hash(), time.perf_counter() - start,
    )
    print(f"evaluated {split}: topology-id recovery {recon.id_recovery_rate:.3f}")


def cmd_sweep(args) -> None:
    start = time.perf_counter()
    dataset, registry = load_dataset(args.data)
    _check_registry_override(args, registry)
    dims = _parse_dims(args.dims)
    cfg = TrainConfig(
        epochs=args.epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        lr_start=args.lr,
        lr_floor=args.lr_floor,
        seed=args.seed,
    )
    cells, models = latent_sweep(registry, dataset, dims, cfg)
    out = _out_dir(args)
    outputs = [artifacts.write_sweep_csv(out / "sweep.csv", cells)]
    for m, model in sorted(models.items()):
        outputs.append(model.save(out / f"model_m{m}.json"))
    artifacts.write_manifest(
        out, "sweep", _config_snapshot(args), args.seed, [args.data], outputs,
        registry.content_hash(), time.perf_counter() - start,
    )
    failed = sorted({c.m for c in cells if c.error})
    print(f"sweep over m={dims} done" + (f" (failed cells at m={failed})" if failed else ""))


def cmd_optimize(args) -> None:
    start = time.perf_counter()
    dataset, registry = load_dataset(args.data)
    _check_registry_override(args, registry)
    model = VaeModel.load(args.model, expected_registry_hash=registry.content_hash())
    objectives = parse_objectives(args.objectives)
    p_train, _ = dataset_matrices(registry, dataset, "train")
    lower, upper = latent_bounds_from_training(model, p_train)
    problem = build_machine_problem(model, registry, objectives, lower, upper)
    cfg = Nsga2Config(population=args.pop, generations=args.gen, seed=args.seed)
    result = evolve(problem, cfg)
    designs = decode_archive(model, registry, result.archive_z)
    predicted = model.predict_kpis(result.archive_z) if len(designs) else np.zeros((0, 4))
    out = _out_dir(args)
    outputs = [
        artifacts.write_archive_csv(out / "pareto.csv", registry, designs, predicted, result.archive_f)
    ]
    meta = {
        "objectives": problem.objective_names,
        "population": cfg.population,
        "generations": cfg.generations,
        "seed": cfg.seed,
        "model_sha256": artifacts.sha256_file(args.model),
        "latent_lower": lower.tolist(),
        "latent_upper": upper.tolist(),
        "archive_size": len(designs),
        "history": result.history,
    }
    meta_path = out / "optimize_meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(meta_path)
    artifacts.write_manifest(
        out, "optimize", _config_snapshot(args), args.seed, [args.data, args.model], outputs,
        registry.content_hash(), time.perf_counter() - start,
    )
    print(f"archive of {len(designs)} designs -> {outputs[0]}")


def cmd_validate_pareto(args) -> None:
    start = time.perf_counter()
    dataset, registry = load_dataset(args.data)
    _check_registry_override(args, registry)
    designs, predicted, objectives = artifacts.read_archive_csv(args.archive, registry)
    picks = select_representatives(objectives)
    rows = []
    mres = []
    seen: set[int] = set()
    for label, idx in picks:
        if idx in seen:
            continue
        seen.add(idx)
        design = designs[idx]
        # ground truth is the noise-free oracle, whatever noise trained the model
        oracle_y = kpi_oracle(registry, design)
        spec = registry.spec(design.topology_id)
        for j, kpi in enumerate(("y1", "y2", "y3", "y4")):
            mre = abs(predicted[idx, j] - oracle_y[j]) / abs(oracle_y[j]) * 100.0
            mres.append(mre)
            rows.append(
                {
                    "design": label,
                    "topology": spec.name,
                    "kpi": kpi,
                    "oracle": float(oracle_y[j]),
                    "prediction": float(predicted[idx, j]),
                    "mre_pct": float(mre),
                }
            )
    out = _out_dir(args)
    outputs = [artifacts.write_validation_csv(out / "validation.csv", rows)]
    artifacts.write_manifest(
        out, "validate-pareto", _config_snapshot(args), args.seed, [args.archive, args.data],
        outputs, registry.content_hash(), time.perf_counter() - start,
    )
    print(f"validated {len(seen)} designs: mean MRE {float(np.mean(mres)):.2f}%")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed for this command")
    common.add_argument("--out-dir", default="out", help="directory for artifacts")
    common.add_argument("--config", default=None, help="topology config JSON (default: stock SV/DV)")
    common.add_argument(
        "--threads", type=int, default=1,
        help="reserved; execution is single-threaded and deterministic",
    )

    parser = argparse.ArgumentParser(
        prog="motormeta",
        description="Latent-space metamodeling and optimization for machine designs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="sample designs and label them with the oracle")
    p.add_argument("--sv", type=int, default=4000, help="single-V sample count")
    p.add_argument("--dv", type=int, default=4000, help="double-V sample count")
    p.add_argument("--counts", default=None, help="per-topology counts, e.g. sv=4000,dv=4000")
    p.add_argument("--split", default="0.9,0.05,0.05", help="train,val,test fractions")
    p.add_argument("--noise-std", default="0,0,0,0", help="per-KPI Gaussian noise std")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train the metamodel")
    p.add_argument("--data", required=True, help="dataset CSV from gen-data")
    p.add_argument("--latent-dim", type=int, default=19)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-floor", type=float, default=1e-4)
    p.add_argument("--beta", type=float, default=1.0, help="KL weight")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a trained model on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="train one model per latent dimension")
    p.add_argument("--data", required=True)
    p.add_argument("--dims", default="5,10,15,19,20")
    p.add_argument("--epochs", type=int, default=100, help="per-cell epoch cap")
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-floor", type=float, default=1e-4)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", parents=[common], help="NSGA-II optimization in latent space")
    p.add_argument("--data", required=True, help="dataset CSV (latent bounds come from its train split)")
    p.add_argument("--model", required=True)
    p.add_argument("--objectives", default="max:y2,min:y4")
    p.add_argument("--pop", type=int, default=200)
    p.add_argument("--gen", type=int, default=100)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser(
        "validate-pareto", parents=[common],
        help="re-evaluate representative archive designs against the oracle",
    )
    p.add_argument("--archive", required=True, help="pareto.csv from optimize")
    p.add_argument("--data", required=True, help="dataset CSV providing oracle config and registry")
    p.set_defaults(func=cmd_validate_pareto)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
