"""
Command line entry point: simulate, generate, train, eval and audit.

Exit codes are 0 on success, 1 when a run or feasibility check fails and
2 for configuration and usage errors.
"""

import argparse
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config_loader import RunConfig, load_run_config
from .dataset import Dataset, export_csv, generate_dataset, load_dataset, save_dataset, split_by_trajectory
from .decorators import log_duration
from .evaluation import evaluate_split, export_sv_histogram, export_vector_field
from .exceptions import ConfigError, ConnsError, FormatError, UsageError
from .integrator import check_newton_contraction, simulate, write_trajectory
from .linalg import max_singular_value
from .logging_config import setup_logger
from .models import FixedPointConfig, ProjectionSpec, TrajectoryOverlay
from .network import NetworkParams, load_model, max_singular_values, save_model
from .projection import constrained_init, layer_change_report, verify_network
from .render import render
from .systems.registry import dump_system_file
from .training import train

logger = setup_logger()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

MODEL_LABELS = {"unconstrained": "Unconstrained", "constrained": "Constrained"}


def thread_count(requested: Optional[int]) -> int:
    """--threads, then CONNS_THREADS, then 1."""
    if requested is not None:
        value = requested
    else:
        raw = os.environ.get("CONNS_THREADS", "1")
        try:
            value = int(raw)
        except ValueError as e:
            raise ConfigError(f"CONNS_THREADS must be an integer, got '{raw}'") from e
    if value < 1:
        raise ConfigError(f"Thread count must be >= 1, got {value}")
    return value


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise UsageError(f"{what} not found at {path}")
    return path


def _write_json(path: Path, data: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)


def _report_path(checkpoint: Path) -> Path:
    return checkpoint.with_name(checkpoint.stem + "_report.json")


@log_duration(logger, "simulate")
def cmd_simulate(config: RunConfig, workers: int = 1, check_contraction: bool = False) -> List[Path]:
    """Newton reference trajectories from the test distribution, one CSV per trajectory."""
    system = config.make_system()
    sampler = config.sampler(system, "test")
    newton = config.newton_config()
    dt, t_end = config.integration["dt"], config.integration["t_end"]
    out_dir = config.output_path(config.data["trajectories_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_system_file(system, out_dir / "system.json")

    initial_conditions = [sampler.for_trajectory(i).sample() for i in range(config.data["test_trajectories"])]
    if check_contraction:
        for i, x0 in enumerate(initial_conditions):
            estimate = check_newton_contraction(system, x0, dt, [system.rhs(x0)])
            logger.info("Simulate: Newton map contraction estimate at trajectory %s start: %.4f", i, estimate)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        records = list(executor.map(lambda x0: simulate(system, x0, dt, t_end, newton), initial_conditions))

    paths = []
    for i, record in enumerate(records):
        path = out_dir / f"trajectory_{i:03d}.csv"
        write_trajectory(record, path)
        paths.append(path)
    logger.info("Simulate: wrote %s trajectories of %s to %s", len(paths), system.name, out_dir)
    return paths


@log_duration(logger, "generate")
def cmd_generate(config: RunConfig, workers: int = 1, csv: bool = False) -> Tuple[Path, Path]:
    """Harvest Newton pairs into train and test dataset files."""
    system = config.make_system()
    newton = config.newton_config()
    data = config.data
    dt, t_end = config.integration["dt"], config.integration["t_end"]
    include = bool(data["include_fixed_point_pairs"])

    if data.get("test_fraction"):
        full = generate_dataset(
            system, config.sampler(system, "train"), data["train_trajectories"], dt, t_end, newton, include, workers
        )
        train_ds, test_ds = split_by_trajectory(full, data["test_fraction"], seed=data["seed"])
    else:
        train_ds = generate_dataset(
            system, config.sampler(system, "train"), data["train_trajectories"], dt, t_end, newton, include, workers
        )
        test_ds = generate_dataset(
            system, config.sampler(system, "test"), data["test_trajectories"], dt, t_end, newton, include, workers
        )

    train_path = config.output_path(data["train_path"])
    test_path = config.output_path(data["test_path"])
    for ds, path in ((train_ds, train_path), (test_ds, test_path)):
        save_dataset(ds, path)
        if csv:
            export_csv(ds, path.with_suffix(".csv"))
        logger.info("Generate: %s samples from %s trajectories -> %s", len(ds), len(ds.initial_conditions()), path)
    return train_path, test_path


def _load_dataset(config: RunConfig, key: str) -> Dataset:
    return load_dataset(_require(config.output_path(config.data[key]), "Dataset"))


def _checkpoint_path(config: RunConfig, mode: str) -> Path:
    return config.output_path(config.train[f"{mode}_path"])


@log_duration(logger, "train")
def cmd_train(
    config: RunConfig, mode: str, cold: bool = False, loss_target: Optional[float] = None, workers: int = 1
) -> Path:
    """
    Train one model and write its checkpoint and report.

    The constrained model starts from the data-aware projection of the
    unconstrained checkpoint unless ``cold`` is set, in which case it starts
    from a fresh initialization projected onto the constraint set.
    """
    if mode not in MODEL_LABELS:
        raise UsageError(f"Unknown training mode '{mode}'")
    ds = _load_dataset(config, "train_path")
    arch = config.architecture()
    cfg = config.training_config(constrained=mode == "constrained", loss_target=loss_target)
    target = _checkpoint_path(config, mode)

    init: Optional[NetworkParams] = None
    if mode == "constrained" and not cold:
        source = _require(_checkpoint_path(config, "unconstrained"), "Unconstrained checkpoint (train it first or pass --cold)")
        unconstrained = load_model(source)
        if unconstrained.n != ds.n:
            raise UsageError(f"Unconstrained checkpoint has n={unconstrained.n}, dataset has n={ds.n}")
        qr = config.train["qr_init"]
        init = constrained_init(
            unconstrained,
            ds,
            config.projection_spec(),
            max_columns=qr["max_columns"],
            full=qr["full"],
            seed=config.train["seed"],
            workers=workers,
        )
        render(layer_change_report(unconstrained, init), target.with_name(target.stem + "_init_projection"))

    p, report = train(ds, arch, cfg, init=init)
    save_model(p, target)
    _write_json(_report_path(target), report.to_dict())
    logger.info(
        "Train: %s model after %s epochs, final loss %.6e (%s) -> %s",
        mode,
        len(report.loss_history),
        report.loss_history[-1],
        report.stopped_reason,
        target,
    )
    return target


def _load_models(config: RunConfig) -> Dict[str, Tuple[NetworkParams, FixedPointConfig]]:
    models = {}
    for mode, label in MODEL_LABELS.items():
        path = _checkpoint_path(config, mode)
        if path.is_file():
            models[label] = (load_model(path), config.fixed_point_config(mode))
        else:
            logger.warning("Eval: no %s checkpoint at %s", mode, path)
    if not models:
        raise UsageError("No checkpoints to evaluate, run the train command first")
    return models


@log_duration(logger, "eval")
def cmd_eval(config: RunConfig, workers: int = 1) -> List[Path]:
    """Metrics against the Newton reference on both splits, plus overlays, vector fields and spectra."""
    system = config.make_system()
    newton = config.newton_config()
    dt, t_end = config.integration["dt"], config.integration["t_end"]
    models = _load_models(config)
    results = config.output_path(config.eval["results_dir"])

    tables, written = [], []
    for split, key in (("Training", "train_path"), ("Test", "test_path")):
        ds = _load_dataset(config, key)
        if ds.system_name != system.name or ds.dt != dt:
            raise UsageError(f"Dataset {key} was generated for {ds.system_name} at dt={ds.dt}")
        initial_conditions = list(ds.initial_conditions().values())
        if not initial_conditions:
            raise UsageError(f"Dataset {key} does not record its initial conditions")
        result = evaluate_split(system, initial_conditions, dt, t_end, newton, models, split, workers)
        tables.extend(result.tables)
        for label, count in result.diverged.items():
            if count:
                logger.warning("Eval: %s diverged on %s of %s %s trajectories", label, count, len(initial_conditions), split)
        overlay = TrajectoryOverlay(series=result.overlay, state_names=system.state_names, title=f"{system.name} ({split})")
        written += render(overlay, results / f"overlay_{split.lower()}")

    written += render(tables, results / "metrics")

    vector_field = config.eval["vector_field"]
    anchor = vector_field.get("anchor")
    anchor = config.sampler(system).base if anchor is None else np.asarray(anchor, dtype=float)
    for label, (p, fp_cfg) in models.items():
        grid = export_vector_field(p, anchor, tuple(vector_field["axes"]), config.grid_spec(), fp_cfg)
        written += render(grid, results / f"vector_field_{label.lower()}", arrow_scale=vector_field["arrow_scale"])
        spectra = export_sv_histogram(p, title=label)
        written += render(spectra, results / f"singular_values_{label.lower()}", bins=config.eval["histogram_bins"])

    logger.info("Eval: wrote %s files to %s", len(written), results)
    return written


def audit_checkpoint(p: NetworkParams) -> Tuple[Dict[str, float], bool]:
    """Largest singular value of W1..Wh and U, and whether a constrained checkpoint is feasible."""
    sigmas = {**max_singular_values(p), "U": max_singular_value(p.U)}
    if not p.meta.constrained:
        return sigmas, True
    spec = ProjectionSpec(mode=p.meta.projection_mode, eps=p.meta.eps_proj)
    return sigmas, all(report.feasible for report in verify_network(p, spec).values())


@log_duration(logger, "audit")
def cmd_audit(paths: Sequence[Path]) -> bool:
    """Print the singular-value audit of each checkpoint; False if any constrained one is infeasible."""
    ok = True
    for path in paths:
        p = load_model(_require(Path(path), "Checkpoint"))
        sigmas, feasible = audit_checkpoint(p)
        tag = f"{p.meta.projection_mode} eps={p.meta.eps_proj}" if p.meta.constrained else "unconstrained"
        print(f"{path} ({tag})")
        for name, sigma in sigmas.items():
            note = " (not constrained)" if name == "U" else ""
            print(f"  {name:>4}: sigma_max = {sigma:.10f}{note}")
        if p.meta.constrained:
            print(f"  verdict: {'feasible' if feasible else 'INFEASIBLE'}")
        ok = ok and feasible
    return ok


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conns", description="Contraction-constrained Newton surrogate toolkit")
    parser.add_argument("--config", type=Path, help="Run config (YAML or JSON) merged over the defaults")
    parser.add_argument("--seed", type=int, help="Override data.seed and train.seed")
    parser.add_argument("--out", type=Path, help="Override out_dir")
    parser.add_argument("--threads", type=int, help="Worker threads (default: CONNS_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate_parser = sub.add_parser("simulate", help="Write Newton reference trajectories")
    simulate_parser.add_argument(
        "--check-contraction", action="store_true", help="Log the Newton map contraction estimate at each start state"
    )

    generate_parser = sub.add_parser("generate", help="Generate train and test datasets")
    generate_parser.add_argument("--csv", action="store_true", help="Also export the datasets as CSV")

    train_parser = sub.add_parser("train", help="Train a model")
    train_parser.add_argument("--mode", choices=sorted(MODEL_LABELS), default="unconstrained")
    train_parser.add_argument("--cold", action="store_true", help="Constrained mode without the QR warm start")
    train_parser.add_argument("--loss-target", type=float, help="Stop once the loss reaches this value")

    sub.add_parser("eval", help="Evaluate the trained models against Newton")

    audit_parser = sub.add_parser("audit", help="Singular-value audit of checkpoints")
    audit_parser.add_argument("checkpoints", nargs="*", type=Path, help="Checkpoint files (default: configured paths)")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {args.seed}")
        overrides["data"] = {"seed": args.seed}
        overrides["train"] = {"seed": args.seed}
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main function to parse arguments and run one command
    """
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config, _overrides(args))
        workers = thread_count(args.threads)

        if args.command == "simulate":
            cmd_simulate(config, workers, check_contraction=args.check_contraction)
        elif args.command == "generate":
            cmd_generate(config, workers, csv=args.csv)
        elif args.command == "train":
            cmd_train(config, args.mode, cold=args.cold, loss_target=args.loss_target, workers=workers)
        elif args.command == "eval":
            cmd_eval(config, workers)
        elif args.command == "audit":
            paths = args.checkpoints or [
                path for path in (_checkpoint_path(config, mode) for mode in MODEL_LABELS) if path.is_file()
            ]
            if not paths:
                raise UsageError("No checkpoints to audit")
            if not cmd_audit(paths):
                logger.error("Audit: a constrained checkpoint violates its constraint set")
                return EXIT_FAILURE
    except (ConfigError, UsageError, FormatError) as e:
        logger.error("%s: %s", args.command, e, exc_info=True)
        return EXIT_USAGE
    except ConnsError as e:
        logger.error("%s: %s", args.command, e, exc_info=True)
        return EXIT_FAILURE
    return EXIT_OK
