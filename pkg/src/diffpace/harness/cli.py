"""Command-line interface.

Subcommands: gen-dataset, train, estimate, benchmark, sweep, gridsearch,
report.  Every subcommand is deterministic given the config and master seed;
outputs land in the configured output directory and are never overwritten
without --force.  Exit codes: 0 success, 2 config error, 3 missing artifact,
4 numerical failure.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .. import seeds
from ..channel import hpsm_channel, sample_scenario, to_beamspace
from ..checkpoint import load_checkpoint, save_checkpoint
from ..datasets import ChannelDataset, load_dataset, save_dataset, train_test_split
from ..errors import ConfigError, DiffpaceError, MissingArtifactError, NumericalError
from ..geometry import subarray_codebooks
from ..measurement import nmse
from ..network import ArchDescriptor
from ..solver import SolverConfig, diffpace_estimate
from ..training import TrainConfig, train
from .config import ExperimentConfig, default_config, load_config
from .results import (SCHEMA_VERSION_LINE, ResultRow, format_float, write_manifest,
                      write_rows, write_summary)
from . import runs

LOSSES_VERSION_LINE = "#diffpace-losses-v1"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffpace",
        description="Channel-estimation lab: dataset generation, denoiser "
                    "training, estimation benchmarks, and reports.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="experiment config file (defaults: desk preset)")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out", type=Path, default=None, help="override the output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--verbose", action="store_true", help="chatty progress output")
    common.add_argument("--threads", type=int, default=None, help="torch CPU threads")

    sub.add_parser("gen-dataset", parents=[common], help="synthesise a channel dataset")
    sub.add_parser("train", parents=[common], help="train the diffusion denoiser")
    sub.add_parser("estimate", parents=[common], help="estimate one test channel")
    sub.add_parser("benchmark", parents=[common],
                   help="methods x SNR grid x trials -> results CSV")
    sweep = sub.add_parser("sweep", parents=[common], help="parameter sweeps")
    sweep.add_argument("--kind", choices=("snr", "steps", "alpha", "shift"),
                       default="snr")
    sub.add_parser("gridsearch", parents=[common],
                   help="exhaustive (lambda, beta) search per SNR")
    report = sub.add_parser("report", parents=[common],
                            help="render figures from result CSVs")
    report.add_argument("csv", nargs="+", type=Path, help="result or losses CSV files")
    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config is not None else default_config()
    run = cfg.run
    if args.seed is not None:
        run = replace(run, master_seed=args.seed)
    if args.out is not None:
        run = replace(run, out_dir=str(args.out))
    return replace(cfg, run=run)


def _guard_outputs(force: bool, *paths: Path) -> None:
    if force:
        return
    existing = [str(p) for p in paths if p.exists()]
    if existing:
        raise ConfigError(f"refusing to overwrite {existing} (use --force)")


def _load_splits(cfg: ExperimentConfig):
    dataset = load_dataset(cfg.resolve(cfg.dataset.file))
    split_seed = seeds.seed_for(cfg.run.master_seed, seeds.SPLIT)
    return dataset, *train_test_split(dataset, cfg.dataset.train_fraction, split_seed)


def _maybe_model(cfg: ExperimentConfig):
    if "diffpace" in cfg.methods.names:
        return load_checkpoint(cfg.resolve(cfg.train.checkpoint))
    return None


def cmd_gen_dataset(cfg: ExperimentConfig, args) -> None:
    out = cfg.resolve(cfg.dataset.file)
    _guard_outputs(args.force, out)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    codebooks = subarray_codebooks(cfg.array)
    n = cfg.dataset.samples
    samples = np.empty((n, cfg.array.n_r, cfg.array.n_t), dtype=np.complex128)
    for j in range(n):
        rng = seeds.rng_for(cfg.run.master_seed, seeds.DATASET, j)
        paths = sample_scenario(rng, cfg.scenario, cfg.array)
        samples[j] = to_beamspace(hpsm_channel(paths, cfg.array), codebooks)
        if args.verbose and (j + 1) % 512 == 0:
            print(f"generated {j + 1}/{n} samples")
    save_dataset(out, ChannelDataset(array=cfg.array, scenario=cfg.scenario,
                                     master_seed=cfg.run.master_seed, samples=samples))
    write_manifest(cfg.out_dir / "gen-dataset.manifest", "gen-dataset", args.config,
                   cfg.run.master_seed, {"samples": n, "file": out.name})
    print(f"wrote {out} ({n} samples)")


def cmd_train(cfg: ExperimentConfig, args) -> None:
    ckpt = cfg.resolve(cfg.train.checkpoint)
    losses = cfg.out_dir / "train_losses.csv"
    _guard_outputs(args.force, ckpt, losses)
    _, train_samples, test_samples = _load_splits(cfg)
    arch = ArchDescriptor(
        grid_shape=(cfg.array.n_r, cfg.array.n_t),
        hidden=cfg.train.hidden, kernel=cfg.train.kernel,
        embed_dim=cfg.train.embed_dim, pe_dim=cfg.train.pe_dim)
    tcfg = TrainConfig(
        epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
        learning_rate=cfg.train.learning_rate, ema_rate=cfg.train.ema_rate,
        noise_levels=cfg.train.noise_levels, sigma_min=cfg.train.sigma_min,
        sigma_max=cfg.train.sigma_max, seed=cfg.run.master_seed)
    model, history = train(train_samples, tcfg, arch=arch,
                           validation=test_samples, verbose=args.verbose)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, model)
    with open(losses, "w", encoding="utf-8", newline="\n") as f:
        f.write(LOSSES_VERSION_LINE + "\n")
        f.write("epoch,train_loss,test_loss\n")
        for log in history:
            f.write(f"{log.epoch},{format_float(log.train_loss)},"
                    f"{format_float(log.test_loss)}\n")
    write_manifest(cfg.out_dir / "train.manifest", "train", args.config,
                   cfg.run.master_seed,
                   {"checkpoint": ckpt.name, "epochs": cfg.train.epochs,
                    "best_epoch": model.epoch,
                    "parameters": model.parameter_count})
    print(f"wrote {ckpt} (best epoch {model.epoch}, "
          f"{model.parameter_count} parameters)")


def cmd_estimate(cfg: ExperimentConfig, args) -> None:
    out_csv = cfg.out_dir / "estimate.csv"
    _guard_outputs(args.force, out_csv)
    _, train_samples, test_samples = _load_splits(cfg)
    model = _maybe_model(cfg)
    ctx = runs.build_context(cfg, train_samples, test_samples, model=model)
    idx = cfg.estimate.sample_index
    if not 0 <= idx < len(test_samples):
        raise ConfigError(f"[estimate] sample_index {idx} outside the test split "
                          f"(0..{len(test_samples) - 1})")
    snr_db = cfg.estimate.snr_db
    h_true, m, gram = runs._trial_measurement(ctx, cfg.pilot, snr_db, 9, 0, idx)
    rows = []
    for name in cfg.methods.names:
        solver_seed = seeds.seed_for(cfg.run.master_seed, seeds.SOLVER_INIT, 9, 0, idx)
        if name in runs.SOLVER_METHODS and args.verbose:
            source = ctx.oracle_source if name == "diffpace-oracle" else ctx.trained_source
            scfg = SolverConfig(n_steps=cfg.solver.steps, lam=cfg.solver.lam,
                                beta=cfg.solver.beta,
                                schedule=runs._solver_schedule(ctx, name, cfg.solver.steps),
                                seed=solver_seed)
            h_est, diag = diffpace_estimate(source, m, scfg, gram=gram)
            diag_path = cfg.out_dir / f"estimate_steps_{name}.csv"
            with open(diag_path, "w", encoding="utf-8", newline="\n") as f:
                diag.write_csv(f)
            print(f"wrote {diag_path}")
        else:
            h_est = runs.run_method(name, ctx, m, gram, cfg.solver.steps,
                                    cfg.solver.lam, cfg.solver.beta, solver_seed)
        value = nmse(h_true, h_est)
        rows.append(ResultRow(method=name, snr_db=snr_db, alpha=cfg.pilot_alpha,
                              K=cfg.solver.steps, trial=idx, nmse_db=value,
                              wall_ms=0.0, seed=solver_seed))
        print(f"{name:16s} NMSE {value:8.2f} dB at SNR {snr_db:g} dB")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_rows(out_csv, rows)


def _context_for_run(cfg: ExperimentConfig):
    _, train_samples, test_samples = _load_splits(cfg)
    return runs.build_context(cfg, train_samples, test_samples, model=_maybe_model(cfg))


def cmd_benchmark(cfg: ExperimentConfig, args) -> None:
    out_csv = cfg.out_dir / "benchmark.csv"
    _guard_outputs(args.force, out_csv)
    ctx = _context_for_run(cfg)
    rows = runs.run_benchmark(ctx)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_rows(out_csv, rows)
    write_manifest(cfg.out_dir / "benchmark.manifest", "benchmark", args.config,
                   cfg.run.master_seed,
                   {"rows": len(rows), "methods": ",".join(cfg.methods.names),
                    "omp_sparsity": cfg.methods.omp_sparsity,
                    "amp_iters": cfg.methods.amp_iters,
                    "solver_steps": cfg.solver.steps,
                    "lambda": cfg.solver.lam, "beta": cfg.solver.beta})
    print(f"wrote {out_csv} ({len(rows)} rows)")


def cmd_sweep(cfg: ExperimentConfig, args) -> None:
    kind = args.kind
    out_csv = cfg.out_dir / f"sweep_{kind}.csv"
    summary_csv = cfg.out_dir / f"sweep_{kind}_summary.csv"
    _guard_outputs(args.force, out_csv, summary_csv)
    ctx = _context_for_run(cfg)
    summary = None
    if kind == "snr":
        rows = runs.run_snr_sweep(ctx)
    elif kind == "steps":
        rows = runs.run_step_sweep(ctx)
    elif kind == "alpha":
        rows, summary = runs.run_alpha_sweep(ctx)
        summary_header = ["method", "alpha", "mean_nmse_db"]
    else:
        rows, summary = runs.run_shift_eval(ctx)
        summary_header = ["method", "snr_db", "base_nmse_db", "shift_nmse_db", "delta_db"]
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_rows(out_csv, rows)
    if summary is not None:
        write_summary(summary_csv, summary_header, summary)
        print(f"wrote {summary_csv}")
    write_manifest(cfg.out_dir / f"sweep_{kind}.manifest", f"sweep-{kind}",
                   args.config, cfg.run.master_seed, {"rows": len(rows)})
    print(f"wrote {out_csv} ({len(rows)} rows)")


def cmd_gridsearch(cfg: ExperimentConfig, args) -> None:
    best_csv = cfg.out_dir / "gridsearch_best.csv"
    surface_csv = cfg.out_dir / "gridsearch_surface.csv"
    _guard_outputs(args.force, best_csv, surface_csv)
    ctx = _context_for_run(cfg)
    best, surface = runs.gridsearch(ctx)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_summary(best_csv, ["snr_db", "lambda", "beta", "mean_nmse_db"], best)
    write_summary(surface_csv, ["snr_db", "lambda", "beta", "mean_nmse_db"], surface)
    write_manifest(cfg.out_dir / "gridsearch.manifest", "gridsearch", args.config,
                   cfg.run.master_seed, {"surface_rows": len(surface)})
    print(f"wrote {best_csv} and {surface_csv}")


def cmd_report(cfg: ExperimentConfig, args) -> None:
    from . import report
    for path in args.csv:
        if not path.exists():
            raise MissingArtifactError(f"no such results file: {path}")
        first = path.open("r", encoding="utf-8").readline().strip()
        if first == LOSSES_VERSION_LINE:
            written = [report.render_losses(path, args.out)]
        elif first == SCHEMA_VERSION_LINE:
            written = report.render_results(path, args.out)
        else:
            raise ConfigError(f"{path}: unrecognised file version line '{first}'")
        for w in written:
            print(f"wrote {w}")


_COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "sweep": cmd_sweep,
    "gridsearch": cmd_gridsearch,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        torch.set_num_threads(args.threads)
    try:
        cfg = _load_cfg(args)
        _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except DiffpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
