"""Experiment orchestration: benchmarks, sweeps, grid search, shift eval.

Within a trial every method consumes the identical measurement (same y, Phi,
sigma_n); the Phi Phi^H factorisation is shared across the methods that need
it.  All randomness derives from the master seed through
:mod:`diffpace.seeds`, so identical configs reproduce identical tables.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .. import seeds
from ..baselines import SecondOrderPrior, amp, mmse, omp, prior_from_samples
from ..channel import ScenarioSpec, hpsm_channel, sample_scenario, to_beamspace
from ..errors import ConfigError, MissingArtifactError
from ..geometry import subarray_codebooks
from ..measurement import (MeasurementSet, ensemble_signal_power, measure, nmse,
                           sample_pilot_plan, vec)
from ..network import DenoiserModel
from ..schedule import make_schedule
from ..scores import DenoiserScoreSource, GaussianScoreSource
from ..solver import GramSolver, SolverConfig, diffpace_estimate
from .config import ExperimentConfig, PilotSettings
from .results import ResultRow

SOLVER_METHODS = ("diffpace-oracle", "diffpace")


@dataclass
class RunContext:
    """Shared state for one experiment run (prior, score sources, caches)."""

    cfg: ExperimentConfig
    train_samples: np.ndarray
    test_samples: np.ndarray
    codebooks: tuple
    prior: SecondOrderPrior | None = None
    oracle_source: GaussianScoreSource | None = None
    trained_source: DenoiserScoreSource | None = None
    sigma_bounds: tuple[float, float] = (0.01, 2.0)
    _signal_power: dict = field(default_factory=dict)

    def signal_power(self, pilot: PilotSettings) -> float:
        """Ensemble mean per-measurement signal energy, cached per pilot shape."""
        key = (pilot.m_t, pilot.m_r, pilot.n_b)
        if key not in self._signal_power:
            rng = seeds.rng_for(self.cfg.run.master_seed, seeds.EVAL, *key)
            chans = self.train_samples[: min(96, len(self.train_samples))]
            powers = [
                ensemble_signal_power(
                    sample_pilot_plan(rng, self.cfg.array, pilot.m_t, pilot.m_r, pilot.n_b),
                    chans, self.codebooks)
                for _ in range(3)
            ]
            self._signal_power[key] = float(np.mean(powers))
        return self._signal_power[key]


def build_context(cfg: ExperimentConfig, train_samples: np.ndarray,
                  test_samples: np.ndarray,
                  model: DenoiserModel | None = None) -> RunContext:
    """Assemble the shared run state from dataset splits and an optional model."""
    ctx = RunContext(cfg=cfg, train_samples=train_samples, test_samples=test_samples,
                     codebooks=subarray_codebooks(cfg.array))
    needs_prior = any(m in ("mmse", "diffpace-oracle") for m in cfg.methods.names)
    if needs_prior:
        ctx.prior = prior_from_samples(train_samples)
        ctx.oracle_source = GaussianScoreSource(ctx.prior.mean, ctx.prior.covariance)
    dim = cfg.array.n_t * cfg.array.n_r
    rms = np.sqrt(np.sum(np.abs(train_samples) ** 2, axis=(1, 2)) / dim)
    ctx.sigma_bounds = (0.01 * float(np.sqrt(np.mean(rms ** 2))), 2.0 * float(rms.max()))
    if model is not None:
        ctx.trained_source = DenoiserScoreSource(model)
    return ctx


def _solver_schedule(ctx: RunContext, method: str, k: int):
    if method == "diffpace" and ctx.trained_source is not None:
        model = ctx.trained_source.model
        lo = model.sigma_min * model.norm_scale
        hi = model.sigma_max * model.norm_scale
    else:
        lo, hi = ctx.sigma_bounds
    return make_schedule(k, lo, hi)


def run_method(name: str, ctx: RunContext, m: MeasurementSet, gram: GramSolver,
               k: int, lam: float, beta: float, solver_seed: int) -> np.ndarray:
    """Dispatch one estimator on one measurement."""
    mcfg = ctx.cfg.methods
    if name == "ls":
        # Minimum-norm LS through the shared factorisation (same math as
        # ls_estimate for the full-row-rank Phi used here).
        return m.phi.conj().T @ gram.solve(m.y)
    if name == "omp":
        return omp(m.y, m.phi, sparsity=min(mcfg.omp_sparsity, m.phi.shape[0]))
    if name == "amp":
        return amp(m.y, m.phi, iters=mcfg.amp_iters, damping=mcfg.amp_damping,
                   threshold_factor=mcfg.amp_threshold)
    if name == "mmse":
        if ctx.prior is None:
            raise ConfigError("mmse requires the empirical prior (no train split?)")
        return mmse(m.y, m.phi, ctx.prior, m.sigma_n)
    if name in SOLVER_METHODS:
        source = ctx.oracle_source if name == "diffpace-oracle" else ctx.trained_source
        if source is None:
            raise MissingArtifactError(
                f"method '{name}' needs a "
                f"{'prior' if name == 'diffpace-oracle' else 'trained checkpoint'}")
        scfg = SolverConfig(n_steps=k, lam=lam, beta=beta,
                            schedule=_solver_schedule(ctx, name, k), seed=solver_seed)
        return diffpace_estimate(source, m, scfg, gram=gram)[0]
    raise ConfigError(f"unknown method '{name}'")


def _trial_measurement(ctx: RunContext, pilot: PilotSettings, snr_db: float,
                       sweep_tag: int, snr_idx: int, trial: int
                       ) -> tuple[np.ndarray, MeasurementSet, GramSolver]:
    """Channel from the test split plus one fresh plan/noise realisation."""
    cfg = ctx.cfg
    h_b = ctx.test_samples[trial % len(ctx.test_samples)]
    plan_rng = seeds.rng_for(cfg.run.master_seed, seeds.PILOT_PLAN, sweep_tag, snr_idx, trial)
    plan = sample_pilot_plan(plan_rng, cfg.array, pilot.m_t, pilot.m_r, pilot.n_b)
    noise_rng = seeds.rng_for(cfg.run.master_seed, seeds.NOISE, sweep_tag, snr_idx, trial)
    m = measure(h_b, plan, snr_db, noise_rng, ctx.codebooks,
                signal_power=ctx.signal_power(pilot))
    return vec(h_b), m, GramSolver(m.phi)


def _evaluate_methods(ctx: RunContext, methods, h_true, m, gram, k, lam, beta,
                      alpha, snr_db, sweep_tag, snr_idx, trial) -> list[ResultRow]:
    cfg = ctx.cfg
    trial_seed = seeds.seed_for(cfg.run.master_seed, seeds.NOISE, sweep_tag, snr_idx, trial)
    solver_seed = seeds.seed_for(cfg.run.master_seed, seeds.SOLVER_INIT, sweep_tag, snr_idx, trial)
    rows = []
    for name in methods:
        start = time.perf_counter() if cfg.run.timing else 0.0
        h_est = run_method(name, ctx, m, gram, k, lam, beta, solver_seed)
        wall_ms = (time.perf_counter() - start) * 1e3 if cfg.run.timing else 0.0
        rows.append(ResultRow(
            method=name, snr_db=snr_db, alpha=alpha, K=k, trial=trial,
            nmse_db=nmse(h_true, h_est), wall_ms=wall_ms, seed=trial_seed,
        ))
    return rows


def run_benchmark(ctx: RunContext, sweep_tag: int = 0) -> list[ResultRow]:
    """methods x SNR grid x trials with the configured pilot plan and K."""
    cfg = ctx.cfg
    alpha = cfg.pilot_alpha
    rows = []
    for snr_idx, snr_db in enumerate(cfg.run.snr_db):
        for trial in range(cfg.run.trials):
            h_true, m, gram = _trial_measurement(ctx, cfg.pilot, snr_db,
                                                 sweep_tag, snr_idx, trial)
            rows.extend(_evaluate_methods(
                ctx, cfg.methods.names, h_true, m, gram,
                cfg.solver.steps, cfg.solver.lam, cfg.solver.beta,
                alpha, snr_db, sweep_tag, snr_idx, trial))
    return rows


run_snr_sweep = run_benchmark


def run_step_sweep(ctx: RunContext, k_values=None, sweep_tag: int = 1) -> list[ResultRow]:
    """Solver accuracy versus step count; measurements shared across K."""
    cfg = ctx.cfg
    if k_values is None:
        k_values = cfg.run.k_grid
    methods = [m for m in cfg.methods.names if m in SOLVER_METHODS]
    if not methods:
        raise ConfigError("step sweep needs a solver method in [methods] list")
    alpha = cfg.pilot_alpha
    rows = []
    for snr_idx, snr_db in enumerate(cfg.run.snr_db):
        for trial in range(cfg.run.trials):
            h_true, m, gram = _trial_measurement(ctx, cfg.pilot, snr_db,
                                                 sweep_tag, snr_idx, trial)
            for k in k_values:
                rows.extend(_evaluate_methods(
                    ctx, methods, h_true, m, gram, k,
                    cfg.solver.lam, cfg.solver.beta,
                    alpha, snr_db, sweep_tag, snr_idx, trial))
    return rows


def run_alpha_sweep(ctx: RunContext, alphas=None, sweep_tag: int = 2
                    ) -> tuple[list[ResultRow], list[list]]:
    """Accuracy versus pilot ratio; returns rows plus per-alpha mean summary."""
    cfg = ctx.cfg
    if alphas is None:
        alphas = cfg.run.alpha_grid
    rows = []
    summary = []
    for a_idx, alpha in enumerate(alphas):
        pilot = cfg.pilot_for_alpha(alpha)
        cell: list[ResultRow] = []
        for snr_idx, snr_db in enumerate(cfg.run.snr_db):
            for trial in range(cfg.run.trials):
                h_true, m, gram = _trial_measurement(
                    ctx, pilot, snr_db, sweep_tag + 10 * a_idx, snr_idx, trial)
                cell.extend(_evaluate_methods(
                    ctx, cfg.methods.names, h_true, m, gram,
                    cfg.solver.steps, cfg.solver.lam, cfg.solver.beta,
                    alpha, snr_db, sweep_tag + 10 * a_idx, snr_idx, trial))
        rows.extend(cell)
        for name in cfg.methods.names:
            vals = [r.nmse_db for r in cell if r.method == name]
            summary.append([name, float(alpha), float(np.mean(vals))])
    return rows, summary


def _fresh_scenario_samples(cfg: ExperimentConfig, spec: ScenarioSpec, count: int,
                            codebooks, tag: int) -> np.ndarray:
    out = np.empty((count, cfg.array.n_r, cfg.array.n_t), dtype=np.complex128)
    for j in range(count):
        rng = seeds.rng_for(cfg.run.master_seed, seeds.SCENARIO, tag, j)
        paths = sample_scenario(rng, spec, cfg.array)
        out[j] = to_beamspace(hpsm_channel(paths, cfg.array), codebooks)
    return out


def run_shift_eval(ctx: RunContext, shifted_spec: ScenarioSpec | None = None,
                   sweep_tag: int = 3) -> tuple[list[ResultRow], list[list]]:
    """In-distribution versus shifted-scenario accuracy with common seeds.

    Base and shifted channels are drawn with identical seeds, so an identity
    shift reproduces the base draws exactly and the reported delta is 0.
    """
    cfg = ctx.cfg
    if shifted_spec is None:
        shifted_spec = cfg.shifted_scenario()
    count = cfg.run.trials
    variants = {
        "base": _fresh_scenario_samples(cfg, cfg.scenario, count, ctx.codebooks, 0),
        "shift": _fresh_scenario_samples(cfg, shifted_spec, count, ctx.codebooks, 0),
    }
    rows = []
    means: dict[tuple[str, str, float], float] = {}
    for label, samples in variants.items():
        sub = replace(ctx, test_samples=samples)  # shares the calibration cache
        for snr_idx, snr_db in enumerate(cfg.run.snr_db):
            cell = []
            for trial in range(count):
                h_true, m, gram = _trial_measurement(
                    sub, cfg.pilot, snr_db, sweep_tag, snr_idx, trial)
                cell.extend(_evaluate_methods(
                    sub, cfg.methods.names, h_true, m, gram,
                    cfg.solver.steps, cfg.solver.lam, cfg.solver.beta,
                    cfg.pilot_alpha, snr_db, sweep_tag, snr_idx, trial))
            for name in cfg.methods.names:
                means[(label, name, snr_db)] = float(np.mean(
                    [r.nmse_db for r in cell if r.method == name]))
            rows.extend(ResultRow(
                method=f"{label}:{r.method}", snr_db=r.snr_db, alpha=r.alpha,
                K=r.K, trial=r.trial, nmse_db=r.nmse_db, wall_ms=r.wall_ms,
                seed=r.seed) for r in cell)
    summary = []
    for name in cfg.methods.names:
        for snr_db in cfg.run.snr_db:
            base = means[("base", name, snr_db)]
            shifted = means[("shift", name, snr_db)]
            summary.append([name, float(snr_db), base, shifted, shifted - base])
    return rows, summary


def gridsearch(ctx: RunContext, lambda_grid=None, beta_grid=None, sweep_tag: int = 4
               ) -> tuple[list[list], list[list]]:
    """Exhaustive (lambda, beta) evaluation per SNR on validation channels.

    Returns (best rows, full surface); each surface row is
    [snr_db, lambda, beta, mean_nmse_db].  Ties resolve toward the smaller
    lambda, then the smaller beta (the grids are evaluated in sorted order).
    """
    cfg = ctx.cfg
    if lambda_grid is None:
        lambda_grid = cfg.gridsearch.lambda_grid
    if beta_grid is None:
        beta_grid = cfg.gridsearch.beta_grid
    if not lambda_grid or not beta_grid:
        raise ConfigError("grid search needs non-empty lambda and beta grids")
    solver_methods = [m for m in cfg.methods.names if m in SOLVER_METHODS]
    if not solver_methods:
        raise ConfigError("grid search needs a solver method in [methods] list")
    method = solver_methods[0]

    pairs = [(lam, beta) for lam in sorted(lambda_grid) for beta in sorted(beta_grid)]
    surface = []
    best = []
    for snr_idx, snr_db in enumerate(cfg.run.snr_db):
        sums = np.zeros(len(pairs))
        for trial in range(cfg.run.trials):
            h_true, m, gram = _trial_measurement(ctx, cfg.pilot, snr_db,
                                                 sweep_tag, snr_idx, trial)
            solver_seed = seeds.seed_for(cfg.run.master_seed, seeds.SOLVER_INIT,
                                         sweep_tag, snr_idx, trial)
            for p_idx, (lam, beta) in enumerate(pairs):
                h_est = run_method(method, ctx, m, gram, cfg.solver.steps,
                                   lam, beta, solver_seed)
                sums[p_idx] += nmse(h_true, h_est)
        means = sums / cfg.run.trials
        for (lam, beta), mean_val in zip(pairs, means):
            surface.append([float(snr_db), float(lam), float(beta), float(mean_val)])
        best_idx = int(np.argmin(means))  # pairs are sorted, so ties pick smaller lambda/beta
        best_lam, best_beta = pairs[best_idx]
        best.append([float(snr_db), float(best_lam), float(best_beta), float(means[best_idx])])
    return best, surface
