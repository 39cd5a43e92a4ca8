"""Experiment configuration: INI-style files with a strict schema.

Unknown sections or keys are errors (silent typos corrupt sweeps), every
value goes through a typed converter, and band presets expand to the exact
antenna/RF-chain/subarray dimensions they name.  Paths in the file resolve
relative to the output directory.
"""

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..channel import ScenarioSpec
from ..errors import ConfigError
from ..geometry import ArrayConfig

PRESETS: dict[str, dict] = {
    # CI-friendly default: small enough for minutes-scale sweeps on one core.
    "desk": dict(n_t=32, n_r=16, k_t=2, k_r=2, l_t=2, l_r=4,
                 tx_subarray=(4, 4), rx_subarray=(4, 2)),
    "mmwave": dict(n_t=64, n_r=16, k_t=2, k_r=2, l_t=2, l_r=4,
                   tx_subarray=(8, 4), rx_subarray=(4, 2)),
    "thz": dict(n_t=256, n_r=64, k_t=2, k_r=2, l_t=4, l_r=8,
                tx_subarray=(16, 8), rx_subarray=(8, 4)),
}

# Per-band solver weights: mmwave/thz use the published per-band values;
# the desk preset's pair was calibrated by grid search on its ensemble.
SOLVER_DEFAULTS = {
    "desk": (0.06, 0.2),
    "mmwave": (0.006, 0.05),
    "thz": (0.001, 0.03),
}


@dataclass(frozen=True)
class PilotSettings:
    # Defaults target the desk preset at pilot ratio ~0.8 while keeping the
    # measurement matrix full row rank (m_t <= n_t and m_r * l_r <= n_r;
    # extra slots beyond the antenna counts add no new information).
    m_t: int = 26
    m_r: int = 4
    n_b: int = 4


@dataclass(frozen=True)
class DatasetSettings:
    samples: int = 2048
    train_fraction: float = 0.9
    file: str = "dataset.bin"


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-4
    ema_rate: float = 0.999
    noise_levels: int = 1000
    sigma_min: float | None = None
    sigma_max: float | None = None
    hidden: int = 32
    kernel: int = 3
    embed_dim: int = 64
    pe_dim: int = 32
    checkpoint: str = "denoiser.ckpt"


@dataclass(frozen=True)
class SolverSettings:
    steps: int = 100
    lam: float = 0.06
    beta: float = 0.2


@dataclass(frozen=True)
class MethodSettings:
    names: tuple[str, ...] = ("ls", "omp", "mmse", "diffpace-oracle")
    omp_sparsity: int = 32
    amp_iters: int = 50
    amp_damping: float = 0.5
    amp_threshold: float = 1.4


@dataclass(frozen=True)
class RunSettings:
    snr_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 100
    master_seed: int = 1234
    out_dir: str = "runs/demo"
    timing: bool = False
    k_grid: tuple[int, ...] = (20, 50, 100)
    alpha_grid: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class GridsearchSettings:
    lambda_grid: tuple[float, ...] = (0.002, 0.006, 0.02)
    beta_grid: tuple[float, ...] = (0.02, 0.05, 0.1)


@dataclass(frozen=True)
class EstimateSettings:
    sample_index: int = 0
    snr_db: float = 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    array: ArrayConfig
    scenario: ScenarioSpec
    dataset: DatasetSettings = DatasetSettings()
    pilot: PilotSettings = PilotSettings()
    train: TrainSettings = TrainSettings()
    solver: SolverSettings = SolverSettings()
    methods: MethodSettings = MethodSettings()
    run: RunSettings = RunSettings()
    gridsearch: GridsearchSettings = GridsearchSettings()
    estimate: EstimateSettings = EstimateSettings()
    shift_overrides: dict = field(default_factory=dict)

    @property
    def out_dir(self) -> Path:
        return Path(self.run.out_dir)

    def resolve(self, name: str) -> Path:
        """Resolve a config-file path relative to the output directory."""
        p = Path(name)
        return p if p.is_absolute() else self.out_dir / p

    @property
    def pilot_alpha(self) -> float:
        return self.pilot.m_t * self.pilot.m_r * self.array.l_r / (self.array.n_t * self.array.n_r)

    def pilot_for_alpha(self, alpha: float) -> PilotSettings:
        """Pilot slots approximating a requested ratio, full row rank kept.

        Rx slots cover the receive antennas (m_r = n_r / l_r) and the Tx slot
        count scales the ratio, capped at n_t so the Kronecker factors stay
        full rank.
        """
        m_r = max(1, self.array.n_r // self.array.l_r)
        per_mt = m_r * self.array.l_r
        m_t = max(1, round(alpha * self.array.n_t * self.array.n_r / per_mt))
        m_t = min(m_t, self.array.n_t)
        return replace(self.pilot, m_t=m_t, m_r=m_r)

    def shifted_scenario(self) -> ScenarioSpec:
        return replace(self.scenario, **self.shift_overrides)


def _parse_scenario(pairs: dict[str, str]) -> tuple[ArrayConfig, ScenarioSpec]:
    preset = pairs.pop("preset", None)
    dims: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"[scenario] unknown preset '{preset}'")
        dims.update(PRESETS[preset])
    for key in ("n_t", "n_r", "k_t", "k_r", "l_t", "l_r"):
        if key in pairs:
            dims[key] = _as_int("scenario", key, pairs.pop(key))
    for key in ("tx_subarray", "rx_subarray"):
        if key in pairs:
            dims[key] = _as_grid("scenario", key, pairs.pop(key))
    missing = [k for k in ("n_t", "n_r", "k_t", "k_r", "l_t", "l_r",
                           "tx_subarray", "rx_subarray") if k not in dims]
    if missing:
        raise ConfigError(f"[scenario] missing keys (set a preset or provide them): {missing}")
    try:
        array = ArrayConfig(
            n_t=dims["n_t"], n_r=dims["n_r"], k_t=dims["k_t"], k_r=dims["k_r"],
            l_t=dims["l_t"], l_r=dims["l_r"],
            tx_subarray_shape=dims["tx_subarray"], rx_subarray_shape=dims["rx_subarray"],
        )
    except ValueError as exc:
        raise ConfigError(f"[scenario] {exc}") from exc

    spec_kwargs: dict = {}
    converters = {
        "paths_min": int, "paths_max": int,
        "power_decay": float, "subarray_spacing_wl": float,
        "wavelength_m": float, "angular_spread": float,
        "azimuth_half_range_deg": float, "elevation_half_range_deg": float,
        "reflector_min_m": float, "reflector_max_m": float,
    }
    parsed: dict = {}
    for key, value in list(pairs.items()):
        if key not in converters:
            raise ConfigError(f"[scenario] unknown key '{key}'")
        parsed[key] = _convert("scenario", key, value, converters[key])
    if "paths_min" in parsed:
        spec_kwargs["paths_min"] = parsed["paths_min"]
    if "paths_max" in parsed:
        spec_kwargs["paths_max"] = parsed["paths_max"]
    if "power_decay" in parsed:
        spec_kwargs["power_decay"] = parsed["power_decay"]
    if "subarray_spacing_wl" in parsed:
        spec_kwargs["subarray_spacing_wl"] = parsed["subarray_spacing_wl"]
    if "wavelength_m" in parsed:
        spec_kwargs["wavelength"] = parsed["wavelength_m"]
    if "angular_spread" in parsed:
        spec_kwargs["angular_spread"] = parsed["angular_spread"]
    if "azimuth_half_range_deg" in parsed:
        half = math.radians(parsed["azimuth_half_range_deg"])
        spec_kwargs["azimuth_range"] = (-half, half)
    if "elevation_half_range_deg" in parsed:
        half = math.radians(parsed["elevation_half_range_deg"])
        spec_kwargs["elevation_range"] = (-half, half)
    lo = parsed.get("reflector_min_m")
    hi = parsed.get("reflector_max_m")
    if (lo is None) != (hi is None):
        raise ConfigError("[scenario] set both reflector_min_m and reflector_max_m")
    if lo is not None:
        spec_kwargs["reflector_range"] = (lo, hi)
    try:
        scenario = ScenarioSpec(**spec_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[scenario] {exc}") from exc
    return array, scenario


def _convert(section, key, value, conv):
    try:
        if conv is bool:
            if value.lower() in ("on", "true", "1", "yes"):
                return True
            if value.lower() in ("off", "false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {value}")
        return conv(value)
    except ValueError as exc:
        raise ConfigError(f"[{section}] bad value for '{key}': {exc}") from exc


def _as_int(section, key, value):
    return _convert(section, key, value, int)


def _as_grid(section, key, value):
    try:
        nx, nz = value.lower().split("x")
        return (int(nx), int(nz))
    except ValueError as exc:
        raise ConfigError(f"[{section}] bad grid '{value}' for '{key}' "
                          f"(expected e.g. 4x2)") from exc


def _float_list(section, key, value):
    return tuple(_convert(section, key, v.strip(), float) for v in value.split(",") if v.strip())


def _int_list(section, key, value):
    return tuple(_convert(section, key, v.strip(), int) for v in value.split(",") if v.strip())


def _fill(section_name: str, pairs: dict[str, str], settings_cls, converters: dict):
    kwargs = {}
    for key, value in pairs.items():
        if key not in converters:
            raise ConfigError(f"[{section_name}] unknown key '{key}'")
        spec = converters[key]
        field_name = spec[2] if len(spec) == 3 else key
        kwargs[field_name] = spec[0](section_name, key, value) if spec[1] else \
            _convert(section_name, key, value, spec[0])
    try:
        return settings_cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section_name}] {exc}") from exc


def _opt_float(section, key, value):
    if value.lower() in ("auto", "none", ""):
        return None
    return _convert(section, key, value, float)


def _method_names(section, key, value):
    names = tuple(v.strip() for v in value.split(",") if v.strip())
    known = {"ls", "omp", "amp", "mmse", "diffpace-oracle", "diffpace"}
    for name in names:
        if name not in known:
            raise ConfigError(f"[{section}] unknown method '{name}' "
                              f"(known: {sorted(known)})")
    if not names:
        raise ConfigError(f"[{section}] method list is empty")
    return names


_SECTION_SCHEMAS = {
    "dataset": (DatasetSettings, {
        "samples": (int, False), "train_fraction": (float, False), "file": (str, False),
    }),
    "pilot": (PilotSettings, {
        "m_t": (int, False), "m_r": (int, False), "n_b": (int, False),
    }),
    "train": (TrainSettings, {
        "epochs": (int, False), "batch_size": (int, False),
        "learning_rate": (float, False), "ema_rate": (float, False),
        "noise_levels": (int, False),
        "sigma_min": (_opt_float, True), "sigma_max": (_opt_float, True),
        "hidden": (int, False), "kernel": (int, False),
        "embed_dim": (int, False), "pe_dim": (int, False),
        "checkpoint": (str, False),
    }),
    "solver": (SolverSettings, {
        "steps": (int, False, "steps"),
        "lambda": (float, False, "lam"),
        "beta": (float, False, "beta"),
    }),
    "methods": (MethodSettings, {
        "list": (_method_names, True, "names"),
        "omp_sparsity": (int, False),
        "amp_iters": (int, False), "amp_damping": (float, False),
        "amp_threshold": (float, False),
    }),
    "run": (RunSettings, {
        "snr_db": (_float_list, True),
        "trials": (int, False), "master_seed": (int, False),
        "out_dir": (str, False), "timing": (bool, False),
        "k_grid": (_int_list, True), "alpha_grid": (_float_list, True),
    }),
    "gridsearch": (GridsearchSettings, {
        "lambda_grid": (_float_list, True), "beta_grid": (_float_list, True),
    }),
    "estimate": (EstimateSettings, {
        "sample_index": (int, False), "snr_db": (float, False),
    }),
}

_SHIFT_KEYS = {
    "paths_min": int, "paths_max": int, "power_decay": float,
    "subarray_spacing_wl": float, "angular_spread": float,
    "azimuth_half_range_deg": float, "elevation_half_range_deg": float,
}


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    sections = {name: dict(parser[name]) for name in parser.sections()}
    if "scenario" not in sections:
        raise ConfigError(f"{path}: missing required [scenario] section")
    array, scenario = _parse_scenario(sections.pop("scenario"))

    kwargs: dict = {"array": array, "scenario": scenario}
    shift = sections.pop("shift", None)
    for name, pairs in sections.items():
        if name not in _SECTION_SCHEMAS:
            raise ConfigError(f"unknown section [{name}]")
        cls, schema = _SECTION_SCHEMAS[name]
        kwargs[name] = _fill(name, pairs, cls, schema)

    cfg = ExperimentConfig(**kwargs)
    if shift is not None:
        overrides = {}
        for key, value in shift.items():
            if key not in _SHIFT_KEYS:
                raise ConfigError(f"[shift] unknown key '{key}'")
            parsed = _convert("shift", key, value, _SHIFT_KEYS[key])
            if key == "azimuth_half_range_deg":
                overrides["azimuth_range"] = (-math.radians(parsed), math.radians(parsed))
            elif key == "elevation_half_range_deg":
                overrides["elevation_range"] = (-math.radians(parsed), math.radians(parsed))
            elif key == "subarray_spacing_wl":
                overrides["subarray_spacing_wl"] = parsed
            else:
                overrides[key] = parsed
        cfg = replace(cfg, shift_overrides=overrides)

    _validate(cfg)
    return cfg


def default_config(preset: str = "desk", **run_overrides) -> ExperimentConfig:
    """Programmatic config with preset dimensions and default settings."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset '{preset}'")
    dims = PRESETS[preset]
    array = ArrayConfig(
        n_t=dims["n_t"], n_r=dims["n_r"], k_t=dims["k_t"], k_r=dims["k_r"],
        l_t=dims["l_t"], l_r=dims["l_r"],
        tx_subarray_shape=dims["tx_subarray"], rx_subarray_shape=dims["rx_subarray"],
    )
    lam, beta = SOLVER_DEFAULTS[preset]
    cfg = ExperimentConfig(
        array=array, scenario=ScenarioSpec(),
        solver=SolverSettings(lam=lam, beta=beta),
        run=RunSettings(**run_overrides) if run_overrides else RunSettings(),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.run.trials < 1:
        raise ConfigError("[run] trials must be >= 1")
    if not cfg.run.snr_db:
        raise ConfigError("[run] snr_db grid must be non-empty")
    if not (0.0 < cfg.dataset.train_fraction < 1.0):
        raise ConfigError("[dataset] train_fraction must lie in (0, 1)")
    if cfg.pilot.m_t < 1 or cfg.pilot.m_r < 1:
        raise ConfigError("[pilot] m_t and m_r must be >= 1")
    if cfg.pilot.n_b < 1:
        raise ConfigError("[pilot] n_b must be >= 1")
    if cfg.pilot_alpha > 1.0 + 1e-12:
        raise ConfigError(
            f"[pilot] pilot ratio {cfg.pilot_alpha:.3f} exceeds 1 "
            f"(m_t*m_r*l_r must not exceed n_t*n_r)")
    if cfg.pilot.m_t > cfg.array.n_t or cfg.pilot.m_r * cfg.array.l_r > cfg.array.n_r:
        raise ConfigError(
            "[pilot] need m_t <= n_t and m_r*l_r <= n_r, otherwise the "
            "measurement matrix loses row rank (extra slots repeat information)")
    if cfg.solver.steps < 1:
        raise ConfigError("[solver] steps must be >= 1")
    if cfg.solver.lam <= 0 or cfg.solver.beta < 0:
        raise ConfigError("[solver] need lambda > 0 and beta >= 0")
    if not cfg.gridsearch.lambda_grid or not cfg.gridsearch.beta_grid:
        raise ConfigError("[gridsearch] grids must be non-empty")
    for alpha in cfg.run.alpha_grid:
        if not (0.0 < alpha <= 1.0):
            raise ConfigError("[run] alpha_grid values must lie in (0, 1]")
    for k in cfg.run.k_grid:
        if k < 1:
            raise ConfigError("[run] k_grid values must be >= 1")
