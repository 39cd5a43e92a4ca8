"""Channel-estimation lab: hybrid-field channel synthesis, compressed pilot
measurements, a diffusion denoiser prior, classical baselines, and the
plug-and-play estimator, plus a benchmark harness."""

__version__ = "0.1.0"

from .geometry import ArrayConfig, Codebook, blkdiag_codebook, dft_codebook, upa_steering
from .channel import (ChannelSample, PathParams, ScenarioSpec, from_beamspace,
                      hpsm_channel, pwm_channel, sample_scenario, swm_channel,
                      to_beamspace)
from .measurement import (MeasurementSet, PilotPlan, build_measurement_matrix,
                          measure, nmse, quantize_phase, sample_pilot_plan)
from .baselines import SecondOrderPrior, amp, ls_estimate, mmse, omp
from .schedule import NoiseSchedule, make_schedule, perturb
from .solver import (SolverConfig, consistency_project, consistency_prox,
                     delta_sigma, diffpace_estimate, ode_sample, prior_step, rho)
from .scores import DenoiserScoreSource, GaussianScoreSource, PointScoreSource, gaussian_exact_score

__all__ = [
    "ArrayConfig", "Codebook", "blkdiag_codebook", "dft_codebook", "upa_steering",
    "ChannelSample", "PathParams", "ScenarioSpec", "from_beamspace", "hpsm_channel",
    "pwm_channel", "sample_scenario", "swm_channel", "to_beamspace",
    "MeasurementSet", "PilotPlan", "build_measurement_matrix", "measure", "nmse",
    "quantize_phase", "sample_pilot_plan",
    "SecondOrderPrior", "amp", "ls_estimate", "mmse", "omp",
    "NoiseSchedule", "make_schedule", "perturb",
    "SolverConfig", "consistency_project", "consistency_prox", "delta_sigma", "diffpace_estimate",
    "ode_sample", "prior_step", "rho",
    "DenoiserScoreSource", "GaussianScoreSource", "PointScoreSource",
    "gaussian_exact_score",
]
