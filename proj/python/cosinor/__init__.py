"""Mixed-effects cosinor models with phase-variation adjustment."""

from ._core import (
    CosinorError,
    adjust,
    amplitude_phase_to_linear,
    characteristic_at_one,
    circular_mean,
    fit,
    gamma_fit,
    generate_trial,
    linear_to_amplitude_phase,
    phase_variance,
    resultant_length,
    run_campaign,
)

__all__ = [
    "CosinorError",
    "adjust",
    "amplitude_phase_to_linear",
    "characteristic_at_one",
    "circular_mean",
    "fit",
    "gamma_fit",
    "generate_trial",
    "linear_to_amplitude_phase",
    "phase_variance",
    "resultant_length",
    "run_campaign",
]
