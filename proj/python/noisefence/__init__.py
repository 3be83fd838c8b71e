"""Closed forms and checks for output-noise defenses against score-based attacks."""

from ._core import (
    ConfigError,
    DomainError,
    EstimatorUndefined,
    PreconditionError,
    analyze,
    autozoom_variance,
    nes_factor,
    pdf_a,
    prob_a_negative,
    qc_ratio,
    quantize,
    quantized_z2,
    repeated_query_n,
    run_suite,
    sigma_z_sq,
    snr_nes,
    suite_names,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "EstimatorUndefined",
    "PreconditionError",
    "analyze",
    "autozoom_variance",
    "nes_factor",
    "pdf_a",
    "prob_a_negative",
    "qc_ratio",
    "quantize",
    "quantized_z2",
    "repeated_query_n",
    "run_suite",
    "sigma_z_sq",
    "snr_nes",
    "suite_names",
]
