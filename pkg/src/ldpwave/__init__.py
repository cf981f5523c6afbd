"""Locally differentially private wavelet density estimation."""
from .density import (
    CoefficientSet,
    Density,
    SlotLayout,
    besov_norm,
    expansion,
    make_hypothesis_density,
    make_reference_density,
    packing_shifts,
    sample,
    uniform_density,
    wavelet_coefficients,
)
from .estimator import (
    DensityEstimate,
    EstimatorConfig,
    adaptive_estimate,
    choose_adaptive_levels,
    choose_linear_level,
    empirical_coefficients,
    evaluate,
    linear_estimate,
    threshold,
)
from .privacy import (
    MechanismConfig,
    PrivatizedRecord,
    RecordBatch,
    audit_grid,
    audit_privacy,
    noise_scales,
    privatize,
    privatize_batch,
    read_records,
    write_records,
)
from .risk import (
    RateStudy,
    RiskReport,
    Scenario,
    concentration_check,
    lr_risk,
    monte_carlo_risk,
    rate_study,
    theoretical_exponent,
)
from .wavelet import WaveletBasis, build_basis, eval_scaled

__version__ = "0.1.0"
