"""Arbitrage taxonomy for diffusion market models.

Classifies markets driven by time-inhomogeneous diffusions into the
deflator hierarchy (local martingale deflators, martingale deflators,
equivalent local martingale measures, equivalent martingale measures),
detects asset price bubbles, and cross-checks the verdicts with a
Monte Carlo martingale-defect estimator.
"""

__version__ = "0.1.0"

from .errors import (
    ArityError,
    BindError,
    ConfigError,
    ContradictionError,
    DiffarbError,
    DimensionMismatch,
    DomainError,
    EvalError,
    MissingCertificate,
    NotPSD,
    NotSymmetric,
    OscillationDetected,
    ParseError,
    SingularDiffusion,
    UnknownIdentifier,
    UnknownPreset,
)
from .dsl import eval_expr, parse_expr, print_expr
from .model import (
    CertificateBundle,
    MarketModel,
    MPRField,
    NotConstructible,
    SamplePlan,
    ValidationReport,
    asset_path,
    embed_zero,
    good_mpr_markov,
    sqrt_psd,
    validate_model,
)
from .quadrature import (
    FellerReport,
    TailReport,
    classify_tail,
    feller_classify,
    integrate,
    khasminskii_nested,
)
from .envelopes import (
    EllipticityProfile,
    GammaProfile,
    ModulusEstimate,
    RadialProfile,
    ellipticity_profile,
    gamma_profile,
    lambda_max,
    modulus_estimate,
    radial_profile,
)
from .criteria import (
    ConditionReport,
    check_1d_emm,
    check_E1,
    check_E3,
    check_EL1,
    check_EL3,
    check_N1,
    check_NL1,
    check_U1,
    check_U2,
    check_growth_cap,
    check_holder_1d,
    check_mckean,
    check_mu_1d,
    check_radial_market,
    check_slmd,
    radial_shape,
)
from .verdict import MarketVerdict, Provenance, classify
from .simulate import (
    DefectReport,
    RadiusEstimate,
    SimConfig,
    SimEstimate,
    asset_defect,
    emit_paths,
    martingale_defect,
    simulate_exit,
    wilson_interval,
)

__all__ = [
    "__version__",
    "ArityError",
    "BindError",
    "ConfigError",
    "ContradictionError",
    "DiffarbError",
    "DimensionMismatch",
    "DomainError",
    "EvalError",
    "MissingCertificate",
    "NotPSD",
    "NotSymmetric",
    "OscillationDetected",
    "ParseError",
    "SingularDiffusion",
    "UnknownIdentifier",
    "UnknownPreset",
    "eval_expr",
    "parse_expr",
    "print_expr",
    "CertificateBundle",
    "MarketModel",
    "MPRField",
    "NotConstructible",
    "SamplePlan",
    "ValidationReport",
    "asset_path",
    "embed_zero",
    "good_mpr_markov",
    "sqrt_psd",
    "validate_model",
    "FellerReport",
    "TailReport",
    "classify_tail",
    "feller_classify",
    "integrate",
    "khasminskii_nested",
    "EllipticityProfile",
    "GammaProfile",
    "ModulusEstimate",
    "RadialProfile",
    "ellipticity_profile",
    "gamma_profile",
    "lambda_max",
    "modulus_estimate",
    "radial_profile",
    "ConditionReport",
    "check_1d_emm",
    "check_E1",
    "check_E3",
    "check_EL1",
    "check_EL3",
    "check_N1",
    "check_NL1",
    "check_U1",
    "check_U2",
    "check_growth_cap",
    "check_holder_1d",
    "check_mckean",
    "check_mu_1d",
    "check_radial_market",
    "check_slmd",
    "radial_shape",
    "MarketVerdict",
    "Provenance",
    "classify",
    "DefectReport",
    "RadiusEstimate",
    "SimConfig",
    "SimEstimate",
    "asset_defect",
    "emit_paths",
    "martingale_defect",
    "simulate_exit",
    "wilson_interval",
]
