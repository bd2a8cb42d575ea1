"""Probabilistic reachable sets for saturated linear systems under unbounded noise.

The package certifies a quadratic contraction rate over the saturation
hull of a linear feedback loop, tightens it through the region of
linearity when the noise permits, and turns the resulting expectation
bounds into ellipsoidal probabilistic reachable sets and ultimate bounds.
A Monte Carlo layer and a CLI validate and export the results.
"""

from .bounds import (
    ContractionProfile,
    effective_rate,
    expectation_bound_sequence,
    linear_region_scaling,
    noise_energy,
    quadratic_recursion_bound,
    select_rate,
)
from .certify import (
    ContractionCertificate,
    VerificationReport,
    closed_loop_rate,
    min_contraction_rate,
    synthesize_contraction,
    verify_certificate,
)
from .errors import (
    CertificateError,
    ConfigError,
    NotApplicableError,
    PreconditionError,
    SatreachError,
    SynthesisError,
)
from .model import (
    FeedbackGain,
    SystemSpec,
    VertexSet,
    error_step,
    nominal_step,
    saturate,
    vertex_matrices,
)
from .montecarlo import (
    EnsembleStats,
    SimulationConfig,
    noise_factor,
    sample_noise,
    simulate_ensemble,
    trajectory_rng,
    violation_rate,
)
from .sets import Ellipsoid, area, boundary_polyline, contains, prs_sequence, pub

__version__ = "0.1.0"

__all__ = [
    "CertificateError",
    "ConfigError",
    "ContractionCertificate",
    "ContractionProfile",
    "Ellipsoid",
    "EnsembleStats",
    "FeedbackGain",
    "NotApplicableError",
    "PreconditionError",
    "SatreachError",
    "SimulationConfig",
    "SynthesisError",
    "SystemSpec",
    "VerificationReport",
    "VertexSet",
    "area",
    "boundary_polyline",
    "closed_loop_rate",
    "contains",
    "effective_rate",
    "error_step",
    "expectation_bound_sequence",
    "linear_region_scaling",
    "min_contraction_rate",
    "noise_energy",
    "noise_factor",
    "nominal_step",
    "prs_sequence",
    "pub",
    "quadratic_recursion_bound",
    "sample_noise",
    "saturate",
    "select_rate",
    "simulate_ensemble",
    "synthesize_contraction",
    "trajectory_rng",
    "verify_certificate",
    "vertex_matrices",
    "violation_rate",
]
