"""Coincidence-rate simulator for intensity interferometry generalized by
projection and entanglement, with curve fitting and an emitter-entanglement
witness."""

from .entanglement import (
    GeneralRateInput,
    WitnessVerdict,
    bell_state_tensor,
    bloch_density,
    general_crossed,
    general_direct,
    general_rate_curve,
    general_total,
    witness_factorization,
)
from .errors import ConfigError, DimensionMismatchError, E2I2Error, ValidationError
from .estimation import FitProblem, FitResult, fit
from .hbt import (
    RateResult,
    VisibilityCurve,
    hbt_rate,
    phase_noise_envelope,
    scan_baseline,
)
from .linalg import (
    SchmidtReport,
    Tensor4,
    identity_tensor,
    matmul,
    operator_schmidt,
    tensor_product,
    trace,
    validate_density,
    validate_projector,
)
from .polarization import (
    PolRateResult,
    linked_polarization_map,
    pol_rate,
    pure_pol_rate,
)
from .procedures import (
    DecayChannel,
    DetectorState,
    JointAmplitudeState,
    ThreeLevelAtom,
    decay_interference_rate,
    mz_no_recombine_rate,
    procedure1_rate,
    procedure2_rate,
    spatial_swap_rate,
    swap_operator,
    wavelength_interference_rate,
)
from .scene import Detector, Emitter, OpticalScene, Propagator, draw_phases, propagator

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DecayChannel",
    "Detector",
    "DetectorState",
    "DimensionMismatchError",
    "E2I2Error",
    "Emitter",
    "FitProblem",
    "FitResult",
    "GeneralRateInput",
    "JointAmplitudeState",
    "OpticalScene",
    "PolRateResult",
    "Propagator",
    "RateResult",
    "SchmidtReport",
    "Tensor4",
    "ThreeLevelAtom",
    "ValidationError",
    "VisibilityCurve",
    "WitnessVerdict",
    "bell_state_tensor",
    "bloch_density",
    "decay_interference_rate",
    "draw_phases",
    "fit",
    "general_crossed",
    "general_direct",
    "general_rate_curve",
    "general_total",
    "hbt_rate",
    "identity_tensor",
    "linked_polarization_map",
    "matmul",
    "mz_no_recombine_rate",
    "operator_schmidt",
    "phase_noise_envelope",
    "pol_rate",
    "procedure1_rate",
    "procedure2_rate",
    "propagator",
    "pure_pol_rate",
    "scan_baseline",
    "spatial_swap_rate",
    "swap_operator",
    "tensor_product",
    "trace",
    "validate_density",
    "validate_projector",
    "wavelength_interference_rate",
    "witness_factorization",
]
