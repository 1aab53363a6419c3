"""Dipole identification toolkit for driven N-level quantum systems.

The package simulates bilinear Schrodinger dynamics in normalized units,
synthesizes three-segment Ramsey-style controls whose population
measurement has derivative 1/(2 xi) with respect to one chosen dipole
entry, validates the second-order averaging picture behind that design,
and inverts measured populations for the dipole support entries by damped
Gauss-Newton descent.

Numerical core: an exponential midpoint integrator and its exact discrete
Frechet derivative, compiled as a Cython extension with a pure NumPy
fallback (see ``qdip.backend_name``; select with the QDIP_BACKEND
environment variable before import).
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("qdip")
except PackageNotFoundError:
    __version__ = "0.0.0"

from ._kernels import BACKEND_NAME as backend_name
from .averaging import (OscillatingTerm, averaging_error, conjugation_check,
                        interaction_components, k_matrix,
                        modulated_coupling_closed_form, u_averaged)
from .errors import (ConsistencyError, DegenerateTransitionsError, QdipError,
                     SchemaError, SteeringError, StepPolicyError,
                     UncontrollableSystemError)
from .identify import (AlphaReport, IdentificationResult, MeasurementRecord,
                       NoiseStudyResult, NoiseStudyRow, alpha_convexity,
                       cost_j, hessian_j, local_identify, measure_records,
                       noise_study)
from .propagate import (DEFAULT_POLICY, Propagator, StepPolicy, Trajectory,
                        build_grid, evolve_state, policy_dt, population,
                        propagator)
from .ramsey import (DEFAULT_STEER, DiscriminatingControl, SteerConfig,
                     SteerResult, build_control_set,
                     build_discriminating_control, psi2_target, steer)
from .sensitivity import SensitivityVector, dp_dmu, du_dmu, fd_oracle
from .system import (DipoleMatrix, SystemSpec, TransitionReport, basis_state,
                     coupling_path, field_scale_ratio, load_system,
                     parse_system, save_system, sigma_x, sigma_y, sigma_z,
                     transition_frequency, validate_system,
                     validate_transitions)
from .waveform import (ControlWaveform, ResonantSegment, SampledSegment,
                       empty_waveform, load_control, save_control,
                       waveform_from_dict, waveform_to_dict)

__all__ = [
    "__version__", "backend_name",
    # system
    "SystemSpec", "DipoleMatrix", "TransitionReport", "basis_state",
    "coupling_path", "field_scale_ratio", "load_system", "parse_system",
    "save_system", "sigma_x", "sigma_y", "sigma_z", "transition_frequency",
    "validate_system", "validate_transitions",
    # waveform
    "ControlWaveform", "ResonantSegment", "SampledSegment", "empty_waveform",
    "load_control", "save_control", "waveform_from_dict", "waveform_to_dict",
    # propagation
    "DEFAULT_POLICY", "Propagator", "StepPolicy", "Trajectory", "build_grid",
    "evolve_state", "policy_dt", "population", "propagator",
    # sensitivity
    "SensitivityVector", "dp_dmu", "du_dmu", "fd_oracle",
    # averaging
    "OscillatingTerm", "averaging_error", "conjugation_check",
    "interaction_components", "k_matrix", "modulated_coupling_closed_form",
    "u_averaged",
    # synthesis
    "DEFAULT_STEER", "DiscriminatingControl", "SteerConfig", "SteerResult",
    "build_control_set", "build_discriminating_control", "psi2_target",
    "steer",
    # identification
    "AlphaReport", "IdentificationResult", "MeasurementRecord",
    "NoiseStudyResult", "NoiseStudyRow", "alpha_convexity", "cost_j",
    "hessian_j", "local_identify", "measure_records", "noise_study",
    # errors
    "QdipError", "SchemaError", "DegenerateTransitionsError",
    "UncontrollableSystemError", "StepPolicyError", "SteeringError",
    "ConsistencyError",
]
