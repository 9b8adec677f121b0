"""Quench dynamics, quantum Fisher information and echo metrology for the
collective-spin model ``H = -(chi/N) S_z^2 - Omega S_x - omega S_z``."""
from .errors import *  # noqa: F401,F403
from .spin import (
    CollectiveOperator,
    DickeState,
    LmgParams,
    PerturbationAxis,
    build_hamiltonian,
    coherent_state,
    collective,
    expectation,
    spin_x,
    spin_y,
    spin_z,
    variance,
)
from .propagator import ChebyshevPlan, chebyshev_evolve, evolve_grid, evolve_sequence, norm_certificate, spectral_bounds
from .spectrum import SpectralDecomposition, diagonalize, eqpt_profile, fit_eqpt_exponent, predicted_qfi_exponent
from .qfi import QfiMethod, QfiResult, compute_qfi, find_critical_field, first_transient_maximum, scaling_fit
from .meanfield import (
    barrier_height,
    bloch_evolve,
    classify_phase,
    critical_field_analytic,
    critical_field_longitudinal,
    meanfield_qfi,
    phase_boundary_numeric,
    time_averaged_sz,
)
from .echo import EchoSpec, SensitivityResult, echo_state, observable_sensitivity, sensitivity_time_maximum, sensitivity_trace, TimeMaximum
from .opensystem import BlockDensityMatrix, LindbladStepper, collective_moments, lindblad_evolve, open_echo_sensitivity
from .wigner import wigner_polar_samples, wigner_sphere

__version__ = "0.1.0"
