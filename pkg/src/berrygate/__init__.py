"""Noise-resilient Berry-phase gates on a parametrically driven qubit.

Modules
-------
drive_model
    Rabi, rotating-wave and modified rotating-wave Hamiltonians, the
    counterdiabatic term, a unitary two-level propagator and the gate phases.
noise
    Stationary Ornstein-Uhlenbeck noise: correlation, spectrum and exact sampling.
sequences
    Decoupling sequences (FID, SE, CPMG, UDD, custom), switching and filter functions.
fidelity
    Gate fidelity by closed forms, time- and frequency-domain quadrature and Monte Carlo.
optimizer
    Closed-form decay exponent for OU noise and the constrained pulse-timing optimisation.
cli
    Command-line front end (``berrygate``).
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .drive_model import (
    DriveParams,
    GatePhases,
    GateSchedule,
    NormDriftError,
    QubitState,
    gate_phases,
    gate_unitary,
    propagate,
    propagate_gate,
    rabi_compare,
)
from .fidelity import (
    FidelityResult,
    NoiseTarget,
    QuadratureError,
    chi_freq_domain,
    chi_time_domain,
    fid_b_analytic,
    fid_phi_analytic,
    fid_se_analytic,
    landscape,
    mc_fidelity,
    t2,
)
from .noise import OUParams, correlation, sample_ou, spectral_density
from .optimizer import OptimizationError, OptimizationResult, chi_exact, coefficients, optimize, recursion_solution
from .sequences import PulseSequence, cpmg, custom, fid, filter_function, parse_sequence, spin_echo, switching, udd

__all__ = [
    "DriveParams",
    "FidelityResult",
    "GatePhases",
    "GateSchedule",
    "NoiseTarget",
    "NormDriftError",
    "OUParams",
    "OptimizationError",
    "OptimizationResult",
    "PulseSequence",
    "QuadratureError",
    "QubitState",
    "chi_exact",
    "chi_freq_domain",
    "chi_time_domain",
    "coefficients",
    "correlation",
    "cpmg",
    "custom",
    "fid",
    "fid_b_analytic",
    "fid_phi_analytic",
    "fid_se_analytic",
    "filter_function",
    "gate_phases",
    "gate_unitary",
    "landscape",
    "mc_fidelity",
    "optimize",
    "parse_sequence",
    "propagate",
    "propagate_gate",
    "rabi_compare",
    "recursion_solution",
    "sample_ou",
    "spectral_density",
    "spin_echo",
    "switching",
    "t2",
    "udd",
]
