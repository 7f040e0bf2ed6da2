"""Noise spectra of a collective atomic spin oscillator under continuous homodyne readout.

Submodules
----------
core        oscillator state, susceptibility and the noise budget
squeeze     optimal squeezing, virtual frequency shift, force-normalized spectra
detuning    optical-detuning scaling and its optimum
mors        magneto-optical resonance spectra and Zeeman populations
gwd         projected joint readout with a gravitational-wave interferometer
fitting     damped least-squares engine and spectral models
io          spectrum and configuration files
estimators  scikit-learn style wrappers
cli         command line entry point
"""

from .core import (
    NoiseBudget,
    OscillatorParams,
    ProbeConfig,
    Spectrum,
    TensorConfig,
    budget_terms,
    psd_total,
    susceptibility,
)
from .detuning import DetuningScaling, optimal_detuning, squeezing_vs_detuning
from .estimators import MorsCalibrator, SpinNoiseRegressor
from .exceptions import (
    DivergenceError,
    DomainError,
    FitError,
    IndeterminateError,
    InstabilityError,
    NumericalError,
    OverSofteningError,
    RankDeficiencyError,
    SpectrumFormatError,
    SpinNoiseError,
    UsageError,
)
from .fitting import FitProblem, FitReport, fit_spectrum, model_psd
from .gwd import GwdConfig, interferometer_noise, joint_noise, projection_curves
from .io import emit, load_config, load_spectrum
from .mors import ZeemanLadder, ZeemanPopulations, fit_mors, mors_spectrum, polarization
from .squeeze import (
    effective_oscillator,
    force_normalized_spectrum,
    max_squeezing,
    optimize_squeezing,
)

__version__ = "0.1.0"

__all__ = [
    "NoiseBudget",
    "OscillatorParams",
    "ProbeConfig",
    "Spectrum",
    "TensorConfig",
    "budget_terms",
    "psd_total",
    "susceptibility",
    "DetuningScaling",
    "optimal_detuning",
    "squeezing_vs_detuning",
    "MorsCalibrator",
    "SpinNoiseRegressor",
    "DivergenceError",
    "DomainError",
    "FitError",
    "IndeterminateError",
    "InstabilityError",
    "NumericalError",
    "OverSofteningError",
    "RankDeficiencyError",
    "SpectrumFormatError",
    "SpinNoiseError",
    "UsageError",
    "FitProblem",
    "FitReport",
    "fit_spectrum",
    "model_psd",
    "GwdConfig",
    "interferometer_noise",
    "joint_noise",
    "projection_curves",
    "emit",
    "load_config",
    "load_spectrum",
    "ZeemanLadder",
    "ZeemanPopulations",
    "fit_mors",
    "mors_spectrum",
    "polarization",
    "effective_oscillator",
    "force_normalized_spectrum",
    "max_squeezing",
    "optimize_squeezing",
]
