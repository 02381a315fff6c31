"""Simulator and analysis toolkit for a maser-based microwave receiver."""

from .analysis import (
    beat_frequency,
    detector_chain,
    enhancement_merit,
    fft_spectrum,
    fit_saturation,
    gain_db,
    responsivity_curve,
    sensitivity_estimate,
    snr_estimate,
)
from .calibration import (
    ConversionFactor,
    RabiDataset,
    b1_power_convert,
    conversion_factor_theory,
    fit_rabi_slope,
    rescale_conversion_factor,
)
from .configfile import load_config, parse_config, write_config
from .errors import (
    ConfigError,
    DomainError,
    FitError,
    NumericalBlowupError,
    ReceiverError,
    ResourceError,
    ScenarioError,
    StepSizeError,
    TruncationError,
)
from .lindblad import DensityMatrix, build_operators, evolve_lindblad, lindblad_rhs
from .meanfield import MeanFieldState, TimeTrace, integrate_batch, integrate_meanfield, meanfield_derivative
from .model import (
    CavityParams,
    DriveParams,
    PhysicalConstants,
    ReceiverConfig,
    SimSettings,
    SpinEnsembleParams,
    build_spin_ensemble,
    default_config,
    kappa_from_q,
    validate_config,
)
from .scenarios import (
    ScenarioResult,
    run_heterodyne_sweep,
    run_oracle_comparison,
    run_rabi_calibration,
    run_response_and_gain,
)

__version__ = "0.1.0"
