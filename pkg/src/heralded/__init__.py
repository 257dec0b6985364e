"""Heralded photon number states from pulsed down-conversion and photon-number-resolving detection."""

__version__ = "0.1.0"

from .detector import DeadSpot, DetectorConfig, LossMatrix, dark_matrix, forward_matrix, loss_matrix
from .experiment import ExperimentConfig, ScaWindows, default_windows, run_experiment, run_pulse
from .histogram import Histogram
from .metrics import (
    CoincidenceCounts,
    calibrate_slope,
    generation_rate,
    heralded_fidelity,
    klyshko_efficiency,
    posterior_oracle,
    sweep,
)
from .reconstruct import (
    condition_report,
    detected_distribution,
    fit_peaks,
    invert_counts,
    invert_counts_constrained,
)
from .stats import PhotonNumberDistribution, PumpCalibration, SourceModel, pair_distribution, pair_pmf
