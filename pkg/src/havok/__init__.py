"""Linear models in delay coordinates with intermittent forcing for chaotic time series."""

from .analysis import activity, detect_transitions, excess_kurtosis, lead_time_stats, tail_report
from .embedding import build_hankel, decompose, select_rank, svd_direct
from .model import (
    HavokModel, ModelError, eigenvalues, extract_forcing, fit, idealized_lorenz_model,
    load_model, save_model, simulate as simulate_model,
)
from .regression import SindyLibrarySpec, dmd, fit_linear, sindy, stlsq
from .systems import SystemSpec, default_spec, measure, simulate
from .timeseries import TimeSeries, Trajectory, interpolate_linear, load_csv, write_csv
from .transfer import BoxGrid, almost_invariant_sets, partition_overlap, reversibilize, ulam_matrix

__version__ = "0.1.0"
