"""Zero-set local time toolkit for self-similar processes.

Simulates fractional Brownian motion, Brownian motion, and the Rosenblatt
process on a uniform grid, estimates the local time at level zero by
occupation densities, inverts it into a pure-jump time-change, and checks
the predicted persistence decay and excursion-tail behaviour against
exact and simulated references.
"""

from .errors import (
    ConfigError,
    FitRangeError,
    InsufficientDataError,
    InsufficientMassError,
)
from .generators import (
    Family,
    ProcessSpec,
    SamplePath,
    derive_path_seed,
    fbm_covariance,
    fgn_covariance,
    rosenblatt_calibration,
    sample,
    sample_fbm,
    sample_rosenblatt,
)
from .invariance import (
    TestReport,
    bonferroni,
    ks_two_sample,
    bi_scale_test,
    stationarity_test,
    self_similarity_test,
)
from .localtime import (
    JumpFunction,
    LocalTimeProfile,
    atom_diagnostic,
    default_epsilon,
    estimate_local_time,
    inverse_time,
    invert_profile,
    persistence_indicator,
    support_diagnostic,
)
from .orchestration import (
    EnsembleSummary,
    ExperimentConfig,
    RunManifest,
    dump_paths,
    load_config,
    report,
    run_experiment,
    run_paths,
)
from .persistence import (
    ExponentFit,
    PersistenceCurve,
    bm_exact_persistence,
    fit_exponent,
    max_persistence_indicator,
    survival_curve,
    survival_from_events,
)
from .pointprocess import (
    FitMethod,
    IntensityFit,
    MarkedPointSet,
    count_heavy_subintervals,
    empp_to_jumps,
    hill_tail_index,
    intensity_ratio_test,
    jumps_to_empp,
    loglog_count_fit,
    rescale_empp,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConfigError",
    "FitRangeError",
    "InsufficientDataError",
    "InsufficientMassError",
    "Family",
    "ProcessSpec",
    "SamplePath",
    "derive_path_seed",
    "fbm_covariance",
    "fgn_covariance",
    "rosenblatt_calibration",
    "sample",
    "sample_fbm",
    "sample_rosenblatt",
    "LocalTimeProfile",
    "JumpFunction",
    "default_epsilon",
    "estimate_local_time",
    "inverse_time",
    "invert_profile",
    "persistence_indicator",
    "atom_diagnostic",
    "support_diagnostic",
    "MarkedPointSet",
    "FitMethod",
    "IntensityFit",
    "jumps_to_empp",
    "empp_to_jumps",
    "rescale_empp",
    "count_heavy_subintervals",
    "hill_tail_index",
    "loglog_count_fit",
    "intensity_ratio_test",
    "PersistenceCurve",
    "ExponentFit",
    "bm_exact_persistence",
    "survival_from_events",
    "survival_curve",
    "fit_exponent",
    "max_persistence_indicator",
    "TestReport",
    "ks_two_sample",
    "stationarity_test",
    "self_similarity_test",
    "bi_scale_test",
    "bonferroni",
    "ExperimentConfig",
    "EnsembleSummary",
    "RunManifest",
    "run_paths",
    "run_experiment",
    "dump_paths",
    "load_config",
    "report",
]
