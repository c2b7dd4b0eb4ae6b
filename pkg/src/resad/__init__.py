"""resad: federated reservoir-state anomaly detection for time series.

A fixed random reservoir turns each input window into a high-dimensional
state; anomaly scores are squared Mahalanobis distances of those states
from the distribution seen on normal training data.  Because the model is
a summed covariance, clients can train jointly by shipping one matrix per
round to a server whose aggregate equals the centralized fit exactly.
"""

from .config import ConfigError, RunConfig
from .data import (
    CsvSchema,
    DataFormatError,
    SyntheticSpec,
    TimeSeriesDataset,
    generate_synthetic,
    load_csv,
    normalize,
    partition,
)
from .detectors import ESNSREDetector, MDRSDetector
from .federation import (
    ClientUpdateMessage,
    FederationResult,
    FederationRun,
    GlobalKind,
    GlobalModelMessage,
    PayloadKind,
    ProtocolError,
    client_round,
    server_aggregate,
    server_aggregate_readout,
    simulate,
    training_states,
)
from .mdrs import (
    CovarianceAccumulator,
    PrecisionModel,
    accumulate,
    batch_precision,
    online_update,
    online_update_many,
    score,
)
from .metrics import (
    EvalReport,
    SeriesEval,
    UndefinedMetricError,
    auc_pr,
    auc_roc,
    mean_over_series,
)
from .readout import (
    ReadoutModel,
    ReadoutSufficientStats,
    aggregate_and_solve,
    client_stats,
    fit_ridge,
    sre_score,
)
from .reservoir import (
    DegenerateReservoirError,
    ReservoirSpec,
    ReservoirWeights,
    StateTrajectory,
    build_weights,
    run_reservoir,
    subsample,
)

__version__ = "0.1.0"

__all__ = [
    "ClientUpdateMessage",
    "ConfigError",
    "CovarianceAccumulator",
    "CsvSchema",
    "DataFormatError",
    "DegenerateReservoirError",
    "ESNSREDetector",
    "EvalReport",
    "FederationResult",
    "FederationRun",
    "GlobalKind",
    "GlobalModelMessage",
    "MDRSDetector",
    "PayloadKind",
    "PrecisionModel",
    "ProtocolError",
    "ReadoutModel",
    "ReadoutSufficientStats",
    "ReservoirSpec",
    "ReservoirWeights",
    "RunConfig",
    "SeriesEval",
    "StateTrajectory",
    "SyntheticSpec",
    "TimeSeriesDataset",
    "UndefinedMetricError",
    "accumulate",
    "aggregate_and_solve",
    "auc_pr",
    "auc_roc",
    "batch_precision",
    "build_weights",
    "client_round",
    "client_stats",
    "fit_ridge",
    "generate_synthetic",
    "load_csv",
    "mean_over_series",
    "normalize",
    "online_update",
    "online_update_many",
    "partition",
    "run_reservoir",
    "score",
    "server_aggregate",
    "server_aggregate_readout",
    "simulate",
    "sre_score",
    "subsample",
    "training_states",
]
