"""Scikit-learn style detectors over the reservoir/scoring core.

Estimator inputs follow sklearn conventions: a sequence is an array of shape
``(n_timesteps, n_channels)`` (the numerical core works channels-first; the
boundary transposes).  ``fit`` accepts one sequence or a list of sequences,
all presumed normal.  Scores are per timestep.

``anomaly_score`` returns the toolkit's native quantity (non-negative,
higher means more anomalous); ``score_samples`` returns its negation to
match the sklearn outlier-detector convention (lower means more abnormal).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import mdrs, readout
from .reservoir import ReservoirSpec, build_weights, run_reservoir, subsample


def _as_sequences(X, n_features: int | None = None) -> list[np.ndarray]:
    """Validate input as a list of (T, n_channels) arrays."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        candidates = [X]
    elif isinstance(X, (list, tuple)):
        candidates = list(X)
        if not candidates:
            raise ValueError("at least one sequence is required")
    else:
        candidates = [X]
    out = []
    for x in candidates:
        x = check_array(x, dtype=np.float64)
        if n_features is not None and x.shape[1] != n_features:
            raise ValueError(
                f"sequence has {x.shape[1]} features, expected {n_features}"
            )
        n_features = x.shape[1]
        out.append(x)
    return out


class _ReservoirDetector(BaseEstimator):
    """Shared reservoir construction for the concrete detectors."""

    def _make_spec(self, n_input: int, subsample_size) -> ReservoirSpec:
        return ReservoirSpec(
            n_input=n_input,
            n_reservoir=self.n_reservoir,
            leak_rate=self.leak_rate,
            spectral_radius=self.spectral_radius,
            input_scaling=self.input_scaling,
            density=self.density,
            seed=self.seed,
            subsample_size=subsample_size,
            washout=self.washout,
        )


class MDRSDetector(_ReservoirDetector):
    """Semi-supervised detector scoring squared Mahalanobis distance of
    reservoir states against the training-state distribution.

    Parameters
    ----------
    n_reservoir : int
        Number of reservoir nodes.
    leak_rate : float in (0, 1]
        State update interpolation coefficient.
    spectral_radius : float
        Target spectral radius of the recurrent matrix.
    input_scaling : float
        Range of the input weights; small values keep states near zero,
        which the zero-mean scoring assumes.
    density : float in (0, 1]
        Fraction of non-zero recurrent weights.
    subsample_size : int or None
        Number of reservoir nodes used for covariance and scoring
        (None: all).  Shrinks both compute and the federated payload.
    washout : int
        Training states dropped at the start of each sequence before
        covariance accumulation.
    delta : float
        Regularizer of the precision matrix.
    fit_mode : {"batch", "online"}
        One Cholesky solve over the accumulated covariance, or rank-1
        updates per training state.  Equivalent results; online suits
        streaming, batch is cheaper when data arrives up front.
    seed : int
        Seed for the deterministic weight generation.
    """

    def __init__(
        self,
        n_reservoir: int = 500,
        leak_rate: float = 1.0,
        spectral_radius: float = 0.95,
        input_scaling: float = 0.001,
        density: float = 0.1,
        subsample_size: int | None = None,
        washout: int = 0,
        delta: float = 1e-4,
        fit_mode: str = "batch",
        seed: int = 0,
    ):
        self.n_reservoir = n_reservoir
        self.leak_rate = leak_rate
        self.spectral_radius = spectral_radius
        self.input_scaling = input_scaling
        self.density = density
        self.subsample_size = subsample_size
        self.washout = washout
        self.delta = delta
        self.fit_mode = fit_mode
        self.seed = seed

    def _init_state(self, n_features: int) -> None:
        if self.fit_mode not in ("batch", "online"):
            raise ValueError(f"fit_mode must be 'batch' or 'online', got {self.fit_mode!r}")
        self.spec_ = self._make_spec(n_features, self.subsample_size)
        self.weights_ = build_weights(self.spec_)
        self.n_features_in_ = n_features
        dim = self.spec_.subsample_size
        self.accumulator_ = mdrs.CovarianceAccumulator.zero(dim)
        self.model_ = mdrs.PrecisionModel.initial(dim, self.delta)

    def _training_states(self, sequence: np.ndarray) -> np.ndarray:
        trajectory = run_reservoir(self.weights_, self.spec_, sequence.T)
        states = subsample(trajectory, self.weights_.subsample_indices)
        return states[:, self.spec_.washout :]

    def fit(self, X, y=None):
        """Fit on normal training sequences."""
        sequences = _as_sequences(X)
        self._init_state(sequences[0].shape[1])
        return self._ingest(sequences)

    def partial_fit(self, X, y=None):
        """Fold additional normal sequences into the fitted model."""
        if not hasattr(self, "model_"):
            return self.fit(X, y)
        sequences = _as_sequences(X, self.n_features_in_)
        return self._ingest(sequences)

    def _ingest(self, sequences) -> "MDRSDetector":
        for seq in sequences:
            states = self._training_states(seq)
            self.accumulator_ = mdrs.accumulate(self.accumulator_, states)
            if self.fit_mode == "online":
                self.model_ = mdrs.online_update_many(self.model_, states)
        if self.fit_mode == "batch":
            self.model_ = mdrs.batch_precision(self.accumulator_, self.delta)
        return self

    def anomaly_score(self, X) -> np.ndarray:
        """Per-timestep squared Mahalanobis distance (higher = more anomalous)."""
        check_is_fitted(self, "model_")
        (sequence,) = _as_sequences(X, self.n_features_in_)
        trajectory = run_reservoir(self.weights_, self.spec_, sequence.T)
        states = subsample(trajectory, self.weights_.subsample_indices)
        return mdrs.score(self.model_, states)

    def score_samples(self, X) -> np.ndarray:
        """Negated anomaly score, per the sklearn convention."""
        return -self.anomaly_score(X)


class ESNSREDetector(_ReservoirDetector):
    """Reconstruction-error baseline: a ridge readout is trained to
    reproduce the input from the reservoir state, and the squared
    reconstruction error is the anomaly score.
    """

    def __init__(
        self,
        n_reservoir: int = 500,
        leak_rate: float = 1.0,
        spectral_radius: float = 0.95,
        input_scaling: float = 0.001,
        density: float = 0.1,
        washout: int = 0,
        beta: float = 1e-4,
        seed: int = 0,
    ):
        self.n_reservoir = n_reservoir
        self.leak_rate = leak_rate
        self.spectral_radius = spectral_radius
        self.input_scaling = input_scaling
        self.density = density
        self.washout = washout
        self.beta = beta
        self.seed = seed

    def _init_state(self, n_features: int) -> None:
        # reconstruction always uses the full reservoir; no subsampling here
        self.spec_ = self._make_spec(n_features, None)
        self.weights_ = build_weights(self.spec_)
        self.n_features_in_ = n_features
        self.stats_ = readout.ReadoutSufficientStats(
            a=np.zeros((n_features, self.n_reservoir)),
            b=np.zeros((self.n_reservoir, self.n_reservoir)),
        )

    def fit(self, X, y=None):
        sequences = _as_sequences(X)
        self._init_state(sequences[0].shape[1])
        return self._ingest(sequences)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "stats_"):
            return self.fit(X, y)
        sequences = _as_sequences(X, self.n_features_in_)
        return self._ingest(sequences)

    def _ingest(self, sequences) -> "ESNSREDetector":
        for seq in sequences:
            inputs = seq.T
            trajectory = run_reservoir(self.weights_, self.spec_, inputs)
            states = trajectory.states[:, self.spec_.washout :]
            targets = inputs[:, self.spec_.washout :]
            if states.shape[1] == 0:
                continue
            self.stats_ = readout.add_stats(
                self.stats_, readout.client_stats(states, targets)
            )
        self.model_ = readout.aggregate_and_solve([self.stats_], self.beta)
        return self

    def anomaly_score(self, X) -> np.ndarray:
        """Per-timestep squared reconstruction error."""
        check_is_fitted(self, "model_")
        (sequence,) = _as_sequences(X, self.n_features_in_)
        inputs = sequence.T
        trajectory = run_reservoir(self.weights_, self.spec_, inputs)
        return readout.sre_score(self.model_, trajectory.states, inputs)

    def score_samples(self, X) -> np.ndarray:
        """Negated anomaly score, per the sklearn convention."""
        return -self.anomaly_score(X)
