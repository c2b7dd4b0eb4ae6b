"""Ridge readout and squared-reconstruction-error scoring (the ESN baseline).

The readout solves w_out = D X^T (X X^T + beta I)^-1 for states X and
targets D.  Both factors D X^T and X X^T are additive over data, which is
what lets clients ship them as sufficient statistics and the server solve
once on the sums.

Regularizer placement: client statistics carry the raw ``X X^T``; beta is
added exactly once at solve time.  That makes the aggregated solution equal
the pooled-data solve for any number of clients.  ``beta_per_client=True``
instead adds one beta per contributing client (total ``C * beta``), matching
protocols that regularize on the client side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .validation import ensure_matrix


@dataclass(frozen=True, eq=False)
class ReadoutModel:
    """Trained linear readout."""

    w_out: np.ndarray  # (n_output, n_state)
    beta: float


@dataclass(frozen=True, eq=False)
class ReadoutSufficientStats:
    """Additive readout statistics: a = D X^T, b = X X^T (unregularized)."""

    a: np.ndarray  # (n_output, n_state)
    b: np.ndarray  # (n_state, n_state) symmetric PSD

    @property
    def n_state(self) -> int:
        return self.b.shape[0]


def _check_beta(beta: float) -> None:
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")


def _solve(a: np.ndarray, b_reg: np.ndarray, beta: float) -> ReadoutModel:
    factor = scipy.linalg.cho_factor(b_reg, lower=True, check_finite=False)
    w_out = scipy.linalg.cho_solve(factor, a.T, check_finite=False).T
    return ReadoutModel(w_out=np.ascontiguousarray(w_out), beta=beta)


def fit_ridge(states, targets, beta: float) -> ReadoutModel:
    """Centralized ridge fit on one pooled state/target pair."""
    _check_beta(beta)
    stats = client_stats(states, targets)
    return aggregate_and_solve([stats], beta)


def client_stats(states, targets) -> ReadoutSufficientStats:
    """Sufficient statistics of one client's data (regularizer deferred)."""
    states = ensure_matrix(states, "states")
    targets = ensure_matrix(targets, "targets")
    if states.shape[1] != targets.shape[1]:
        raise ValueError(
            f"states have {states.shape[1]} timesteps, targets {targets.shape[1]}"
        )
    if states.shape[1] < 1:
        raise ValueError("at least one timestep is required")
    b = states @ states.T
    return ReadoutSufficientStats(a=targets @ states.T, b=0.5 * (b + b.T))


def add_stats(
    s1: ReadoutSufficientStats, s2: ReadoutSufficientStats
) -> ReadoutSufficientStats:
    """Fieldwise sum; statistics over the concatenation of the two datasets."""
    if s1.n_state != s2.n_state or s1.a.shape != s2.a.shape:
        raise ValueError("sufficient statistics have mismatched shapes")
    return ReadoutSufficientStats(a=s1.a + s2.a, b=s1.b + s2.b)


def aggregate_and_solve(
    stats: Sequence[ReadoutSufficientStats],
    beta: float,
    beta_per_client: bool = False,
) -> ReadoutModel:
    """Sum client statistics (in the order given) and solve the ridge system.

    Callers that need a canonical result across arrival orders must sort the
    list by client id first; the federation server does.
    """
    _check_beta(beta)
    if not stats:
        raise ValueError("no client statistics to aggregate")
    n_state = stats[0].n_state
    out_shape = stats[0].a.shape
    a = np.zeros(out_shape)
    b = np.zeros((n_state, n_state))
    for s in stats:
        if s.n_state != n_state or s.a.shape != out_shape:
            raise ValueError("inconsistent statistic dimensions across clients")
        a += s.a
        b += s.b
    multiplier = len(stats) if beta_per_client else 1
    b += (multiplier * beta) * np.eye(n_state)
    return _solve(a, b, beta)


def sre_score(model: ReadoutModel, states, inputs) -> np.ndarray:
    """Squared reconstruction error per timestep, ||u(t) - w_out x(t)||^2."""
    states = ensure_matrix(states, "states")
    inputs = ensure_matrix(inputs, "inputs")
    if states.shape[1] != inputs.shape[1]:
        raise ValueError(
            f"states have {states.shape[1]} timesteps, inputs {inputs.shape[1]}"
        )
    if states.shape[0] != model.w_out.shape[1]:
        raise ValueError(
            f"states have dimension {states.shape[0]}, "
            f"readout expects {model.w_out.shape[1]}"
        )
    if inputs.shape[0] != model.w_out.shape[0]:
        raise ValueError(
            f"inputs have {inputs.shape[0]} channels, "
            f"readout reconstructs {model.w_out.shape[0]}"
        )
    residual = inputs - model.w_out @ states
    return np.einsum("it,it->t", residual, residual)
