"""Mahalanobis scoring of reservoir states.

Training reduces to accumulating the uncentered state covariance
``phi = sum_t x(t) x(t)^T`` (the quantity a federation client ships to the
server) and inverting its regularized form once, ``p = (phi + delta I)^-1``.
The anomaly score of a state is the quadratic form ``x^T p x``; the state
mean is taken as zero, which the tiny default input scaling keeps honest.

Covariance accumulation is exactly additive, so accumulators built over
disjoint data merge by summation in any fixed order.  The precision matrix
can equivalently be maintained online with a rank-1 downdate per state
vector (O(d^2) per step instead of one O(d^3) solve); both paths agree to
floating-point accuracy and both are exposed.

Every product, inverse, and update is followed by an explicit
symmetrization ``(m + m^T) / 2``: rank-1 updates drift asymmetric in
floating point and the drift compounds over long streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .validation import ensure_matrix, ensure_square, ensure_vector


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class CovarianceAccumulator:
    """Running uncentered covariance of state vectors; the client-side model."""

    phi: np.ndarray  # (dim, dim) symmetric PSD
    count: int  # number of state vectors accumulated

    @classmethod
    def zero(cls, dim: int) -> "CovarianceAccumulator":
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        return cls(phi=np.zeros((dim, dim)), count=0)

    @property
    def dim(self) -> int:
        return self.phi.shape[0]


def accumulate(acc: CovarianceAccumulator, states) -> CovarianceAccumulator:
    """Add the outer products of the state columns to the accumulator."""
    states = ensure_matrix(states, "states")
    if states.shape[0] != acc.dim:
        raise ValueError(
            f"states have dimension {states.shape[0]}, accumulator has {acc.dim}"
        )
    phi = _symmetrize(acc.phi + states @ states.T)
    return CovarianceAccumulator(phi=phi, count=acc.count + states.shape[1])


def merge(a: CovarianceAccumulator, b: CovarianceAccumulator) -> CovarianceAccumulator:
    """Combine accumulators built over disjoint data."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return CovarianceAccumulator(phi=_symmetrize(a.phi + b.phi), count=a.count + b.count)


@dataclass(frozen=True, eq=False)
class PrecisionModel:
    """Regularized inverse covariance of training states; the scoring model."""

    p: np.ndarray  # (dim, dim) symmetric positive definite
    delta: float  # regularizer used to build p

    @property
    def dim(self) -> int:
        return self.p.shape[0]

    @classmethod
    def initial(cls, dim: int, delta: float) -> "PrecisionModel":
        """The empty-data model, I / delta."""
        _check_delta(delta)
        return cls(p=np.eye(dim) / delta, delta=delta)


def _check_delta(delta: float) -> None:
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")


def batch_precision(acc: CovarianceAccumulator, delta: float) -> PrecisionModel:
    """Invert ``phi + delta I`` via a Cholesky solve."""
    _check_delta(delta)
    g = acc.phi + delta * np.eye(acc.dim)
    try:
        factor = scipy.linalg.cho_factor(g, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        # impossible for PSD phi and delta > 0; means the accumulator is corrupt
        raise ValueError(f"covariance is not positive definite under delta={delta}: {exc}")
    p = scipy.linalg.cho_solve(factor, np.eye(acc.dim), check_finite=False)
    return PrecisionModel(p=_symmetrize(p), delta=delta)


def online_update(model: PrecisionModel, x) -> PrecisionModel:
    """Fold one training state into the precision matrix (rank-1 downdate).

    p' = p - (p x x^T p) / (1 + x^T p x); the denominator is >= 1 because p
    is positive definite, so the update never divides by a small number.
    """
    x = ensure_vector(x, "x")
    if x.shape[0] != model.dim:
        raise ValueError(f"x has dimension {x.shape[0]}, model has {model.dim}")
    px = model.p @ x
    denom = 1.0 + float(x @ px)
    p = _symmetrize(model.p - np.outer(px, px) / denom)
    return PrecisionModel(p=p, delta=model.delta)


def online_update_many(model: PrecisionModel, states) -> PrecisionModel:
    """Fold each state column in order; equal to repeated :func:`online_update`."""
    states = ensure_matrix(states, "states")
    if states.shape[0] != model.dim:
        raise ValueError(
            f"states have dimension {states.shape[0]}, model has {model.dim}"
        )
    p = model.p.copy()
    for t in range(states.shape[1]):
        x = states[:, t]
        px = p @ x
        denom = 1.0 + float(x @ px)
        p -= np.outer(px, px) / denom
        p = _symmetrize(p)
    return PrecisionModel(p=p, delta=model.delta)


def score(model: PrecisionModel, states) -> np.ndarray:
    """Squared Mahalanobis distance of each state column, x(t)^T p x(t)."""
    states = ensure_matrix(states, "states")
    if states.shape[0] != model.dim:
        raise ValueError(
            f"states have dimension {states.shape[0]}, model has {model.dim}"
        )
    return np.einsum("it,it->t", states, model.p @ states)


def precision_model_from_matrix(p, delta: float) -> PrecisionModel:
    """Wrap an existing precision matrix (e.g. decoded from the wire)."""
    _check_delta(delta)
    return PrecisionModel(p=_symmetrize(ensure_square(p, "p")), delta=delta)
