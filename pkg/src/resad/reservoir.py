"""Echo-state reservoir: deterministic construction and state evolution.

The reservoir is the shared, untrained feature map of the whole toolkit.  A
:class:`ReservoirSpec` holds everything needed to rebuild the weights, so
federation participants exchange only the spec (out of band) and never the
matrices themselves.  Construction draws from the portable generator in
:mod:`resad.prng` in a fixed order, documented on :func:`build_weights`, so
two processes holding equal specs produce bit-identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .prng import Xoshiro256StarStar
from .validation import ensure_matrix

POWER_ITERATIONS = 300
RADIUS_WINDOW = 50
MAX_REDRAWS = 8

# Generator stream ids (see resad.prng for the stream derivation).
_STREAM_W_IN = 0
_STREAM_W = 1  # redraw attempt a uses stream _STREAM_W + a
_STREAM_SUBSAMPLE = 16

SPEC_KEYS = (
    "n_input",
    "n_reservoir",
    "leak_rate",
    "spectral_radius",
    "input_scaling",
    "density",
    "seed",
    "subsample_size",
    "washout",
)


class DegenerateReservoirError(ValueError):
    """Raised when the sparse recurrent draw cannot yield a usable matrix."""


@dataclass(frozen=True)
class ReservoirSpec:
    """Shared reservoir hyperparameters plus the seed that fixes the weights.

    ``subsample_size`` is the number of reservoir nodes used for covariance
    accumulation and scoring; ``None`` means all nodes (subsampling off).
    ``washout`` states are dropped from the start of each training sequence
    before covariance accumulation; scoring always starts at the first step.
    """

    n_input: int
    n_reservoir: int
    leak_rate: float = 1.0
    spectral_radius: float = 0.95
    input_scaling: float = 0.001
    density: float = 0.1
    seed: int = 0
    subsample_size: int | None = None
    washout: int = 0

    def __post_init__(self):
        if self.n_input < 1:
            raise ValueError(f"n_input must be positive, got {self.n_input}")
        if self.n_reservoir < 1:
            raise ValueError(f"n_reservoir must be positive, got {self.n_reservoir}")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must be in (0, 1], got {self.leak_rate}")
        if self.spectral_radius <= 0.0:
            raise ValueError(f"spectral_radius must be positive, got {self.spectral_radius}")
        if self.input_scaling <= 0.0:
            raise ValueError(f"input_scaling must be positive, got {self.input_scaling}")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must be in (0, 1], got {self.density}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.subsample_size is None:
            object.__setattr__(self, "subsample_size", self.n_reservoir)
        if not 1 <= self.subsample_size <= self.n_reservoir:
            raise ValueError(
                f"subsample_size must be in [1, {self.n_reservoir}], got {self.subsample_size}"
            )
        if self.washout < 0:
            raise ValueError(f"washout must be >= 0, got {self.washout}")

    def to_mapping(self) -> dict:
        """Plain dict under the documented config key names."""
        return {k: getattr(self, k) for k in SPEC_KEYS}

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "ReservoirSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown reservoir keys: {sorted(unknown)}")
        return cls(**dict(mapping))


@dataclass(frozen=True, eq=False)
class ReservoirWeights:
    """Fixed weight matrices and the subsampling index set for one spec."""

    w_in: np.ndarray  # (n_reservoir, n_input) dense
    w: sp.csr_matrix  # (n_reservoir, n_reservoir) sparse
    subsample_indices: np.ndarray  # strictly increasing, dtype int64

    @property
    def n_reservoir(self) -> int:
        return self.w_in.shape[0]


def estimate_spectral_radius(
    w, n_iter: int = POWER_ITERATIONS, window: int = RADIUS_WINDOW
) -> float:
    """Power-iteration estimate of the spectral radius of ``w``.

    Deterministic by construction: all-ones start vector, ``n_iter`` fixed
    iterations, estimate taken as the geometric mean of the last ``window``
    per-step growth factors (which damps the oscillation a complex dominant
    eigenpair induces).  This estimator, not an eigensolver, defines the
    rescaling contract of :func:`build_weights`.
    """
    n = w.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    log_ratios = []
    for _ in range(n_iter):
        u = w @ v
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            return 0.0
        v = u / nu
        log_ratios.append(np.log(nu))
    return float(np.exp(np.mean(log_ratios[-window:])))


def build_weights(spec: ReservoirSpec) -> ReservoirWeights:
    """Generate the reservoir weights for ``spec``.

    Draw order (fixed; all values from :class:`~resad.prng.Xoshiro256StarStar`
    streams keyed on ``spec.seed``):

    1. stream 0: ``w_in`` entries row-major, each ``input_scaling * (2u - 1)``.
    2. stream ``1 + a`` for redraw attempt ``a``: first ``n**2`` uniforms
       row-major, entry (i, j) is structurally non-zero iff ``u < density``;
       then one uniform per structural non-zero in row-major order, with
       value ``2u - 1``.  The draw is rescaled so the estimated spectral
       radius equals ``spec.spectral_radius``; an estimate of zero triggers
       the next attempt (at most ``MAX_REDRAWS`` redraws).
    3. stream 16: partial Fisher-Yates shuffle of ``0..n-1`` selecting
       ``subsample_size`` indices (``j = i + floor(u * (n - i))``), reported
       sorted ascending.
    """
    n, m = spec.n_reservoir, spec.n_input

    gen = Xoshiro256StarStar.from_seed(spec.seed, _STREAM_W_IN)
    w_in = spec.input_scaling * (2.0 * gen.randoms(n * m) - 1.0)
    w_in = w_in.reshape(n, m)

    w = None
    for attempt in range(1 + MAX_REDRAWS):
        gen = Xoshiro256StarStar.from_seed(spec.seed, _STREAM_W + attempt)
        mask = gen.randoms(n * n) < spec.density
        flat = np.flatnonzero(mask)
        if flat.size == 0:
            raise DegenerateReservoirError(
                f"degenerate reservoir: density {spec.density} produced an all-zero "
                f"{n}x{n} recurrent matrix"
            )
        values = 2.0 * gen.randoms(flat.size) - 1.0
        rows, cols = np.divmod(flat, n)
        candidate = sp.csr_matrix((values, (rows, cols)), shape=(n, n))
        rho = estimate_spectral_radius(candidate)
        if rho > 0.0:
            w = candidate * (spec.spectral_radius / rho)
            break
    if w is None:
        raise DegenerateReservoirError(
            f"degenerate reservoir: spectral radius estimated zero after "
            f"{1 + MAX_REDRAWS} draws"
        )

    gen = Xoshiro256StarStar.from_seed(spec.seed, _STREAM_SUBSAMPLE)
    idx = list(range(n))
    for i in range(spec.subsample_size):
        j = i + int(gen.random() * (n - i))
        if j >= n:  # guard against a rounding edge at u -> 1
            j = n - 1
        idx[i], idx[j] = idx[j], idx[i]
    subsample = np.sort(np.asarray(idx[: spec.subsample_size], dtype=np.int64))

    return ReservoirWeights(w_in=w_in, w=w, subsample_indices=subsample)


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """Reservoir states over time for one input sequence; column t is x(t)."""

    states: np.ndarray  # (n_reservoir, T)
    initial_state: np.ndarray  # (n_reservoir,)

    @property
    def final_state(self) -> np.ndarray:
        if self.states.shape[1] == 0:
            return self.initial_state
        return self.states[:, -1]


def run_reservoir(
    weights: ReservoirWeights,
    spec: ReservoirSpec,
    inputs: np.ndarray,
    initial_state: np.ndarray | None = None,
) -> StateTrajectory:
    """Evolve the reservoir over ``inputs`` (shape (n_input, T)).

    x(0) = 0 unless ``initial_state`` is given (used to continue a sequence);
    then x(t) = (1 - leak_rate) x(t-1)
              + leak_rate * tanh(w_in u(t) + w x(t-1)), strictly in order.
    """
    inputs = ensure_matrix(inputs, "inputs")
    if inputs.shape[0] != spec.n_input:
        raise ValueError(
            f"inputs have {inputs.shape[0]} channels, spec expects {spec.n_input}"
        )
    bad = ~np.isfinite(inputs)
    if bad.any():
        t = int(np.flatnonzero(bad.any(axis=0))[0])
        raise ValueError(f"non-finite input at timestep column {t}")
    n, t_len = spec.n_reservoir, inputs.shape[1]
    if t_len < 1:
        raise ValueError("inputs must contain at least one timestep")

    if initial_state is None:
        x = np.zeros(n)
    else:
        x = np.array(initial_state, dtype=float, copy=True)
        if x.shape != (n,):
            raise ValueError(f"initial_state must have shape ({n},), got {x.shape}")

    alpha = spec.leak_rate
    keep = 1.0 - alpha
    feed = weights.w_in @ inputs
    w = weights.w
    states = np.empty((n, t_len))
    x0 = x.copy()
    for t in range(t_len):
        x = keep * x + alpha * np.tanh(feed[:, t] + w @ x)
        states[:, t] = x
    return StateTrajectory(states=states, initial_state=x0)


def subsample(trajectory, indices) -> np.ndarray:
    """Select state rows by index, preserving the order of ``indices``."""
    states = trajectory.states if isinstance(trajectory, StateTrajectory) else trajectory
    states = ensure_matrix(states, "states")
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1:
        raise ValueError("indices must be one-dimensional")
    n = states.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= n):
        raise IndexError(f"subsample index out of range for {n} rows")
    return states[indices, :].copy()
