"""Dataset ingestion, normalization, client partitioning, synthetic benchmarks.

Sequences are matrices of shape (n_channels, T).  Training data is presumed
normal (the semi-supervised premise); labels exist only on test sequences,
one 0/1 value per timestep.

CSV conventions: one file per sequence, one row per timestep, a header row
naming the columns.  A schema picks the channel columns (which is how
datasets with extraneous columns, e.g. one-hot command channels next to a
single telemetry channel, are reduced to the modeled channels) and names
the label column required on test files.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARTITION_POLICIES = ("by_sequence", "contiguous_chunks")
ANOMALY_KINDS = ("spike", "level_shift", "frequency_shift")


class DataFormatError(ValueError):
    """Malformed input data; the message carries file and line context."""


@dataclass(frozen=True)
class CsvSchema:
    """Column selection for CSV ingestion."""

    channels: tuple[str, ...]
    label: str = "label"

    def __post_init__(self):
        if not self.channels:
            raise ValueError("schema must name at least one channel column")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("duplicate channel columns in schema")
        object.__setattr__(self, "channels", tuple(self.channels))

    @classmethod
    def from_json(cls, path) -> "CsvSchema":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(channels=tuple(raw["channels"]), label=raw.get("label", "label"))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"channels": list(self.channels), "label": self.label}, fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Train sequences, labeled test sequences, and fitted normalization stats."""

    train_sequences: tuple  # of (n_channels, T) arrays
    test_sequences: tuple  # of (inputs, labels) pairs
    channel_names: tuple[str, ...]
    normalization: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "train_sequences", tuple(self.train_sequences))
        object.__setattr__(self, "test_sequences", tuple(self.test_sequences))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        n = len(self.channel_names)
        for seq in self.train_sequences:
            if seq.shape[0] != n:
                raise ValueError(
                    f"train sequence has {seq.shape[0]} channels, expected {n}"
                )
        for inputs, labels in self.test_sequences:
            if inputs.shape[0] != n:
                raise ValueError(
                    f"test sequence has {inputs.shape[0]} channels, expected {n}"
                )
            if labels.shape != (inputs.shape[1],):
                raise ValueError(
                    f"label vector shape {labels.shape} does not match "
                    f"sequence length {inputs.shape[1]}"
                )

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)


def _parse_csv(path, schema: CsvSchema, *, require_label: bool):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        col_index = {}
        for name in schema.channels:
            if name not in header:
                raise DataFormatError(f"{path}: missing channel column {name!r}")
            col_index[name] = header.index(name)
        label_index = None
        if require_label:
            if schema.label not in header:
                raise DataFormatError(
                    f"{path}: test file is missing label column {schema.label!r}"
                )
            label_index = header.index(schema.label)

        columns = [[] for _ in schema.channels]
        labels = []
        width = len(header)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != width:
                raise DataFormatError(
                    f"{path}:{line_no}: expected {width} fields, got {len(row)}"
                )
            for k, name in enumerate(schema.channels):
                cell = row[col_index[name]]
                try:
                    columns[k].append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{line_no}: non-numeric value {cell!r} "
                        f"in column {name!r}"
                    )
            if label_index is not None:
                cell = row[label_index]
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{line_no}: non-numeric label {cell!r}"
                    )
                if value not in (0.0, 1.0):
                    raise DataFormatError(
                        f"{path}:{line_no}: label must be 0 or 1, got {cell!r}"
                    )
                labels.append(int(value))
    if not columns[0]:
        raise DataFormatError(f"{path}: no data rows")
    matrix = np.asarray(columns, dtype=float)
    label_vec = np.asarray(labels, dtype=np.int8) if require_label else None
    return matrix, label_vec


def load_csv(train_paths, test_paths, schema: CsvSchema) -> TimeSeriesDataset:
    """Load one sequence per file; test files must carry the label column."""
    train = [_parse_csv(p, schema, require_label=False)[0] for p in train_paths]
    test = []
    for p in test_paths:
        matrix, labels = _parse_csv(p, schema, require_label=True)
        test.append((matrix, labels))
    return TimeSeriesDataset(
        train_sequences=train, test_sequences=test, channel_names=schema.channels
    )


def normalize(dataset: TimeSeriesDataset, method: str = "minmax") -> TimeSeriesDataset:
    """Per-channel normalization fitted on training data only.

    ``minmax`` maps the training range to [0, 1]; ``zscore`` standardizes to
    training mean/std.  Channels with zero training range (or std) pass
    through unchanged with a warning.
    """
    if method not in ("minmax", "zscore"):
        raise ValueError(f"unknown normalization method {method!r}")
    if not dataset.train_sequences:
        raise ValueError("cannot fit normalization without training sequences")
    pooled = np.concatenate(dataset.train_sequences, axis=1)
    if method == "minmax":
        lo = pooled.min(axis=1)
        hi = pooled.max(axis=1)
        degenerate = hi - lo == 0.0
        stats = {"method": "minmax", "lo": lo.tolist(), "hi": hi.tolist()}
    else:
        mean = pooled.mean(axis=1)
        std = pooled.std(axis=1)
        degenerate = std == 0.0
        stats = {"method": "zscore", "mean": mean.tolist(), "std": std.tolist()}
    if degenerate.any():
        names = [dataset.channel_names[i] for i in np.flatnonzero(degenerate)]
        warnings.warn(
            f"channels with zero {'range' if method == 'minmax' else 'variance'} "
            f"left unchanged: {names}"
        )
    return TimeSeriesDataset(
        train_sequences=[apply_normalization(s, stats) for s in dataset.train_sequences],
        test_sequences=[(apply_normalization(x, stats), y) for x, y in dataset.test_sequences],
        channel_names=dataset.channel_names,
        normalization=stats,
    )


def apply_normalization(seq: np.ndarray, stats: dict | None) -> np.ndarray:
    """Apply previously fitted normalization stats to one sequence."""
    if stats is None:
        return seq
    if stats["method"] == "minmax":
        lo = np.asarray(stats["lo"])
        hi = np.asarray(stats["hi"])
        span = hi - lo
        degenerate = span == 0.0
        shift = np.where(degenerate, 0.0, lo)
        scale = np.where(degenerate, 1.0, span)
    elif stats["method"] == "zscore":
        mean = np.asarray(stats["mean"])
        std = np.asarray(stats["std"])
        degenerate = std == 0.0
        shift = np.where(degenerate, 0.0, mean)
        scale = np.where(degenerate, 1.0, std)
    else:
        raise ValueError(f"unknown normalization method {stats['method']!r}")
    if shift.shape[0] != seq.shape[0]:
        raise ValueError(
            f"normalization stats cover {shift.shape[0]} channels, "
            f"sequence has {seq.shape[0]}"
        )
    return (seq - shift[:, None]) / scale[:, None]


def partition(
    dataset: TimeSeriesDataset, n_clients: int, policy: str = "by_sequence"
) -> list[TimeSeriesDataset]:
    """Split training data across clients; together the parts cover it exactly.

    ``by_sequence`` deals whole sequences round-robin.  ``contiguous_chunks``
    splits a single long sequence into near-equal contiguous chunks, the last
    client absorbing the remainder; each chunk is treated as its own sequence
    (the reservoir state resets at chunk boundaries).
    """
    if policy not in PARTITION_POLICIES:
        raise ValueError(f"unknown partition policy {policy!r}")
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if policy == "by_sequence":
        if n_clients > len(dataset.train_sequences):
            raise ValueError(
                f"cannot deal {len(dataset.train_sequences)} sequences to "
                f"{n_clients} clients"
            )
        assignments = [list(dataset.train_sequences[i::n_clients]) for i in range(n_clients)]
    else:
        if len(dataset.train_sequences) != 1:
            raise ValueError(
                "contiguous_chunks requires exactly one training sequence, "
                f"got {len(dataset.train_sequences)}"
            )
        seq = dataset.train_sequences[0]
        t_len = seq.shape[1]
        base = t_len // n_clients
        if base < 1:
            raise ValueError(
                f"cannot chunk {t_len} timesteps into {n_clients} clients"
            )
        assignments = []
        for i in range(n_clients):
            stop = (i + 1) * base if i < n_clients - 1 else t_len
            assignments.append([seq[:, i * base : stop]])
    return [
        TimeSeriesDataset(
            train_sequences=part,
            test_sequences=(),
            channel_names=dataset.channel_names,
            normalization=dataset.normalization,
        )
        for part in assignments
    ]


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale benchmark: sums of sinusoids with injected anomalies."""

    n_channels: int = 3
    n_train_series: int = 24
    train_length: int = 400
    n_test_series: int = 4
    test_length: int = 600
    seed: int = 0
    anomaly_kinds: tuple[str, ...] = ("spike", "level_shift")
    anomalies_per_series: int = 4
    duration_range: tuple[int, int] = (4, 24)
    magnitude: float = 3.0
    noise_scale: float = 0.03

    def __post_init__(self):
        object.__setattr__(self, "anomaly_kinds", tuple(self.anomaly_kinds))
        object.__setattr__(self, "duration_range", tuple(self.duration_range))
        for k in self.anomaly_kinds:
            if k not in ANOMALY_KINDS:
                raise ValueError(f"unknown anomaly kind {k!r}")
        if min(self.n_channels, self.n_train_series, self.train_length,
               self.n_test_series, self.test_length) < 1:
            raise ValueError("all synthetic sizes must be positive")
        lo, hi = self.duration_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad duration_range {self.duration_range}")
        if hi >= self.test_length:
            raise ValueError("anomaly duration does not fit the test length")
        if self.anomalies_per_series < 0:
            raise ValueError("anomalies_per_series must be >= 0")
        if self.magnitude <= 0:
            raise ValueError("magnitude must be positive")

    def to_mapping(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "n_train_series": self.n_train_series,
            "train_length": self.train_length,
            "n_test_series": self.n_test_series,
            "test_length": self.test_length,
            "seed": self.seed,
            "anomaly_kinds": list(self.anomaly_kinds),
            "anomalies_per_series": self.anomalies_per_series,
            "duration_range": list(self.duration_range),
            "magnitude": self.magnitude,
            "noise_scale": self.noise_scale,
        }

    @classmethod
    def from_mapping(cls, mapping) -> "SyntheticSpec":
        raw = dict(mapping)
        if "anomaly_kinds" in raw:
            raw["anomaly_kinds"] = tuple(raw["anomaly_kinds"])
        if "duration_range" in raw:
            raw["duration_range"] = tuple(raw["duration_range"])
        return cls(**raw)


def _channel_profiles(rng: np.random.Generator, n_channels: int):
    profiles = []
    for _ in range(n_channels):
        n_components = int(rng.integers(2, 4))
        amps = rng.uniform(0.4, 1.0, size=n_components)
        freqs = 1.0 / rng.uniform(20.0, 200.0, size=n_components)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n_components)
        profiles.append((amps, freqs, phases))
    return profiles


def _render_series(profiles, length: int, rng: np.random.Generator, noise_scale: float):
    t = np.arange(length)
    series = np.empty((len(profiles), length))
    for c, (amps, freqs, phases) in enumerate(profiles):
        offset = rng.uniform(0.0, 1000.0)  # decorrelates phase across series
        series[c] = sum(
            a * np.sin(2.0 * np.pi * f * (t + offset) + p)
            for a, f, p in zip(amps, freqs, phases)
        )
    series += rng.normal(scale=noise_scale, size=series.shape)
    return series


def inject_anomaly(
    series: np.ndarray,
    labels: np.ndarray,
    kind: str,
    start: int,
    duration: int,
    magnitude: float,
    channel: int = 0,
    sign: float = 1.0,
    frequency: float = 0.25,
) -> None:
    """Inject one labeled anomaly segment in place on [start, start+duration).

    ``spike`` and ``level_shift`` add a constant offset of ``sign*magnitude``
    (spikes are just short segments); ``frequency_shift`` replaces the
    channel segment with a sinusoid of the given frequency and amplitude
    ``magnitude``.
    """
    if kind not in ANOMALY_KINDS:
        raise ValueError(f"unknown anomaly kind {kind!r}")
    stop = start + duration
    if not (0 <= start < stop <= series.shape[1]):
        raise ValueError(
            f"anomaly segment [{start}, {stop}) out of bounds for length {series.shape[1]}"
        )
    if kind in ("spike", "level_shift"):
        series[channel, start:stop] += sign * magnitude
    else:
        local_t = np.arange(duration)
        series[channel, start:stop] = magnitude * np.sin(
            2.0 * np.pi * frequency * local_t
        )
    labels[start:stop] = 1


def _place_segments(rng, length, count, duration_range, margin=2):
    """Non-overlapping segments, rejection-sampled; deterministic given rng."""
    segments = []
    attempts = 0
    while len(segments) < count:
        attempts += 1
        if attempts > 200 * max(count, 1):
            raise ValueError(
                f"could not place {count} non-overlapping anomalies of length "
                f"{duration_range} in {length} steps"
            )
        duration = int(rng.integers(duration_range[0], duration_range[1] + 1))
        if length - duration - margin <= margin:
            continue
        start = int(rng.integers(margin, length - duration - margin))
        if all(start + duration + margin <= s or s + d + margin <= start
               for s, d in segments):
            segments.append((start, duration))
    return sorted(segments)


def generate_synthetic(spec: SyntheticSpec) -> TimeSeriesDataset:
    """Deterministic benchmark: anomaly-free training, labeled anomalous test."""
    rng = np.random.default_rng(spec.seed)
    profiles = _channel_profiles(rng, spec.n_channels)
    train = [
        _render_series(profiles, spec.train_length, rng, spec.noise_scale)
        for _ in range(spec.n_train_series)
    ]
    test = []
    for _ in range(spec.n_test_series):
        series = _render_series(profiles, spec.test_length, rng, spec.noise_scale)
        labels = np.zeros(spec.test_length, dtype=np.int8)
        if spec.anomalies_per_series:
            segments = _place_segments(
                rng, spec.test_length, spec.anomalies_per_series, spec.duration_range
            )
            for start, duration in segments:
                kind = spec.anomaly_kinds[int(rng.integers(len(spec.anomaly_kinds)))]
                channel = int(rng.integers(spec.n_channels))
                sign = 1.0 if rng.random() < 0.5 else -1.0
                dominant = profiles[channel][1].max()
                inject_anomaly(
                    series,
                    labels,
                    kind,
                    start,
                    duration,
                    spec.magnitude,
                    channel=channel,
                    sign=sign,
                    frequency=min(4.0 * dominant, 0.4),
                )
        test.append((series, labels))
    names = tuple(f"ch{c}" for c in range(spec.n_channels))
    return TimeSeriesDataset(
        train_sequences=train, test_sequences=test, channel_names=names
    )


def write_csv_dataset(dataset: TimeSeriesDataset, directory, schema: CsvSchema | None = None):
    """Write one CSV per sequence plus the schema file; returns the schema.

    Train files carry the channel columns; test files add the label column.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if schema is None:
        schema = CsvSchema(channels=dataset.channel_names)
    header = ",".join(schema.channels)

    def fmt(values):
        return ",".join(repr(float(v)) for v in values)

    for i, seq in enumerate(dataset.train_sequences):
        lines = [header]
        lines += [fmt(seq[:, t]) for t in range(seq.shape[1])]
        (directory / f"train_{i:03d}.csv").write_text("\n".join(lines) + "\n")
    for i, (seq, labels) in enumerate(dataset.test_sequences):
        lines = [header + "," + schema.label]
        lines += [
            fmt(seq[:, t]) + f",{int(labels[t])}" for t in range(seq.shape[1])
        ]
        (directory / f"test_{i:03d}.csv").write_text("\n".join(lines) + "\n")
    schema.to_json(directory / "schema.json")
    return schema
