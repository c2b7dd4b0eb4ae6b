"""Run configuration: one JSON file drives every CLI command.

The file is plain structured key-value text.  Top-level keys:

    method         "mdrs" | "esn_sre"
    mode           "centralized" | "incfed"
    reservoir      mapping under the documented reservoir key names
                   (n_input may be omitted; it is inferred from the data)
    delta, beta    regularizers for the two methods
    n_clients      federated client count (ignored in centralized mode)
    partition      "by_sequence" | "contiguous_chunks"
    rounds         federated rounds (>= 1)
    allow_partial  aggregate even if clients are missing
    drop_clients   client ids that never report (dropout simulation)
    beta_per_client  add beta once per client instead of once at the server
    fit_mode       "batch" | "online" precision computation (mdrs training)
    normalization  "minmax" | "zscore" | "none"
    data           {"synthetic": {...}} or
                   {"csv": {"train": [...], "test": [...], "schema": path}}
    metrics        subset of ["auc_roc", "auc_pr"]

A config fingerprint (SHA-256 of the canonical JSON after defaults are
filled) is embedded in every artifact so mixed-config evaluation fails fast.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from .data import (
    CsvSchema,
    PARTITION_POLICIES,
    SyntheticSpec,
    TimeSeriesDataset,
    generate_synthetic,
    load_csv,
    normalize,
)
from .reservoir import SPEC_KEYS, ReservoirSpec


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_DEFAULTS = {
    "method": "mdrs",
    "mode": "centralized",
    "reservoir": {},
    "delta": 1e-4,
    "beta": 1e-4,
    "n_clients": 1,
    "partition": "by_sequence",
    "rounds": 1,
    "allow_partial": False,
    "drop_clients": [],
    "beta_per_client": False,
    "fit_mode": "batch",
    "normalization": "minmax",
    "metrics": ["auc_roc", "auc_pr"],
}

_METHODS = ("mdrs", "esn_sre")
_MODES = ("centralized", "incfed")
_NORMALIZATIONS = ("minmax", "zscore", "none")
_METRICS = ("auc_roc", "auc_pr")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with defaults filled."""

    method: str
    mode: str
    reservoir: dict
    delta: float
    beta: float
    n_clients: int
    partition: str
    rounds: int
    allow_partial: bool
    drop_clients: tuple[int, ...]
    beta_per_client: bool
    fit_mode: str
    normalization: str
    data: dict
    metrics: tuple[str, ...]

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = set(_DEFAULTS) | {"data"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "data" not in raw:
            raise ConfigError("config requires a 'data' section")
        filled = {**_DEFAULTS, **raw}
        cfg = cls(
            method=filled["method"],
            mode=filled["mode"],
            reservoir=dict(filled["reservoir"]),
            delta=float(filled["delta"]),
            beta=float(filled["beta"]),
            n_clients=int(filled["n_clients"]),
            partition=filled["partition"],
            rounds=int(filled["rounds"]),
            allow_partial=bool(filled["allow_partial"]),
            drop_clients=tuple(int(c) for c in filled["drop_clients"]),
            beta_per_client=bool(filled["beta_per_client"]),
            fit_mode=filled["fit_mode"],
            normalization=filled["normalization"],
            data=dict(filled["data"]),
            metrics=tuple(filled["metrics"]),
        )
        cfg._validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        return cls.from_dict(raw)

    def _validate(self) -> None:
        if self.method not in _METHODS:
            raise ConfigError(f"method must be one of {_METHODS}, got {self.method!r}")
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.partition not in PARTITION_POLICIES:
            raise ConfigError(
                f"partition must be one of {PARTITION_POLICIES}, got {self.partition!r}"
            )
        if self.normalization not in _NORMALIZATIONS:
            raise ConfigError(
                f"normalization must be one of {_NORMALIZATIONS}, "
                f"got {self.normalization!r}"
            )
        for m in self.metrics:
            if m not in _METRICS:
                raise ConfigError(f"unknown metric {m!r} (supported: {_METRICS})")
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.n_clients < 1:
            raise ConfigError(f"n_clients must be >= 1, got {self.n_clients}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.fit_mode not in ("batch", "online"):
            raise ConfigError(
                f"fit_mode must be 'batch' or 'online', got {self.fit_mode!r}"
            )
        for cid in self.drop_clients:
            if not 0 <= cid < self.n_clients:
                raise ConfigError(
                    f"drop_clients id {cid} outside 0..{self.n_clients - 1}"
                )
        bad = set(self.reservoir) - set(SPEC_KEYS)
        if bad:
            raise ConfigError(f"unknown reservoir keys: {sorted(bad)}")
        if self.mode == "centralized" and self.n_clients > 1:
            warnings.warn("n_clients is ignored in centralized mode")
        kinds = set(self.data)
        if kinds not in ({"synthetic"}, {"csv"}):
            raise ConfigError(
                "data section must contain exactly one of 'synthetic' or 'csv'"
            )
        if "csv" in self.data:
            csv_cfg = self.data["csv"]
            for key in ("train", "test", "schema"):
                if key not in csv_cfg:
                    raise ConfigError(f"data.csv requires key {key!r}")
        else:
            try:
                SyntheticSpec.from_mapping(self.data["synthetic"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad synthetic spec: {exc}")

    def canonical_json(self) -> str:
        doc = {
            "method": self.method,
            "mode": self.mode,
            "reservoir": self.reservoir,
            "delta": self.delta,
            "beta": self.beta,
            "n_clients": self.n_clients,
            "partition": self.partition,
            "rounds": self.rounds,
            "allow_partial": self.allow_partial,
            "drop_clients": list(self.drop_clients),
            "beta_per_client": self.beta_per_client,
            "fit_mode": self.fit_mode,
            "normalization": self.normalization,
            "data": self.data,
            "metrics": list(self.metrics),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def build_dataset(self, base_dir=None) -> TimeSeriesDataset:
        """Materialize (and normalize) the configured dataset."""
        if "synthetic" in self.data:
            dataset = generate_synthetic(SyntheticSpec.from_mapping(self.data["synthetic"]))
        else:
            csv_cfg = self.data["csv"]
            base = Path(base_dir) if base_dir is not None else Path(".")

            def resolve(p):
                p = Path(p)
                return p if p.is_absolute() else base / p

            schema = CsvSchema.from_json(resolve(csv_cfg["schema"]))
            dataset = load_csv(
                [resolve(p) for p in csv_cfg["train"]],
                [resolve(p) for p in csv_cfg["test"]],
                schema,
            )
        if self.normalization != "none":
            dataset = normalize(dataset, self.normalization)
        return dataset

    def build_spec(self, n_input: int) -> ReservoirSpec:
        """Reservoir spec from the config, with n_input from the data."""
        mapping = dict(self.reservoir)
        declared = mapping.pop("n_input", None)
        if declared is not None and int(declared) != n_input:
            raise ConfigError(
                f"reservoir.n_input={declared} does not match the dataset's "
                f"{n_input} channels"
            )
        try:
            return ReservoirSpec(n_input=n_input, **mapping)
        except ValueError as exc:
            raise ConfigError(str(exc))
