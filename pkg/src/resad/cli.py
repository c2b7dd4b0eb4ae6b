"""Command line: train, fed, score, eval, synth, sweep.

Every command is a thin composition of library calls; no math lives here.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 protocol or
wire-format error.  Set RESAD_LOG=DEBUG (or INFO, ...) for verbose logging.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import mdrs, readout, rsmx
from .config import ConfigError, RunConfig
from .data import (
    CsvSchema,
    DataFormatError,
    SyntheticSpec,
    apply_normalization,
    generate_synthetic,
    partition,
    write_csv_dataset,
    _parse_csv,
)
from .federation import (
    ESNClient,
    FederationRun,
    GlobalKind,
    MDRSClient,
    ProtocolError,
    simulate,
    training_states,
)
from .metrics import SeriesEval, auc_pr, auc_roc, mean_over_series, report_to_csv
from .reservoir import ReservoirSpec, build_weights, run_reservoir, subsample

logger = logging.getLogger(__name__)


def _die(code: int, exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _die(2, exc)
        except DataFormatError as exc:
            _die(3, exc)
        except (ProtocolError, rsmx.RsmxError) as exc:
            _die(4, exc)

    return wrapper


def _load_config(config_path, overrides=()) -> RunConfig:
    """Read the config file, apply --set overrides, validate."""
    try:
        raw = json.loads(Path(config_path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {config_path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {config_path} is not valid JSON: {exc}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        dotted, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text  # bare strings need no quoting
        target = raw
        *path, last = dotted.split(".")
        for part in path:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"--set cannot descend into non-object {part!r}")
        target[last] = value
    return RunConfig.from_dict(raw)


_SET_HELP = "Override a config key, e.g. --set n_clients=8 or --set reservoir.seed=3."


@contextmanager
def _locked_output(out):
    """One CLI invocation per output directory; guarded by a lockfile."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".resad.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory {out} is in use (or holds a stale {lock.name})"
        )
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _model_meta(cfg: RunConfig, spec: ReservoirSpec, role: GlobalKind, count: int,
                normalization) -> dict:
    return {
        "fingerprint": cfg.fingerprint,
        "method": cfg.method,
        "mode": cfg.mode,
        "role": chr(role),
        "spec": spec.to_mapping(),
        "delta": cfg.delta,
        "beta": cfg.beta,
        "count": count,
        "normalization": normalization,
    }


def _score_csv_text(fingerprint: str, scores: np.ndarray) -> str:
    lines = [f"# fingerprint={fingerprint}", "timestep,score"]
    lines += [f"{t},{repr(float(s))}" for t, s in enumerate(scores)]
    return "\n".join(lines) + "\n"


def _read_score_csv(path) -> tuple[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# fingerprint="):
        raise DataFormatError(f"{path}:1: missing fingerprint header")
    fingerprint = lines[0].split("=", 1)[1]
    if len(lines) < 2 or lines[1] != "timestep,score":
        raise DataFormatError(f"{path}:2: expected 'timestep,score' header")
    values = []
    for no, line in enumerate(lines[2:], start=3):
        parts = line.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"{path}:{no}: expected 2 fields")
        try:
            values.append(float(parts[1]))
        except ValueError:
            raise DataFormatError(f"{path}:{no}: non-numeric score {parts[1]!r}")
    return fingerprint, np.asarray(values)


@click.group()
@click.version_option(package_name="resad")
def main():
    """Federated reservoir-state anomaly detection."""
    logging.basicConfig(
        level=os.environ.get("RESAD_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, help=_SET_HELP)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guard
def synth(config_path, overrides, out_dir):
    """Generate the configured synthetic dataset as CSV files."""
    cfg = _load_config(config_path, overrides)
    if "synthetic" not in cfg.data:
        raise ConfigError("synth requires a data.synthetic section")
    dataset = generate_synthetic(SyntheticSpec.from_mapping(cfg.data["synthetic"]))
    with _locked_output(out_dir) as out:
        write_csv_dataset(dataset, out)
        _write_json(out / "dataset.json", {
            "fingerprint": cfg.fingerprint,
            "synthetic": cfg.data["synthetic"],
            "n_train_files": len(dataset.train_sequences),
            "n_test_files": len(dataset.test_sequences),
        })
    click.echo(f"wrote {len(dataset.train_sequences)} train and "
               f"{len(dataset.test_sequences)} test files to {out_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, help=_SET_HELP)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guard
def train(config_path, overrides, out_dir):
    """Centralized training; writes model.rsmx and model.json."""
    cfg = _load_config(config_path, overrides)
    if cfg.mode != "centralized":
        raise ConfigError("train runs centralized mode; use 'fed' for incfed")
    dataset = cfg.build_dataset(base_dir=Path(config_path).parent)
    spec = cfg.build_spec(dataset.n_channels)
    weights = build_weights(spec)
    if cfg.method == "mdrs":
        if cfg.fit_mode == "batch":
            client = MDRSClient(0, spec, weights)
            client.observe(dataset.train_sequences)
            model = mdrs.batch_precision(client.accumulator, cfg.delta)
            count = client.accumulator.count
        else:
            model = mdrs.PrecisionModel.initial(spec.subsample_size, cfg.delta)
            count = 0
            for seq in dataset.train_sequences:
                states = training_states(spec, weights, seq)
                model = mdrs.online_update_many(model, states)
                count += states.shape[1]
        matrix, role = model.p, GlobalKind.MDRS_PRECISION
    else:
        client = ESNClient(0, spec, weights)
        client.observe(dataset.train_sequences)
        model = readout.aggregate_and_solve([client.stats], cfg.beta)
        matrix, role, count = model.w_out, GlobalKind.ESN_WOUT, client.count
    with _locked_output(out_dir) as out:
        (out / "model.rsmx").write_bytes(rsmx.encode(matrix, int(role)))
        _write_json(out / "model.json",
                    _model_meta(cfg, spec, role, count, dataset.normalization))
    click.echo(f"trained {cfg.method} model on {count} states -> {out_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, help=_SET_HELP)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guard
def fed(config_path, overrides, out_dir):
    """Federated simulation; writes the global model, audit messages, report."""
    cfg = _load_config(config_path, overrides)
    if cfg.mode != "incfed":
        raise ConfigError("fed runs incfed mode; use 'train' for centralized")
    dataset = cfg.build_dataset(base_dir=Path(config_path).parent)
    spec = cfg.build_spec(dataset.n_channels)
    try:
        parts = partition(dataset, cfg.n_clients, cfg.partition)
    except ValueError as exc:
        raise ConfigError(str(exc))
    with _locked_output(out_dir) as out:
        run = FederationRun(
            spec=spec,
            client_sequences=[list(p.train_sequences) for p in parts],
            test_sequences=list(dataset.test_sequences),
            method=cfg.method,
            delta=cfg.delta,
            beta=cfg.beta,
            rounds=cfg.rounds,
            allow_partial=cfg.allow_partial,
            beta_per_client=cfg.beta_per_client,
            exchange_dir=out / "messages",
            drop_clients=cfg.drop_clients,
        )
        result = simulate(run)
        role = (GlobalKind.MDRS_PRECISION if cfg.method == "mdrs"
                else GlobalKind.ESN_WOUT)
        (out / "model.rsmx").write_bytes(result.global_message.encode())
        count = sum(
            max(0, seq.shape[1] - spec.washout)
            for part in run.client_sequences
            for seq in part
        )
        _write_json(out / "model.json",
                    _model_meta(cfg, spec, role, count, dataset.normalization))
        report = dict(result.report)
        report["fingerprint"] = cfg.fingerprint
        _write_json(out / "report.json", report)
        for i, scores in enumerate(result.scores):
            (out / f"scores_{i:03d}.csv").write_text(
                _score_csv_text(cfg.fingerprint, scores)
            )
    click.echo(
        f"federated {cfg.method} run: {cfg.n_clients} clients, "
        f"{cfg.rounds} round(s) -> {out_dir}"
    )


@main.command()
@click.option("--model", "model_dir", required=True, type=click.Path(),
              help="Directory holding model.rsmx and model.json.")
@click.option("--data", "data_paths", required=True, multiple=True, type=click.Path())
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guard
def score(model_dir, data_paths, schema_path, out_dir):
    """Score sequences with a trained model; one CSV per input file."""
    model_dir = Path(model_dir)
    try:
        meta = json.loads((model_dir / "model.json").read_text())
    except FileNotFoundError:
        raise ConfigError(f"missing model.json next to {model_dir / 'model.rsmx'}")
    matrix, role = rsmx.decode((model_dir / "model.rsmx").read_bytes())
    if role != ord(meta["role"]):
        raise ProtocolError(
            f"model role tag {chr(role)!r} does not match metadata {meta['role']!r}"
        )
    if role not in (int(GlobalKind.MDRS_PRECISION), int(GlobalKind.ESN_WOUT)):
        raise ProtocolError(f"{chr(role)!r} is not a model role tag")
    spec = ReservoirSpec.from_mapping(meta["spec"])
    weights = build_weights(spec)
    schema = CsvSchema.from_json(schema_path)
    with _locked_output(out_dir) as out:
        for path in data_paths:
            inputs, _ = _parse_csv(path, schema, require_label=False)
            inputs = apply_normalization(inputs, meta["normalization"])
            trajectory = run_reservoir(weights, spec, inputs)
            if role == GlobalKind.MDRS_PRECISION:
                states = subsample(trajectory, weights.subsample_indices)
                model = mdrs.precision_model_from_matrix(matrix, meta["delta"])
                series = mdrs.score(model, states)
            else:
                model = readout.ReadoutModel(w_out=matrix, beta=meta["beta"])
                series = readout.sre_score(model, trajectory.states, inputs)
            name = f"scores_{Path(path).stem}.csv"
            (out / name).write_text(_score_csv_text(meta["fingerprint"], series))
    click.echo(f"scored {len(data_paths)} file(s) -> {out_dir}")


@main.command("eval")
@click.option("--scores", "score_paths", required=True, multiple=True,
              type=click.Path())
@click.option("--data", "data_paths", required=True, multiple=True,
              type=click.Path(), help="Labeled test CSVs, paired in order.")
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--baseline", "baseline_path", type=click.Path(), default=None,
              help="JSON mapping series ids to externally computed metric "
                   "values (vus_pr, pate) to merge into the report.")
@_guard
def eval_cmd(score_paths, data_paths, schema_path, out_dir, baseline_path):
    """Evaluate score CSVs against labeled test CSVs."""
    if len(score_paths) != len(data_paths):
        raise ConfigError(
            f"{len(score_paths)} score files but {len(data_paths)} data files"
        )
    schema = CsvSchema.from_json(schema_path)
    baseline = {}
    if baseline_path is not None:
        baseline = json.loads(Path(baseline_path).read_text())
    fingerprints = set()
    series = []
    for score_path, data_path in zip(score_paths, data_paths):
        fingerprint, values = _read_score_csv(score_path)
        fingerprints.add(fingerprint)
        _, labels = _parse_csv(data_path, schema, require_label=True)
        if labels.shape[0] != values.shape[0]:
            raise DataFormatError(
                f"{score_path} has {values.shape[0]} scores but {data_path} "
                f"has {labels.shape[0]} labels"
            )
        sid = Path(score_path).stem
        extra = baseline.get(sid, {})
        series.append(SeriesEval(
            series_id=sid,
            auc_roc=auc_roc(values, labels),
            auc_pr=auc_pr(values, labels),
            vus_pr=extra.get("vus_pr"),
            pate=extra.get("pate"),
        ))
    if len(fingerprints) > 1:
        raise ConfigError(
            f"score files come from different configs: {sorted(fingerprints)}"
        )
    report = mean_over_series(series)
    with _locked_output(out_dir) as out:
        doc = report.to_dict()
        doc["fingerprint"] = fingerprints.pop()
        _write_json(out / "eval.json", doc)
        (out / "eval.csv").write_text(report_to_csv(report))
    click.echo(f"mean auc_roc={report.mean_auc_roc:.4f} "
               f"auc_pr={report.mean_auc_pr:.4f} -> {out_dir}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True, help=_SET_HELP)
@click.option("--param", "param", required=True,
              type=click.Choice(["clients", "subsample"]))
@click.option("--values", "values", required=True,
              help="Comma-separated values, e.g. 1,2,6,24.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guard
def sweep(config_path, overrides, param, values, out_dir):
    """Run a federated sweep and emit tidy long-format CSV."""
    cfg = _load_config(config_path, overrides)
    try:
        points = [int(v) for v in values.split(",") if v]
    except ValueError:
        raise ConfigError(f"sweep values must be integers, got {values!r}")
    if not points:
        raise ConfigError("no sweep values given")
    dataset = cfg.build_dataset(base_dir=Path(config_path).parent)
    rows = [f"# fingerprint={cfg.fingerprint}", "sweep_param,value,series_id,auc_roc,auc_pr"]
    for value in points:
        n_clients = value if param == "clients" else max(cfg.n_clients, 1)
        reservoir = dict(cfg.reservoir)
        if param == "subsample":
            reservoir["subsample_size"] = value
        point_cfg = RunConfig.from_dict({
            **json.loads(cfg.canonical_json()),
            "mode": "incfed",
            "n_clients": n_clients,
            "reservoir": reservoir,
        })
        spec = point_cfg.build_spec(dataset.n_channels)
        try:
            parts = partition(dataset, n_clients, point_cfg.partition)
        except ValueError as exc:
            raise ConfigError(str(exc))
        run = FederationRun(
            spec=spec,
            client_sequences=[list(p.train_sequences) for p in parts],
            test_sequences=list(dataset.test_sequences),
            method=point_cfg.method,
            delta=point_cfg.delta,
            beta=point_cfg.beta,
            rounds=point_cfg.rounds,
            allow_partial=point_cfg.allow_partial,
            beta_per_client=point_cfg.beta_per_client,
        )
        result = simulate(run)
        metrics_doc = result.report.get("metrics")
        if metrics_doc is None:
            raise DataFormatError("sweep requires labeled test sequences")
        for entry in metrics_doc["series"]:
            rows.append(f"{param},{value},{entry['series_id']},"
                        f"{repr(entry['auc_roc'])},{repr(entry['auc_pr'])}")
        rows.append(f"{param},{value},mean,"
                    f"{repr(metrics_doc['mean']['auc_roc'])},"
                    f"{repr(metrics_doc['mean']['auc_pr'])}")
    with _locked_output(out_dir) as out:
        (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    click.echo(f"swept {param} over {points} -> {out_dir}")


if __name__ == "__main__":
    main()
