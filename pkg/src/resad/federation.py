"""Client/server protocol for federated training on summed statistics.

Clients never send data or raw states.  Each round, a client runs the shared
reservoir over its local sequences (state reset to zero per sequence),
subsamples the configured node subset, folds the outer products into its
cumulative covariance, and ships that matrix.  The server sums client
matrices in ascending client-id order and inverts once; the result is the
same model a centralized fit over the pooled sequences would produce.

The ESN reconstruction baseline follows the same shape with two matrices
per client (targets-times-states and states-times-states).

All payloads travel RSMX-encoded (:mod:`resad.rsmx`), also inside the
in-process simulator, so every simulated run exercises the real codec path.
A directory-based exchange (`round<R>_client<ID>_<ROLE>.rsmx`) supports
multi-process runs; note the wire format carries no timestep count, so
messages read back from files report ``count=0``.
"""

from __future__ import annotations

import enum
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mdrs, readout, rsmx
from .metrics import evaluate_series, mean_over_series
from .reservoir import (
    ReservoirSpec,
    ReservoirWeights,
    build_weights,
    run_reservoir,
    subsample,
)

logger = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    """A federation-protocol violation (duplicate, missing, or mismatched messages)."""


class PayloadKind(enum.IntEnum):
    """Client-to-server payload kinds; values double as RSMX role tags."""

    MDRS_COV = ord("C")
    ESN_A = ord("A")
    ESN_B = ord("B")


class GlobalKind(enum.IntEnum):
    """Server-to-client payload kinds; values double as RSMX role tags."""

    MDRS_PRECISION = ord("P")
    ESN_WOUT = ord("W")


_ROLE_TO_KIND = {int(k): k for k in PayloadKind}
_FILENAME_RE = re.compile(r"^round(\d+)_client(\d+)_([A-Z])\.rsmx$")


@dataclass(frozen=True, eq=False)
class ClientUpdateMessage:
    """One client's update for one round."""

    client_id: int
    round: int
    payload_kind: PayloadKind
    matrix: np.ndarray
    count: int  # cumulative timesteps behind the matrix (not on the wire)

    def encode(self) -> bytes:
        return rsmx.encode(self.matrix, int(self.payload_kind))

    @classmethod
    def from_wire(
        cls, data: bytes, *, client_id: int, round: int, count: int = 0
    ) -> "ClientUpdateMessage":
        matrix, role = rsmx.decode(data)
        if role not in _ROLE_TO_KIND:
            raise ProtocolError(f"unknown client payload role tag {role}")
        kind = _ROLE_TO_KIND[role]
        if kind in (PayloadKind.MDRS_COV, PayloadKind.ESN_B) and (
            matrix.shape[0] != matrix.shape[1]
        ):
            raise ProtocolError(
                f"{kind.name} payload must be square, got {matrix.shape}"
            )
        return cls(
            client_id=client_id,
            round=round,
            payload_kind=kind,
            matrix=matrix,
            count=count,
        )

    @property
    def filename(self) -> str:
        return f"round{self.round}_client{self.client_id}_{chr(self.payload_kind)}.rsmx"


@dataclass(frozen=True, eq=False)
class GlobalModelMessage:
    """The aggregated model the server publishes for one round."""

    round: int
    payload_kind: GlobalKind
    matrix: np.ndarray

    def encode(self) -> bytes:
        return rsmx.encode(self.matrix, int(self.payload_kind))


def _check_round(messages: list[ClientUpdateMessage]) -> int:
    rounds = {m.round for m in messages}
    if len(rounds) != 1:
        raise ProtocolError(f"messages span multiple rounds: {sorted(rounds)}")
    return rounds.pop()


def _check_clients(
    messages: list[ClientUpdateMessage],
    expected_clients,
    allow_partial: bool,
) -> None:
    ids = [m.client_id for m in messages]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ProtocolError(f"duplicate client id(s): {dupes}")
    if expected_clients is not None:
        missing = sorted(set(expected_clients) - set(ids))
        unexpected = sorted(set(ids) - set(expected_clients))
        if unexpected:
            raise ProtocolError(f"unexpected client id(s): {unexpected}")
        if missing:
            if not allow_partial:
                raise ProtocolError(f"missing client id(s): {missing}")
            logger.warning("aggregating without clients %s", missing)


def server_aggregate(
    messages: list[ClientUpdateMessage],
    delta: float,
    *,
    expected_clients=None,
    allow_partial: bool = False,
) -> GlobalModelMessage:
    """Sum covariance payloads and publish the global precision matrix.

    Summation runs in ascending client-id order, so any arrival order yields
    bit-identical results.  Missing clients fail the round unless
    ``allow_partial`` is set (then the gap is logged and skipped).
    """
    if not messages:
        raise ProtocolError("no client messages to aggregate")
    for m in messages:
        if m.payload_kind != PayloadKind.MDRS_COV:
            raise ProtocolError(
                f"expected {PayloadKind.MDRS_COV.name} payloads, got {m.payload_kind.name}"
            )
    round_index = _check_round(messages)
    _check_clients(messages, expected_clients, allow_partial)
    dim = messages[0].matrix.shape[0]
    for m in messages:
        if m.matrix.shape != (dim, dim):
            raise ProtocolError(
                f"client {m.client_id} payload has shape {m.matrix.shape}, "
                f"expected {(dim, dim)}"
            )
    phi_g = np.zeros((dim, dim))
    count = 0
    for m in sorted(messages, key=lambda m: m.client_id):
        phi_g += m.matrix
        count += m.count
    acc = mdrs.CovarianceAccumulator(phi=0.5 * (phi_g + phi_g.T), count=count)
    model = mdrs.batch_precision(acc, delta)
    return GlobalModelMessage(
        round=round_index, payload_kind=GlobalKind.MDRS_PRECISION, matrix=model.p
    )


def server_aggregate_readout(
    messages: list[ClientUpdateMessage],
    beta: float,
    *,
    beta_per_client: bool = False,
    expected_clients=None,
    allow_partial: bool = False,
) -> GlobalModelMessage:
    """Aggregate paired ESN_A/ESN_B payloads into the global readout."""
    if not messages:
        raise ProtocolError("no client messages to aggregate")
    round_index = _check_round(messages)
    by_client: dict[int, dict[PayloadKind, ClientUpdateMessage]] = {}
    for m in messages:
        if m.payload_kind not in (PayloadKind.ESN_A, PayloadKind.ESN_B):
            raise ProtocolError(
                f"expected ESN payloads, got {m.payload_kind.name}"
            )
        slot = by_client.setdefault(m.client_id, {})
        if m.payload_kind in slot:
            raise ProtocolError(
                f"duplicate {m.payload_kind.name} from client {m.client_id}"
            )
        slot[m.payload_kind] = m
    for cid, slot in by_client.items():
        if len(slot) != 2:
            have = ", ".join(k.name for k in slot)
            raise ProtocolError(f"client {cid} sent only {have}")
    if expected_clients is not None:
        missing = sorted(set(expected_clients) - set(by_client))
        if missing and not allow_partial:
            raise ProtocolError(f"missing client id(s): {missing}")
        if missing:
            logger.warning("aggregating without clients %s", missing)
    stats = [
        readout.ReadoutSufficientStats(
            a=by_client[cid][PayloadKind.ESN_A].matrix,
            b=by_client[cid][PayloadKind.ESN_B].matrix,
        )
        for cid in sorted(by_client)
    ]
    model = readout.aggregate_and_solve(stats, beta, beta_per_client=beta_per_client)
    return GlobalModelMessage(
        round=round_index, payload_kind=GlobalKind.ESN_WOUT, matrix=model.w_out
    )


def _check_weights(spec: ReservoirSpec, weights: ReservoirWeights) -> None:
    if weights.n_reservoir != spec.n_reservoir or (
        len(weights.subsample_indices) != spec.subsample_size
    ):
        raise ProtocolError(
            "reservoir weights do not match the federation spec; all clients "
            "must share one ReservoirSpec (including the seed)"
        )


def training_states(
    spec: ReservoirSpec, weights: ReservoirWeights, sequence: np.ndarray
) -> np.ndarray:
    """States used for covariance accumulation: subsampled, washout dropped."""
    trajectory = run_reservoir(weights, spec, sequence)
    states = subsample(trajectory, weights.subsample_indices)
    return states[:, spec.washout :]


def client_round(
    sequences,
    spec: ReservoirSpec,
    weights: ReservoirWeights,
    prior: mdrs.CovarianceAccumulator | None = None,
    *,
    client_id: int = 0,
    round_index: int = 1,
) -> tuple[ClientUpdateMessage, mdrs.CovarianceAccumulator]:
    """One covariance-client round over ``sequences``; emits the cumulative model.

    The reservoir state resets to zero for every sequence.  Returns the
    message and the updated accumulator to carry into the next round.
    """
    _check_weights(spec, weights)
    acc = prior if prior is not None else mdrs.CovarianceAccumulator.zero(spec.subsample_size)
    for seq in sequences:
        acc = mdrs.accumulate(acc, training_states(spec, weights, seq))
    message = ClientUpdateMessage(
        client_id=client_id,
        round=round_index,
        payload_kind=PayloadKind.MDRS_COV,
        matrix=acc.phi.copy(),
        count=acc.count,
    )
    return message, acc


class MDRSClient:
    """Stateful covariance client for multi-round simulations."""

    def __init__(self, client_id: int, spec: ReservoirSpec, weights: ReservoirWeights):
        _check_weights(spec, weights)
        self.client_id = client_id
        self.spec = spec
        self.weights = weights
        self.accumulator = mdrs.CovarianceAccumulator.zero(spec.subsample_size)

    def observe(self, sequences) -> None:
        for seq in sequences:
            self.accumulator = mdrs.accumulate(
                self.accumulator, training_states(self.spec, self.weights, seq)
            )

    def update_messages(self, round_index: int) -> list[ClientUpdateMessage]:
        return [
            ClientUpdateMessage(
                client_id=self.client_id,
                round=round_index,
                payload_kind=PayloadKind.MDRS_COV,
                matrix=self.accumulator.phi.copy(),
                count=self.accumulator.count,
            )
        ]


class ESNClient:
    """Stateful sufficient-statistics client for the reconstruction baseline.

    Targets are the inputs themselves (same-timestep reconstruction); states
    are the full reservoir (no subsampling on this path).
    """

    def __init__(self, client_id: int, spec: ReservoirSpec, weights: ReservoirWeights):
        _check_weights(spec, weights)
        self.client_id = client_id
        self.spec = spec
        self.weights = weights
        self.stats = readout.ReadoutSufficientStats(
            a=np.zeros((spec.n_input, spec.n_reservoir)),
            b=np.zeros((spec.n_reservoir, spec.n_reservoir)),
        )
        self.count = 0

    def observe(self, sequences) -> None:
        for seq in sequences:
            trajectory = run_reservoir(self.weights, self.spec, seq)
            states = trajectory.states[:, self.spec.washout :]
            targets = np.asarray(seq, dtype=float)[:, self.spec.washout :]
            if states.shape[1] == 0:
                continue
            self.stats = readout.add_stats(
                self.stats, readout.client_stats(states, targets)
            )
            self.count += states.shape[1]

    def update_messages(self, round_index: int) -> list[ClientUpdateMessage]:
        return [
            ClientUpdateMessage(
                client_id=self.client_id,
                round=round_index,
                payload_kind=PayloadKind.ESN_A,
                matrix=self.stats.a.copy(),
                count=self.count,
            ),
            ClientUpdateMessage(
                client_id=self.client_id,
                round=round_index,
                payload_kind=PayloadKind.ESN_B,
                matrix=self.stats.b.copy(),
                count=self.count,
            ),
        ]


def write_message(directory, message: ClientUpdateMessage) -> Path:
    path = Path(directory) / message.filename
    path.write_bytes(message.encode())
    return path


def read_round_messages(directory, round_index: int) -> list[ClientUpdateMessage]:
    """Scan a message directory for one round's client updates."""
    out = []
    for path in sorted(Path(directory).iterdir()):
        match = _FILENAME_RE.match(path.name)
        if not match or int(match.group(1)) != round_index:
            continue
        out.append(
            ClientUpdateMessage.from_wire(
                path.read_bytes(),
                client_id=int(match.group(2)),
                round=round_index,
            )
        )
    return out


@dataclass
class FederationRun:
    """Everything one deterministic simulation needs.

    ``client_sequences[i]`` is client i's training data, a list of
    (n_input, T) arrays.  All clients share ``spec`` (including the seed);
    that is what makes their regenerated weights identical.
    """

    spec: ReservoirSpec
    client_sequences: list
    test_sequences: list = field(default_factory=list)  # (inputs, labels-or-None)
    method: str = "mdrs"  # "mdrs" or "esn_sre"
    delta: float = 1e-4
    beta: float = 1e-4
    rounds: int = 1
    allow_partial: bool = False
    beta_per_client: bool = False
    exchange_dir: str | Path | None = None
    drop_clients: tuple = ()  # simulated dropouts: these clients never report

    def __post_init__(self):
        if self.method not in ("mdrs", "esn_sre"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if not self.client_sequences:
            raise ValueError("at least one client is required")
        self.drop_clients = tuple(self.drop_clients)
        for cid in self.drop_clients:
            if not 0 <= cid < len(self.client_sequences):
                raise ValueError(f"drop_clients id {cid} out of range")


@dataclass(frozen=True, eq=False)
class FederationResult:
    """Output of :func:`simulate`."""

    global_message: GlobalModelMessage
    scores: list  # one (T,) array per test sequence
    report: dict  # JSON-compatible run report


def _round_slices(n_items: int, rounds: int) -> list[slice]:
    return [slice(r * n_items // rounds, (r + 1) * n_items // rounds) for r in range(rounds)]


def simulate(run: FederationRun) -> FederationResult:
    """Drive ``rounds`` federated rounds and score the test sequences.

    Each round, every client observes its share of data and sends its
    cumulative statistics through the RSMX codec; the server decodes and
    aggregates.  Deterministic given the run (timing fields aside).
    """
    weights = build_weights(run.spec)
    n_clients = len(run.client_sequences)
    client_cls = MDRSClient if run.method == "mdrs" else ESNClient
    clients = [client_cls(cid, run.spec, weights) for cid in range(n_clients)]
    schedules = [
        _round_slices(len(sequences), run.rounds) for sequences in run.client_sequences
    ]
    if run.exchange_dir is not None:
        Path(run.exchange_dir).mkdir(parents=True, exist_ok=True)

    round_logs = []
    global_message = None
    for round_index in range(1, run.rounds + 1):
        t0 = time.perf_counter()
        received = []
        payload_bytes = {}
        for client in clients:
            share = run.client_sequences[client.client_id][
                schedules[client.client_id][round_index - 1]
            ]
            client.observe(share)
            if client.client_id in run.drop_clients:
                continue
            sent = 0
            for message in client.update_messages(round_index):
                wire = message.encode()
                sent += len(wire)
                if run.exchange_dir is not None:
                    write_message(run.exchange_dir, message)
                received.append(
                    ClientUpdateMessage.from_wire(
                        wire,
                        client_id=message.client_id,
                        round=message.round,
                        count=message.count,
                    )
                )
            payload_bytes[str(client.client_id)] = sent
        if run.method == "mdrs":
            global_message = server_aggregate(
                received,
                run.delta,
                expected_clients=range(n_clients),
                allow_partial=run.allow_partial,
            )
        else:
            global_message = server_aggregate_readout(
                received,
                run.beta,
                beta_per_client=run.beta_per_client,
                expected_clients=range(n_clients),
                allow_partial=run.allow_partial,
            )
        round_logs.append(
            {
                "round": round_index,
                "n_messages": len(received),
                "payload_bytes": payload_bytes,
                "total_payload_bytes": sum(payload_bytes.values()),
                "elapsed_s": time.perf_counter() - t0,
            }
        )

    scores = []
    evals = []
    for i, (inputs, labels) in enumerate(run.test_sequences):
        trajectory = run_reservoir(weights, run.spec, inputs)
        if run.method == "mdrs":
            states = subsample(trajectory, weights.subsample_indices)
            model = mdrs.precision_model_from_matrix(global_message.matrix, run.delta)
            s = mdrs.score(model, states)
        else:
            model = readout.ReadoutModel(w_out=global_message.matrix, beta=run.beta)
            s = readout.sre_score(model, trajectory.states, inputs)
        scores.append(s)
        if labels is not None:
            evals.append(evaluate_series(s, labels, series_id=f"series_{i:03d}"))

    report = {
        "method": run.method,
        "n_clients": n_clients,
        "rounds": round_logs,
        "spec": run.spec.to_mapping(),
        "delta": run.delta,
        "beta": run.beta,
    }
    if evals:
        report["metrics"] = mean_over_series(evals).to_dict()
    return FederationResult(global_message=global_message, scores=scores, report=report)
