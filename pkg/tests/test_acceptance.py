"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints one `ACCEPTANCE <n> (<name>): PASS|FAIL` line (visible with
`pytest -s tests/test_acceptance.py`, or via the per-test pass/fail in
`pytest -v`).
"""

import functools
import json
import time

import numpy as np
from click.testing import CliRunner
from numpy.testing import assert_allclose

from resad import mdrs, readout, rsmx
from resad.cli import main as cli_main
from resad.data import SyntheticSpec, generate_synthetic, normalize, partition
from resad.federation import (
    ClientUpdateMessage,
    ESNClient,
    FederationRun,
    client_round,
    server_aggregate,
    simulate,
)
from resad.metrics import auc_pr, auc_roc
from resad.reservoir import ReservoirSpec, build_weights, run_reservoir, subsample


def criterion(number, name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {number} ({name}): FAIL")
                raise
            print(f"ACCEPTANCE {number} ({name}): PASS")

        return wrapper

    return decorate


def rel_frobenius(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def benchmark_dataset(seed):
    spec = SyntheticSpec(
        seed=seed,
        n_train_series=24,
        train_length=400,
        n_test_series=4,
        test_length=600,
        anomaly_kinds=("spike", "level_shift"),
        anomalies_per_series=4,
        magnitude=3.0,
        noise_scale=0.03,
    )
    return normalize(generate_synthetic(spec), "minmax")


def federated_mean_auc(dataset, reservoir_spec, method, n_clients=24):
    parts = partition(dataset, n_clients, "by_sequence")
    run = FederationRun(
        spec=reservoir_spec,
        client_sequences=[list(p.train_sequences) for p in parts],
        test_sequences=list(dataset.test_sequences),
        method=method,
    )
    result = simulate(run)
    return float(np.mean([
        auc_roc(scores, labels)
        for scores, (_, labels) in zip(result.scores, dataset.test_sequences)
    ]))


@criterion(1, "federated equals centralized precision")
def test_criterion_1_federated_equals_centralized():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    for _ in range(100):
        n_x = int(rng.integers(8, 65))
        n_clients = int(rng.integers(1, 9))
        n_u = int(rng.integers(1, 4))
        subsample_size = n_x if rng.random() < 0.5 else int(rng.integers(4, n_x + 1))
        spec = ReservoirSpec(
            n_input=n_u,
            n_reservoir=n_x,
            leak_rate=float(rng.uniform(0.3, 1.0)),
            input_scaling=float(10.0 ** rng.uniform(-3.0, -0.5)),
            density=float(rng.uniform(0.1, 0.5)),
            seed=int(rng.integers(2**32)),
            subsample_size=subsample_size,
        )
        weights = build_weights(spec)
        delta = float(10.0 ** rng.uniform(-5.0, -2.0))
        n_sequences = int(rng.integers(n_clients, n_clients + 4))
        sequences = [
            rng.normal(size=(n_u, int(rng.integers(10, 201))))
            for _ in range(n_sequences)
        ]

        # centralized: one accumulator over every trajectory
        acc = mdrs.CovarianceAccumulator.zero(spec.subsample_size)
        for seq in sequences:
            states = subsample(run_reservoir(weights, spec, seq), weights.subsample_indices)
            acc = mdrs.accumulate(acc, states)
        central = mdrs.batch_precision(acc, delta)

        # federated: clients ship covariances through the wire codec
        messages = []
        for cid in range(n_clients):
            message, _ = client_round(
                sequences[cid::n_clients], spec, weights, client_id=cid
            )
            messages.append(ClientUpdateMessage.from_wire(
                message.encode(), client_id=cid, round=1, count=message.count
            ))
        aggregated = server_aggregate(messages, delta, expected_clients=range(n_clients))
        assert rel_frobenius(aggregated.matrix, central.p) <= 1e-10
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"criterion 1 took {elapsed:.1f}s"


@criterion(2, "online Woodbury equals batch inversion")
def test_criterion_2_online_equals_batch():
    started = time.perf_counter()
    delta = 1e-4
    cases = []
    # reservoir-generated states at the default operating scale
    spec = ReservoirSpec(n_input=2, n_reservoir=64, density=0.2, input_scaling=0.001,
                         seed=7, subsample_size=64)
    weights = build_weights(spec)
    rng = np.random.default_rng(202)
    trajectory = run_reservoir(weights, spec, rng.normal(size=(2, 10000)))
    cases.append(trajectory.states)
    # synthetic states over a range of scales and sizes
    cases.append(0.05 * rng.normal(size=(64, 10000)))
    cases.append(0.3 * rng.normal(size=(32, 5000)))
    cases.append(1.0 * rng.normal(size=(8, 10000)))
    for states in cases:
        d = states.shape[0]
        online = mdrs.online_update_many(mdrs.PrecisionModel.initial(d, delta), states)
        batch = mdrs.batch_precision(
            mdrs.accumulate(mdrs.CovarianceAccumulator.zero(d), states), delta
        )
        assert rel_frobenius(online.p, batch.p) <= 1e-8
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"criterion 2 took {elapsed:.1f}s"


@criterion(3, "federated readout equals centralized ridge")
def test_criterion_3_federated_readout_equivalence():
    rng = np.random.default_rng(303)
    for _ in range(100):
        n_x = int(rng.integers(4, 65))
        n_y = int(rng.integers(1, 5))
        n_clients = int(rng.integers(1, 9))
        beta = float(10.0 ** rng.uniform(-6.0, 0.0))
        chunks = []
        for _ in range(n_clients):
            t_len = int(rng.integers(n_y, 80))
            states = rng.normal(size=(n_x, t_len))
            targets = rng.normal(size=(n_y, t_len))
            chunks.append((states, targets))
        pooled_states = np.hstack([s for s, _ in chunks])
        pooled_targets = np.hstack([t for _, t in chunks])
        central = readout.fit_ridge(pooled_states, pooled_targets, beta)
        stats = [readout.client_stats(s, t) for s, t in chunks]
        federated = readout.aggregate_and_solve(stats, beta)  # deferred-beta mode
        assert rel_frobenius(federated.w_out, central.w_out) <= 1e-10


@criterion(4, "client-count invariance of test scores")
def test_criterion_4_client_count_invariance():
    dataset = benchmark_dataset(seed=40)
    spec = ReservoirSpec(
        n_input=dataset.n_channels, n_reservoir=64, density=0.2,
        input_scaling=0.001, seed=11, subsample_size=32,
    )
    reference_scores = None
    reference_metrics = None
    for n_clients in (1, 2, 6, 24):
        parts = partition(dataset, n_clients, "by_sequence")
        run = FederationRun(
            spec=spec,
            client_sequences=[list(p.train_sequences) for p in parts],
            test_sequences=list(dataset.test_sequences),
        )
        result = simulate(run)
        metrics = [
            (auc_roc(s, labels), auc_pr(s, labels))
            for s, (_, labels) in zip(result.scores, dataset.test_sequences)
        ]
        if reference_scores is None:
            reference_scores, reference_metrics = result.scores, metrics
            continue
        for got, want in zip(result.scores, reference_scores):
            assert_allclose(got, want, rtol=1e-10)
        for got, want in zip(metrics, reference_metrics):
            assert abs(got[0] - want[0]) < 1e-12
            assert abs(got[1] - want[1]) < 1e-12


@criterion(5, "subsampling robustness 200 vs 500 nodes")
def test_criterion_5_subsampling_robustness():
    means = {}
    for subsample_size in (200, 500):
        values = []
        for seed in range(5):
            dataset = benchmark_dataset(seed)
            spec = ReservoirSpec(
                n_input=dataset.n_channels, n_reservoir=500,
                input_scaling=0.001, seed=seed, subsample_size=subsample_size,
            )
            values.append(federated_mean_auc(dataset, spec, "mdrs"))
        means[subsample_size] = float(np.mean(values))
    assert abs(means[200] - means[500]) <= 0.05, means


@criterion(6, "communication payload byte law")
def test_criterion_6_payload_byte_law():
    # covariance payload at the published subsampling size
    spec = ReservoirSpec(n_input=2, n_reservoir=250, density=0.2,
                         input_scaling=0.01, seed=3, subsample_size=200)
    weights = build_weights(spec)
    message, _ = client_round([np.zeros((2, 4))], spec, weights)
    wire = message.encode()
    assert len(wire) == 8 * 200 * 200 + 18 == 320018
    assert len(wire) - 18 == 320000  # matrix bytes alone

    # reconstruction baseline ships two matrices covering the full reservoir
    n_x, n_y = 64, 3
    esn_spec = ReservoirSpec(n_input=n_y, n_reservoir=n_x, density=0.2,
                             input_scaling=0.01, seed=4)
    esn_client = ESNClient(0, esn_spec, build_weights(esn_spec))
    esn_client.observe([np.zeros((n_y, 4))])
    esn_bytes = sum(len(m.encode()) for m in esn_client.update_messages(1))
    assert esn_bytes == 8 * (n_x * n_x + n_x * n_y) + 2 * 18

    mdrs_spec = ReservoirSpec(n_input=n_y, n_reservoir=n_x, density=0.2,
                              input_scaling=0.01, seed=4)
    mdrs_message, _ = client_round([np.zeros((n_y, 4))], mdrs_spec, build_weights(mdrs_spec))
    assert esn_bytes > len(mdrs_message.encode())


@criterion(7, "detection capability on the synthetic benchmark")
def test_criterion_7_detection_capability():
    mdrs_values, esn_values = [], []
    for seed in range(5):
        dataset = benchmark_dataset(seed)
        mdrs_spec = ReservoirSpec(
            n_input=dataset.n_channels, n_reservoir=500,
            input_scaling=0.001, seed=seed, subsample_size=200,
        )
        esn_spec = ReservoirSpec(
            n_input=dataset.n_channels, n_reservoir=500,
            input_scaling=0.001, seed=seed,
        )
        mdrs_values.append(federated_mean_auc(dataset, mdrs_spec, "mdrs"))
        esn_values.append(federated_mean_auc(dataset, esn_spec, "esn_sre"))
    mdrs_mean = float(np.mean(mdrs_values))
    esn_mean = float(np.mean(esn_values))
    assert mdrs_mean >= 0.90, (mdrs_values, esn_values)
    assert mdrs_mean > esn_mean, (mdrs_values, esn_values)


@criterion(8, "metric correctness against brute-force oracles")
def test_criterion_8_metric_oracles():
    def roc_oracle(scores, labels):
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        total = 0.0
        for p in pos:
            for n in neg:
                total += 1.0 if p > n else (0.5 if p == n else 0.0)
        return total / (pos.size * neg.size)

    def pr_oracle(scores, labels):
        n_pos = int(labels.sum())
        area, prev_recall = 0.0, 0.0
        for threshold in sorted(set(scores.tolist()), reverse=True):
            predicted = scores >= threshold
            tp = int((predicted & (labels == 1)).sum())
            area += (tp / n_pos - prev_recall) * (tp / int(predicted.sum()))
            prev_recall = tp / n_pos
        return area

    rng = np.random.default_rng(808)
    for case in range(1000):
        n = int(rng.integers(2, 61))
        labels = np.zeros(n, dtype=int)
        labels[: int(rng.integers(1, n))] = 1
        rng.shuffle(labels)
        if case % 2:  # half the cases are tie-heavy
            pool = rng.normal(size=int(rng.integers(2, 8)))
            scores = rng.choice(pool, size=n)
        else:
            scores = rng.normal(size=n)
        assert abs(auc_roc(scores, labels) - roc_oracle(scores, labels)) < 1e-12
        assert abs(auc_pr(scores, labels) - pr_oracle(scores, labels)) < 1e-12


@criterion(9, "end-to-end determinism of artifacts")
def test_criterion_9_end_to_end_determinism(tmp_path):
    config = {
        "method": "mdrs",
        "mode": "incfed",
        "n_clients": 4,
        "reservoir": {"n_reservoir": 32, "density": 0.2, "input_scaling": 0.01,
                      "seed": 12, "subsample_size": 16},
        "data": {"synthetic": {"seed": 5, "n_train_series": 8, "train_length": 60,
                               "n_test_series": 2, "test_length": 90,
                               "duration_range": [3, 9]}},
    }
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps(config))
    runner = CliRunner()
    for out in ("run1", "run2"):
        result = runner.invoke(cli_main, [
            "fed", "--config", str(config_path), "--out", str(tmp_path / out)
        ])
        assert result.exit_code == 0, result.output
    first, second = tmp_path / "run1", tmp_path / "run2"
    assert (first / "model.rsmx").read_bytes() == (second / "model.rsmx").read_bytes()
    for score_file in sorted(first.glob("scores_*.csv")):
        assert score_file.read_bytes() == (second / score_file.name).read_bytes()
    for message in sorted((first / "messages").iterdir()):
        assert message.read_bytes() == (second / "messages" / message.name).read_bytes()

    # centralized path: same check through train + score
    central = {**config, "mode": "centralized", "n_clients": 1}
    config_path.write_text(json.dumps(central))
    models = []
    for out in ("m1", "m2"):
        result = runner.invoke(cli_main, [
            "train", "--config", str(config_path), "--out", str(tmp_path / out)
        ])
        assert result.exit_code == 0, result.output
        models.append((tmp_path / out / "model.rsmx").read_bytes())
    assert models[0] == models[1]
