import json

import pytest

from resad.config import ConfigError, RunConfig


def minimal(**overrides):
    doc = {"data": {"synthetic": {"seed": 1, "n_train_series": 2, "n_test_series": 1}}}
    doc.update(overrides)
    return doc


def test_defaults_fill_in():
    cfg = RunConfig.from_dict(minimal())
    assert cfg.method == "mdrs"
    assert cfg.mode == "centralized"
    assert cfg.delta == 1e-4
    assert cfg.normalization == "minmax"
    assert cfg.metrics == ("auc_roc", "auc_pr")


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict(minimal(bogus=1))


def test_missing_data_section_rejected():
    with pytest.raises(ConfigError, match="data"):
        RunConfig.from_dict({"method": "mdrs"})


@pytest.mark.parametrize(
    "overrides,match",
    [
        (dict(method="rocket"), "method"),
        (dict(mode="p2p"), "mode"),
        (dict(partition="randomly"), "partition"),
        (dict(normalization="robust"), "normalization"),
        (dict(metrics=["f1"]), "metric"),
        (dict(delta=0.0), "delta"),
        (dict(beta=-1.0), "beta"),
        (dict(n_clients=0), "n_clients"),
        (dict(rounds=0), "rounds"),
        (dict(reservoir={"n_nodes": 5}), "reservoir"),
        (dict(data={"synthetic": {}, "csv": {}}), "exactly one"),
        (dict(data={"csv": {"train": []}}), "requires key"),
        (dict(data={"synthetic": {"magnitude": -1}}), "synthetic"),
    ],
)
def test_validation_failures(overrides, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(minimal(**overrides))


def test_centralized_ignores_clients_with_warning():
    with pytest.warns(UserWarning, match="n_clients"):
        RunConfig.from_dict(minimal(mode="centralized", n_clients=4))


def test_fingerprint_stable_and_sensitive():
    a = RunConfig.from_dict(minimal())
    b = RunConfig.from_dict(minimal())
    c = RunConfig.from_dict(minimal(delta=2e-4))
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != c.fingerprint
    # explicit defaults hash the same as omitted ones
    d = RunConfig.from_dict(minimal(method="mdrs", rounds=1))
    assert d.fingerprint == a.fingerprint


def test_from_file_and_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(minimal()))
    assert RunConfig.from_file(path).method == "mdrs"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="JSON"):
        RunConfig.from_file(path)
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.from_file(tmp_path / "missing.json")


def test_build_dataset_synthetic_and_spec():
    cfg = RunConfig.from_dict(minimal(reservoir={"n_reservoir": 16, "seed": 9}))
    ds = cfg.build_dataset()
    assert ds.n_channels == 3
    assert ds.normalization is not None
    spec = cfg.build_spec(ds.n_channels)
    assert spec.n_input == 3
    assert spec.n_reservoir == 16


def test_build_spec_rejects_channel_mismatch():
    cfg = RunConfig.from_dict(minimal(reservoir={"n_input": 7, "n_reservoir": 16}))
    with pytest.raises(ConfigError, match="n_input"):
        cfg.build_spec(3)


def test_normalization_none_skips_fitting():
    cfg = RunConfig.from_dict(minimal(normalization="none"))
    assert cfg.build_dataset().normalization is None
