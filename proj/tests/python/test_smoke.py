import json

import numpy as np
import pytest

import ookfso


def test_default_config_round_trips():
    cfg = ookfso.default_config()
    assert ookfso.validate_config(cfg) == cfg
    assert cfg["channel"]["samples_per_bit"] == 35


def test_invalid_config_raises_with_code():
    with pytest.raises(ookfso.Error) as info:
        ookfso.validate_config({"train_fraction": 1.5})
    assert info.value.category == 1


def test_unknown_key_rejected():
    with pytest.raises(ookfso.Error):
        ookfso.validate_config({"no_such_key": 1})


def test_compose_shapes_and_determinism():
    bits = ookfso.generate_bits(20, 3)
    a, truth = ookfso.compose({"seed": 9}, bits)
    b, _ = ookfso.compose({"seed": 9}, bits)
    assert a.shape == (700,)
    np.testing.assert_array_equal(truth, bits)
    np.testing.assert_array_equal(a, b)
    noise, empty = ookfso.compose({"seed": 9}, None, 4)
    assert noise.shape == (140,) and empty.size == 0


def test_thermal_marginal_is_exponential():
    x = ookfso.sample_thermal(200_000, 2.0, 1.0, 1)
    assert abs(x.mean() - 2.0) < 0.03
    assert abs(x.var() / x.mean() ** 2 - 1.0) < 0.03


def test_scintillation_fit_recovers_index():
    x = ookfso.sample_turbulence(200_000, 1.8, 1.0, 4)
    _, _, si = ookfso.fit_scintillation(x)
    assert abs(si - 1.8) < 0.1


def test_score_and_f1():
    r = ookfso.score(np.array([0, 0, 1, 1], np.uint8), np.array([0, 1, 1, 0], np.uint8))
    assert r["accuracy"] == 0.5
    assert r["confusion"] == {"tp": 1, "fp": 1, "fn": 1, "tn": 1}
    assert ookfso.f1(8, 2, 4) == pytest.approx(8 / 11)
    with pytest.raises(ookfso.Error):
        ookfso.f1(0, 0, 0, 5)


def test_generate_train_predict(tmp_path):
    cfg = {
        "corpus_bits": 700,
        "bit_corpus_bits": 1500,
        "cases": ["thermal"],
        "output_dir": str(tmp_path),
        "train": {"demod": {"epochs": 2}},
    }
    paths = ookfso.generate(cfg)
    assert len(paths) == 2
    bits_path = next(p for p in paths if p.endswith("bits.ookd"))
    ds = ookfso.load_dataset(bits_path)
    assert ds["kind"] == "bit" and ds["values"].shape == (1500, 1, 35)
    model_path, history_path = ookfso.train(cfg, "demod", bits_path)
    labels, prob = ookfso.predict(model_path, bits_path)
    assert labels.shape == (1500,)
    assert ((prob >= 0) & (prob <= 1)).all()
    assert (labels == (prob > 0.5)).mean() > 0.99
    assert (labels == ds["labels"]).mean() > 0.9
    with open(history_path) as f:
        assert len(f.read().strip().splitlines()) == 3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["files"]) == 2
