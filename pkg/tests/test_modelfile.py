import json

import numpy as np
import pytest

from dbl.dataset import apply_discretization, encode_features, fit_encoder
from dbl.datasets import load_bundled
from dbl.modelfile import FORMAT_VERSION, ModelFileError, load_model, model_from_dict, model_to_dict, save_model
from dbl.training import AlgoSpec, fit_model


@pytest.mark.parametrize("algo,n", [("nb", 1), ("anje", 2), ("ande", 2), ("ande", 3), ("dbl", 2), ("lr", 3)])
def test_round_trip_bit_for_bit(tmp_path, algo, n):
    raw = load_bundled("heart-disease")
    enc = fit_encoder(raw)
    data = apply_discretization(raw, enc)
    fitted = fit_model(AlgoSpec(algo, n=n), data)
    path = tmp_path / "m.json"
    save_model(path, fitted, enc, raw.meta, raw.class_meta.name)
    loaded, enc2, meta2 = load_model(path)
    assert enc2 == enc and tuple(meta2) == raw.meta
    X2, _ = encode_features(raw, enc2)
    assert np.array_equal(fitted.log_posterior(data.X), loaded.log_posterior(X2))


def test_ande_degenerate_round_trip(tmp_path):
    # titanic has 3 attributes, so n=4 leaves a single superparent set
    raw = load_bundled("titanic")
    enc = fit_encoder(raw)
    data = apply_discretization(raw, enc)
    fitted = fit_model(AlgoSpec("ande", n=4, max_n=4), data)
    save_model(tmp_path / "m.json", fitted, enc, raw.meta)
    loaded, _, _ = load_model(tmp_path / "m.json")
    assert np.array_equal(fitted.log_posterior(data.X), loaded.log_posterior(data.X))


def test_floats_have_17_digits(tmp_path):
    raw = load_bundled("lenses")
    enc = fit_encoder(raw)
    fitted = fit_model(AlgoSpec("dbl", n=2), apply_discretization(raw, enc))
    save_model(tmp_path / "m.json", fitted, enc, raw.meta)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["format_version"] == FORMAT_VERSION
    assert doc["regularization"] == {"C": 0.01, "center": 1.0}
    w = np.asarray(doc["weights"])
    assert np.array_equal(w, fitted.model.weights)


def test_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "bad.json")
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "missing.json")
    raw = load_bundled("lenses")
    enc = fit_encoder(raw)
    doc = model_to_dict(fit_model(AlgoSpec("nb"), apply_discretization(raw, enc)), enc, raw.meta)
    del doc["log_theta"]
    doc["algo"] = "lr"
    with pytest.raises(ModelFileError, match="betas"):
        model_from_dict(doc)
