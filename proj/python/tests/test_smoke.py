import json
import math

import numpy as np
import pytest

import luq


def test_spline_recovers_piecewise_linear():
    t = np.linspace(0.0, 1.0, 101)
    y = np.interp(t, [0.0, 0.3, 1.0], [0.0, 1.0, -0.5])
    fit = luq.fit_spline(t, y, 3)
    assert fit["sse"] < 1e-12
    assert fit["knot_times"][1] == pytest.approx(0.3, abs=1e-6)
    assert luq.eval_spline(fit["knot_times"], fit["knot_values"], 0.65) == pytest.approx(0.25, abs=1e-6)


def test_filter_series_shape():
    t = np.linspace(0.0, 10.0, 201)
    y = np.exp(-0.3 * t) * np.cos(2.0 * t)
    out = luq.filter_series(t, y, 0, 200, num_filter_obs=20)
    assert len(out["values"]) == 20
    assert len(out["times"]) == 20
    assert 3 <= out["knots_used"] <= 12


def test_kmeans_separates_blobs():
    rng = np.random.default_rng(0)
    data = np.vstack([rng.normal(0, 0.1, (30, 2)), rng.normal(5, 0.1, (30, 2))])
    res = luq.kmeans_fit(data, 2, n_init=3, seed=1)
    labels = np.asarray(res["labels"])
    assert len(set(labels[:30])) == 1 and len(set(labels[30:])) == 1
    assert labels[0] != labels[-1]


def test_svm_roundtrip():
    rng = np.random.default_rng(1)
    x = np.vstack([rng.normal(-2, 0.3, (20, 2)), rng.normal(2, 0.3, (20, 2))])
    y = [0] * 20 + [1] * 20
    model, selected, rates = luq.select_classifier(x, y, [{"kernel": "linear"}, {"kernel": "rbf"}], k_folds=4)
    assert selected in (0, 1)
    assert len(rates) == 2
    assert list(model.classify(x)) == y
    again = luq.Classifier.from_json(model.to_json())
    assert list(again.classify(x)) == y


def test_kpca_linear_matches_pca():
    rng = np.random.default_rng(2)
    y = rng.normal(size=(50, 4)) @ np.diag([3.0, 1.0, 0.3, 0.1])
    qmap = luq.kpca_fit(y, {"kernel": "linear"}, 2)
    z = qmap.transform(y)
    assert z.shape == (50, 2)
    assert qmap.variance_explained > 0.5
    restored = luq.QoiMap.from_json(qmap.to_json())
    assert np.allclose(restored.transform(y), z)
    assert json.loads(qmap.to_json())


def test_kde_and_ratios():
    rng = np.random.default_rng(3)
    s = rng.normal(size=(400, 1))
    kde = luq.Kde(s)
    val = kde(np.array([[0.0]]))[0]
    assert val == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=0.15)
    ratios, mean = luq.compute_ratios(s, s)
    assert np.allclose(ratios, 1.0)
    assert mean == pytest.approx(1.0)


def test_models():
    t = np.linspace(0.0, 5.0, 11)
    x = luq.oscillator_series(0.1, 1.0, t)
    assert x[0] == pytest.approx(3.0)
    s = luq.selkov_series(0.1, 0.6, t)
    assert len(s) == 11
    b = luq.burgers_series(1.0, 6.5, [0.0, 1.0])
    assert len(b) == 2


def test_generate_experiment():
    ex = luq.generate_experiment("oscillator", seed=3, num_obs=10, num_pred=20)
    assert ex["predicted"].shape[0] == 20
    assert ex["observed"].shape[0] == 10
    assert ex["parameter_names"] == ["c", "omega0"]


def test_errors_are_typed(tmp_path):
    with pytest.raises(luq.ConfigError):
        luq.kpca_fit(np.eye(3), {"kernel": "laplace"}, 1)
    with pytest.raises(luq.Error):
        luq.load_ensemble(tmp_path / "missing.csv")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1}))
    with pytest.raises(luq.ConfigError):
        luq.run(cfg)


def test_run_stage_requires_artifacts(tmp_path):
    cfg = {
        "seed": 7,
        "experiment": {"name": "oscillator", "num_obs": 40, "num_pred": 80},
        "filter": {"time_start_idx": 0, "time_end_idx": 500, "max_knots": 6},
        "clustering": {"K": 2, "n_init": 2},
        "svm": {"k_folds": 3},
        "qoi": {"mode": "fixed", "n": 2},
        "density": {"grid_n": 100},
        "output_dir": str(tmp_path / "out"),
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    with pytest.raises(luq.MissingArtifactError):
        luq.run(path, stage="filter")
    log = luq.run(path)
    assert (tmp_path / "out" / "manifest.json").exists()
    assert isinstance(log, str)
    assert luq.stages()[0] == "generate"
