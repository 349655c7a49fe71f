import itertools

import numpy as np
import pytest

from airwaygeom.decision import (P3, P5, W3, DecisionModel, ModelError, ScalerRequiredError, attach_scaler,
                                 builtin_models, label_for, load_model, load_scaler, predict, save_model,
                                 train_model)
from airwaygeom.ml import Dataset, loocv_evaluate, make_classifier, planted_dataset


@pytest.mark.parametrize("P", [P3, P5])
def test_published_matrices_near_orthonormal(P):
    P = np.array(P)
    assert np.allclose(np.linalg.norm(P, axis=0), 1.0, atol=2e-3)
    assert np.allclose(np.linalg.norm(P, axis=1), 1.0, atol=2e-3)
    for i, j in itertools.combinations(range(len(P)), 2):
        assert abs(P[i] @ P[j]) <= 4e-3
        assert abs(P[:, i] @ P[:, j]) <= 4e-3


def test_model3_hand_score():
    m = builtin_models()["model3"]
    # w . P e1 = sum_i w_i P[i][0]
    hand = sum(w * row[0] for w, row in zip(W3, P3))
    score = m.score_normalized([1.0, 0.0, 0.0])
    assert score == pytest.approx(hand, abs=1e-12)
    assert score == pytest.approx(-0.547, abs=0.002)
    assert label_for(score) == 0


def test_zero_score_is_control():
    assert label_for(0.0) == 0 and label_for(1e-12) == 1


def test_builtin_needs_scaler():
    m = builtin_models()["model5"]
    assert not m.has_scaler
    with pytest.raises(ScalerRequiredError):
        predict(m, {a: 40.0 for a in m.angles})


def test_predict_with_scaler():
    m = builtin_models()["model3"]
    means = {a: 40.0 for a in m.angles}
    stds = {a: 10.0 for a in m.angles}
    m = attach_scaler(m, means, stds)
    label, score = predict(m, {"B121A1": 50.0, "B122A2": 40.0, "B1121A2": 40.0})
    assert score == pytest.approx(m.score_normalized([1.0, 0.0, 0.0]))
    assert label == 0


def test_missing_angle():
    m = attach_scaler(builtin_models()["model3"], *({a: 1.0 for a in ("B121A1", "B122A2", "B1121A2")},) * 2)
    with pytest.raises(ModelError, match="B1121A2"):
        predict(m, {"B121A1": 1.0, "B122A2": 1.0})


@pytest.mark.parametrize("kw,msg", [
    (dict(P=np.eye(2)), "P must"),
    (dict(w=[1.0]), "w must"),
    (dict(angles=("B1A1", "B1A1", "B11A1")), "unique"),
    (dict(angles=("B1A1", "B13A1", "B11A1")), "B13A1"),
    (dict(means=[0, 0, 0]), "together"),
    (dict(means=[0, 0, 0], stds=[1, 0, 1]), "positive"),
])
def test_model_validation(kw, msg):
    base = dict(angles=("B1A1", "B1A2", "B11A1"), P=np.eye(3), w=[1.0, 2.0, 3.0])
    base.update(kw)
    with pytest.raises(ModelError, match=msg):
        DecisionModel(**base)


def test_save_load_round_trip(tmp_path):
    m = builtin_models()["model5"].with_scaler(np.arange(5) + 30.0, np.arange(5) + 1.0)
    save_model(m, tmp_path / "m.json")
    assert load_model(tmp_path / "m.json") == m
    means, stds = load_scaler(tmp_path / "m.json")
    assert means["B1111A2"] == 34.0 and stds["B121A1"] == 1.0


def test_load_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ModelError):
        load_model(p)
    p.write_text('{"angles": ["B1A1"]}')
    with pytest.raises(ModelError, match="field"):
        load_model(p)


@pytest.mark.parametrize("k,bias", [(1, True), (2, True), (3, False), (3, True)])
def test_trained_model_matches_pipeline(k, bias):
    ds = planted_dataset(["B1A1", "B1A2", "B11A1"], n=30, seed=8)
    model = train_model(ds, ds.codes, k=k, fit_bias=bias)
    pipe = make_classifier(k, fit_bias=bias).fit(ds.features, ds.labels)
    for row in ds.features:
        label, score = predict(model, dict(zip(ds.codes, row)))
        assert score == pytest.approx(pipe.decision_function(row[None])[0], abs=1e-9)
        assert label == pipe.predict(row[None])[0]
    assert np.allclose(model.P @ model.P.T, np.eye(3), atol=1e-9)


def test_weight_scaling_keeps_labels():
    ds = planted_dataset(["B1A1", "B1A2", "B11A1"], n=30, seed=2)
    model = train_model(ds, ds.codes, fit_bias=False)
    scaled = DecisionModel(model.angles, model.P, 3.7 * model.w, model.means, model.stds)
    for row in ds.features:
        x = dict(zip(ds.codes, row))
        assert predict(model, x)[0] == predict(scaled, x)[0]


def test_train_agrees_with_loocv_on_training_fold():
    ds = planted_dataset(["B1A1", "B1A2", "B11A1", "B11A2"], n=20, seed=5)
    keep = np.arange(ds.n) != 7
    train = Dataset([s for s, k in zip(ds.subject_ids, keep) if k], ds.labels[keep], ds.features[keep], ds.codes)
    model = train_model(train, ds.codes, k=2)
    cv = loocv_evaluate(ds, ds.codes, 2)
    assert predict(model, dict(zip(ds.codes, ds.features[7])))[0] == cv.predictions[7]
