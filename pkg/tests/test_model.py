import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from synthseg.batchpipe import PipeConfig
from synthseg.io import read_ply, write_ply
from synthseg.model import (AdamState, MlpClassifier, ModelError, TrainConfig, adam_step,
                            evaluate, extract_features, features_from_arrays, forward,
                            load_checkpoint, loss_and_grad, predict_cloud, predict_labels,
                            save_checkpoint, softmax, train)
from synthseg.model.mlp import decode_checkpoint, encode_checkpoint
from synthseg.model.train import class_weights, saturated, scored_ids
from synthseg.pcdcore import PointCloud
from synthseg.synthworld.scene import L
from synthseg.synthworld.toyclouds import ground_and_boxes_cloud, write_cloud_dataset
from synthseg.taxonomy import get_taxonomy, paint_by_label

from oracles import finite_difference_grads, max_relative_error, random_model_and_batch

CARLA = get_taxonomy("carla12")


# ------------------------------------------------------------------ features

def test_coplanar_points_are_planar():
    # Spacing 0.25 is exact in binary and never puts a neighbor exactly on the
    # 0.8 m radius, so every interior neighborhood is the same symmetric disk.
    g = np.arange(-20, 21) * 0.25
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
    f = features_from_arrays(pts, None, radius=0.8)
    # A disk-shaped neighborhood has two equal in-plane eigenvalues and a zero normal one.
    assert np.allclose(f[:, 1], 1.0, atol=1e-9)
    interior = np.all(np.abs(pts[:, :2]) <= 5 - 0.8, axis=1)
    assert np.all(np.abs(f[interior, 2] - 1.0) < 0.05)
    assert np.all(f[interior, 3] < 0.05)
    assert np.allclose(f[:, 0], 0.0)


def test_line_is_linear():
    pts = np.column_stack([np.arange(0, 10, 0.1), np.zeros(100), np.zeros(100)])
    f = features_from_arrays(pts, None, radius=0.8)
    assert np.allclose(f[:, 3], 1.0) and np.allclose(f[:, 2], 0.0)


def test_isolated_points_degenerate():
    pts = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0.0]])
    f = features_from_arrays(pts, [[10, 20, 30]] * 3, radius=0.8)
    assert np.allclose(f[:, 4], 1 / 64)
    assert np.all(f[:, 1:4] == 0)
    assert np.allclose(f[:, 5:8], np.array([10, 20, 30]) / 255)


def test_depth_modality_zeroes_color():
    cloud = ground_and_boxes_cloud(0, 500)
    f = extract_features(cloud, modality="D")
    assert f.shape == (500, 8) and not f[:, 5:].any() and np.isfinite(f).all()
    assert extract_features(cloud)[:, 5:].any()


def test_feature_ranges():
    rng = np.random.default_rng(3)
    f = features_from_arrays(rng.normal(size=(400, 3)), rng.integers(0, 256, (400, 3)))
    assert np.all((f[:, 1:5] >= 0) & (f[:, 1:5] <= 1 + 1e-12))
    assert np.all((f[:, 5:] >= 0) & (f[:, 5:] <= 1))
    with pytest.raises(ValueError):
        features_from_arrays(np.zeros((0, 3)))


# -------------------------------------------------------------- forward/loss

def test_zero_parameters_give_log_c():
    m = MlpClassifier.create(CARLA, 16)
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    feats = np.random.default_rng(0).normal(size=(30, 8))
    loss, _ = loss_and_grad(m, feats, np.arange(30) % 12 + 1)
    assert loss == pytest.approx(math.log(len(CARLA)), abs=1e-12)
    assert np.allclose(softmax(forward(m, feats)), 1 / len(CARLA))


def test_gradient_check_small_draws():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m, f, l, w = random_model_and_batch(rng, CARLA)
        _, grads = loss_and_grad(m, f, l, w)
        assert max_relative_error(grads, finite_difference_grads(m, f, l, w)) < 1e-4


def test_duplicate_batch_invariance():
    rng = np.random.default_rng(1)
    m, f, l, w = random_model_and_batch(rng, CARLA)
    a, ga = loss_and_grad(m, f, l, w)
    b, gb = loss_and_grad(m, np.vstack([f, f]), np.concatenate([l, l]), w)
    assert a == pytest.approx(b, rel=1e-12)
    for k in ga:
        np.testing.assert_allclose(ga[k], gb[k], rtol=1e-10, atol=1e-14)


def test_unlabelled_points_do_not_contribute():
    rng = np.random.default_rng(2)
    m, f, l, _ = random_model_and_batch(rng, CARLA)
    extra = rng.normal(size=(5, 8))
    a, _ = loss_and_grad(m, f, l)
    b, _ = loss_and_grad(m, np.vstack([f, extra]), np.concatenate([l, np.zeros(5, int)]))
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ModelError):
        loss_and_grad(m, f, np.zeros(len(f), int))


@given(st.integers(0, 2**32 - 1))
def test_softmax_sums_to_one(seed):
    s = np.random.default_rng(seed).normal(0, 30, (20, 13))
    assert np.allclose(softmax(s).sum(axis=1), 1.0, atol=1e-9)


def test_shape_errors():
    m = MlpClassifier.create(CARLA, 4)
    with pytest.raises(ModelError):
        forward(m, np.zeros((3, 7)))
    small = MlpClassifier.create(get_taxonomy("common4"), 4)
    with pytest.raises(ModelError):  # output size must match the taxonomy
        MlpClassifier(CARLA, small.params, np.zeros(8), np.ones(8))
    with pytest.raises(ModelError):
        MlpClassifier(small.taxonomy, small.params, np.zeros(8), np.zeros(8))


# --------------------------------------------------------------------- Adam

def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    out = adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert np.array_equal(out["w"], p["w"])


def test_adam_first_step_moves_by_lr():
    out = adam_step({"w": np.array(3.0)}, {"w": np.array(1.0)}, AdamState())
    assert abs((3.0 - out["w"]) - 0.001) <= 1e-9


def test_adam_decay_schedule():
    s = AdamState()
    for epoch in range(1, 10):
        s.end_epoch(epoch)
    assert s.learning_rate == 0.001
    s.end_epoch(10)
    assert s.learning_rate == pytest.approx(0.0007, abs=1e-15)
    for epoch in range(11, 21):
        s.end_epoch(epoch)
    assert s.learning_rate == pytest.approx(0.00049, abs=1e-15)


def test_adam_rejects_bad_shapes_and_settings():
    with pytest.raises(ModelError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
    with pytest.raises(ModelError):
        AdamState(learning_rate=0)
    with pytest.raises(ModelError):
        AdamState(beta1=1.0)


# ---------------------------------------------------------------- prediction

def test_bias_forces_class():
    m = MlpClassifier.create(CARLA, 8)
    m.params["b2"] = np.where(np.arange(len(CARLA)) == 3, 1e6, 0.0)
    out = predict_cloud(m, ground_and_boxes_cloud(1, 300))
    assert np.all(out.labels == 3)


def test_ties_go_to_lowest_class():
    m = MlpClassifier.create(CARLA, 8)
    m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
    assert np.all(predict_labels(m, np.ones((4, 8))) == 0)


@given(st.integers(0, 2**32 - 1), st.floats(-100, 100))
def test_argmax_invariant_to_score_shift(seed, c):
    rng = np.random.default_rng(seed)
    m = MlpClassifier.create(CARLA, 8, seed=seed % 1000)
    f = rng.normal(size=(50, 8))
    a = predict_labels(m, f)
    shifted = m.copy()
    shifted.params["b2"] = shifted.params["b2"] + c
    s_a, s_b = forward(m, f), forward(shifted, f)
    margin = np.sort(s_a, axis=1)
    clear = margin[:, -1] - margin[:, -2] > 1e-9  # skip numerically tied rows
    assert np.array_equal(a[clear], predict_labels(shifted, f)[clear])
    assert np.allclose(s_b - s_a, c)


def test_predict_preserves_geometry_and_exports_palette(tmp_path):
    cloud = ground_and_boxes_cloud(2, 400)
    m = MlpClassifier.create(CARLA, 8, seed=3)
    out = predict_cloud(m, cloud)
    assert np.array_equal(out.positions, cloud.positions)
    assert np.array_equal(out.colors, cloud.colors)
    painted = paint_by_label(out)
    write_ply(painted, tmp_path / "p.ply")
    back = read_ply(tmp_path / "p.ply")
    assert np.array_equal(back.colors, CARLA.palette()[back.labels])
    assert np.array_equal(back.labels, out.labels)


def test_predict_empty_cloud():
    out = predict_cloud(MlpClassifier.create(CARLA), PointCloud(np.zeros((0, 3))))
    assert len(out) == 0


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip(tmp_path):
    m = MlpClassifier.create(CARLA, 12, seed=5, modality="D", radius=0.6)
    m.fit_standardization(np.random.default_rng(0).normal(3, 2, (50, 8)))
    save_checkpoint(m, tmp_path / "m.bin")
    back = load_checkpoint(tmp_path / "m.bin")
    assert back.dims == m.dims and back.modality == "D" and back.radius == 0.6
    assert back.taxonomy.name == "carla12"
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])
    assert np.array_equal(back.offset, m.offset) and np.array_equal(back.scale, m.scale)


def test_checkpoint_rejects_corruption():
    data = encode_checkpoint(MlpClassifier.create(CARLA, 4))
    with pytest.raises(ModelError):
        decode_checkpoint(b"NOTAMODEL" + data[9:])
    with pytest.raises(ModelError):
        decode_checkpoint(data[:-8])
    with pytest.raises(ModelError):
        decode_checkpoint(data + b"\0")


# ------------------------------------------------------------------ training

def test_class_weights():
    w = class_weights(np.array([99, 10, 30, 0]))
    assert w.tolist() == pytest.approx([1.0, 2.0, 2 / 3, 1.0])
    assert class_weights(np.array([0, 1000, 1, 0]), 10.0)[2] == 10.0


def test_saturation_rule():
    assert not saturated([0.1, 0.2, 0.3], 5, 1e-3)
    assert saturated([0.5, 0.1, 0.2, 0.3, 0.4, 0.5], 5, 1e-3)
    assert not saturated([0.5, 0.1, 0.2, 0.3, 0.4, 0.502], 5, 1e-3)
    assert not saturated([0.5] * 5 + [math.nan], 5, 1e-3)


def test_scored_ids_default_dominant():
    assert [CARLA.names[i] for i in scored_ids(CARLA, None)] == [
        "Building", "Road", "Sidewalk", "Vegetation", "Car"]


@pytest.fixture(scope="module")
def toy_manifests(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    tr = write_cloud_dataset([ground_and_boxes_cloud(s, 3000) for s in range(5)], d / "train")
    va = write_cloud_dataset([ground_and_boxes_cloud(100 + s, 3000) for s in range(2)], d / "val")
    return tr, va


def toy_config(**kw):
    base = dict(sample_size=2048, minibatch_size=256, scored_classes=("Road", "Building"),
                pipe=PipeConfig(queue_limit=2, buffer_limit=1))
    base.update(kw)
    return TrainConfig(**base)


def test_training_is_deterministic(toy_manifests, tmp_path):
    tr, va = toy_manifests
    a = train(tr, va, toy_config(max_epochs=2, seed=4), log_path=tmp_path / "a.csv")
    b = train(tr, va, toy_config(max_epochs=2, seed=4))
    assert a.log_csv() == b.log_csv()
    assert (tmp_path / "a.csv").read_text() == a.log_csv()
    assert a.log_csv().splitlines()[0] == "epoch,loss,val_miou"
    for k in a.model.params:
        assert np.array_equal(a.model.params[k], b.model.params[k])


def test_toy_loss_strictly_decreases(toy_manifests):
    tr, va = toy_manifests
    r = train(tr, va, toy_config(max_epochs=10, min_improvement=-1.0))
    losses = [e.loss for e in r.log]
    assert len(losses) == 10
    assert all(b < a for a, b in zip(losses, losses[1:])), losses
    assert evaluate(r.model, va, ("Road", "Building")).miou > 0.9


def test_zero_epochs_returns_untrained_model(toy_manifests):
    tr, va = toy_manifests
    r = train(tr, va, toy_config(max_epochs=0, seed=9))
    fresh = MlpClassifier.create(CARLA, 64, seed=9)
    assert r.log == [] and not r.stopped_early
    for k in fresh.params:
        assert np.array_equal(r.model.params[k], fresh.params[k])


def test_early_stop_on_saturation(toy_manifests):
    tr, va = toy_manifests
    r = train(tr, va, toy_config(max_epochs=40, min_improvement=0.5, patience_window=2))
    assert r.stopped_early and 3 <= len(r.log) < 40
    history = [e.val_miou for e in r.log]
    assert saturated(history, 2, 0.5) and not saturated(history[:-1], 2, 0.5)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(steps_per_epoch=0)
    with pytest.raises(ValueError):
        TrainConfig(modality="RGB")
