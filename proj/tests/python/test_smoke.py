"""Smoke tests for the Python bindings: one pass over the main operations."""

import numpy as np
import pytest

import batt


def small_image():
    rng = np.random.default_rng(3)
    return rng.random((1, 8, 8), dtype=np.float32)


def test_rotate_identity_and_permutation():
    x = small_image()
    assert np.array_equal(batt.rotate(x, 0.0), x)
    r90 = batt.rotate(x, 90.0)
    # output(r, c) == input(c, n-1-r) for a square image
    n = 8
    for r in range(n):
        for c in range(n):
            assert r90[0, r, c] == x[0, c, n - 1 - r]


def test_translate_moves_content():
    x = np.zeros((1, 4, 6), dtype=np.float32)
    x[0, 2, 1] = 1.0
    y = batt.translate_h(x, 2, fill=0.25)
    assert y[0, 2, 3] == 1.0
    assert np.all(y[0, :, 0] == 0.25)
    with pytest.raises(batt.BattRangeError):
        batt.translate_h(x, 6)


def test_resize_constant():
    x = np.full((3, 5, 5), 0.5, dtype=np.float32)
    y = batt.resize(x, 9, 7)
    assert y.shape == (3, 9, 7)
    assert np.allclose(y, 0.5)


def test_poison_pipeline_end_to_end(tmp_path):
    spec = batt.SynthSpec()
    spec.train_count = 120
    spec.test_count = 60
    spec.seed = 5
    train_ds, test_ds = batt.make_synthetic(spec)
    assert len(train_ds) == 120
    assert train_ds.num_classes == 10

    cfg = batt.PoisonConfig(gamma=0.1, target_label=1, seed=9)
    idx = batt.select_poison_indices(train_ds, cfg)
    assert len(idx) == 12

    poisoned = batt.build_poisoned_dataset(train_ds, cfg)
    assert poisoned.poisoned_count() == 12
    flagged = [poisoned[i] for i in idx]
    assert all(s.poisoned and s.label == 1 for s in flagged)

    # battds round trip
    path = str(tmp_path / "p.battds")
    batt.write_battds(poisoned, path)
    again = batt.read_battds(path)
    assert again.digest() == poisoned.digest()

    # a tiny training run plus the evaluation surface
    hp = batt.HyperParams()
    hp.epochs = 2
    hp.batch_size = 16
    hp.lr_decay_epochs = []
    hp.seed = 9
    arch = batt.ArchSpec.convnet_s(1, 28, 28, 10)
    model = batt.train(poisoned, arch, hp, threads=2)
    assert model.epochs_trained == 2
    assert len(model.epoch_losses) == 2

    ba = batt.benign_accuracy(model, test_ds)
    asr = batt.attack_success_rate(model, test_ds, cfg)
    assert 0.0 <= ba <= 1.0
    assert 0.0 <= asr <= 1.0

    sweep = batt.theta_sweep(model, test_ds, cfg, [0.0, 16.0])
    assert [t for t, _ in sweep] == [0.0, 16.0]
    assert sweep[1][1] == asr  # same code path at theta*

    ckpt = str(tmp_path / "m.ckpt")
    batt.save_checkpoint(model, ckpt)
    loaded = batt.load_checkpoint(ckpt)
    assert loaded.digest() == model.digest()

    cls, scores = batt.predict(model, test_ds[0].image.to_numpy())
    assert cls == int(np.argmax(scores))


def test_grad_check_binding():
    passed, max_err, worst = batt.grad_check(tolerance=1e-2)
    assert passed, f"max rel error {max_err} at {worst}"


def test_defenses_binding():
    spec = batt.SynthSpec()
    spec.train_count = 80
    spec.test_count = 40
    spec.seed = 6
    train_ds, test_ds = batt.make_synthetic(spec)
    cfg = batt.PoisonConfig(gamma=0.1, target_label=0, seed=2)
    hp = batt.HyperParams()
    hp.epochs = 1
    hp.batch_size = 16
    hp.lr_decay_epochs = []
    model = batt.train(train_ds, batt.ArchSpec.convnet_s(1, 28, 28, 10), hp)

    curve = batt.prune_defense(model, test_ds, [0.0, 0.5], test_ds, cfg)
    pts = curve.points()
    assert len(pts) == 2
    assert pts[0][0] == 0.0

    ft = batt.fine_tune_defense(model, train_ds, 1, test_ds, cfg)
    assert len(ft.points()) == 2
