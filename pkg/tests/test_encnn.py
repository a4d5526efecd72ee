import numpy as np
import pytest

from nidskit import encnn, model_io, nn, svm
from nidskit.encnn import (EnCnnConfig, LabelRangeError, MissingHeadError,
                           ShapeChainError, UntrainedModelError, build_model,
                           fit_svm_head, load_model, predict, save_model,
                           train_model)
from nidskit.errors import EmptyInputError
from nidskit.nn import Dense, SgdConfig, grad_check
from nidskit.rng import stream

from conftest import blob_grids


def tiny_config(**overrides):
    base = dict(stage_filters=(2, 3, 4), pooling_modes=("max",) * 3,
                dense_units=(8, 8), dropout_rate=0.0, class_count=5,
                grid_side=8, svm_head=False,
                sgd=SgdConfig(learning_rate=0.05, momentum=0.9, batch_size=16,
                              epochs=5, seed=11))
    base.update(overrides)
    return EnCnnConfig(**base)


class TestBuildModel:
    def test_shape_chain_s11(self):
        model = build_model(EnCnnConfig(grid_side=11, sgd=SgdConfig(seed=1)))
        # 11 -> 5 -> 2 -> 1 leaves a 64-channel 1x1 map
        flatten_width = 64 * 1 * 1
        dense_layers = [l for l in model.network.layers if isinstance(l, Dense)]
        assert dense_layers[0].weight.value.shape == (512, flatten_width)
        head = dense_layers[-1]
        assert head.weight.value.shape == (5, 512)
        assert head.weight.value.size + head.bias.value.size == 512 * 5 + 5

    def test_too_small_grid_rejected(self):
        with pytest.raises(ShapeChainError):
            build_model(EnCnnConfig(grid_side=4, sgd=SgdConfig(seed=1)))

    def test_s12_two_classes(self):
        model = build_model(EnCnnConfig(grid_side=12, class_count=2,
                                        sgd=SgdConfig(seed=1)))
        # 12 -> 6 -> 3 -> 1
        dense0 = next(l for l in model.network.layers if isinstance(l, Dense))
        assert dense0.weight.value.shape[1] == 64

    def test_shape_chain_matches_runtime_for_all_sides(self):
        for side in range(8, 33):
            cfg = tiny_config(grid_side=side)
            model = build_model(cfg)
            out = model.network.forward_logits(np.zeros((1, 1, side, side)))
            assert out.shape == (1, 5)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EnCnnConfig(stage_filters=(16, 32))
        with pytest.raises(ValueError):
            EnCnnConfig(pooling_modes=("max", "avg", "max"))
        with pytest.raises(ValueError):
            EnCnnConfig(dropout_rate=1.0)
        with pytest.raises(ValueError):
            EnCnnConfig(class_count=1)


class TestTrainModel:
    def test_blobs_reach_accuracy_and_loss_decreases(self):
        X, y = blob_grids(100, 2, side=8, seed=41)
        cfg = tiny_config(class_count=2,
                          sgd=SgdConfig(learning_rate=0.01, momentum=0.9,
                                        batch_size=32, epochs=10, seed=42))
        model = build_model(cfg)
        report = train_model(model, X, y)
        assert report.train_accuracy >= 0.95
        losses = report.epoch_losses
        assert len(losses) == 10
        for i in range(len(losses) - 2):
            assert losses[i + 2] <= losses[i] + 1e-9

    def test_zero_epochs_is_a_no_op(self):
        cfg = tiny_config(sgd=SgdConfig(epochs=0, seed=3))
        model = build_model(cfg)
        before = [p.value.copy() for p in model.network.parameters()]
        X, y = blob_grids(10, 5, side=8, seed=44)
        report = train_model(model, X, y)
        assert report.epoch_losses == []
        for p, b in zip(model.network.parameters(), before):
            assert np.array_equal(p.value, b)

    def test_determinism_bitwise(self):
        X, y = blob_grids(30, 3, side=8, seed=45)

        def run():
            cfg = tiny_config(class_count=3, dropout_rate=0.3,
                              pooling_modes=("stochastic",) * 3,
                              sgd=SgdConfig(learning_rate=0.05, momentum=0.9,
                                            batch_size=16, epochs=4, seed=46))
            model = build_model(cfg)
            report = train_model(model, np.abs(X), y)
            return report, [p.value.copy() for p in model.network.parameters()]

        r1, p1 = run()
        r2, p2 = run()
        assert r1.epoch_losses == r2.epoch_losses
        assert r1.train_accuracy == r2.train_accuracy
        for a, b in zip(p1, p2):
            assert np.array_equal(a, b)

    def test_label_validation(self):
        cfg = tiny_config(class_count=3)
        model = build_model(cfg)
        X, _ = blob_grids(5, 3, side=8, seed=47)
        with pytest.raises(LabelRangeError):
            train_model(model, X, np.array([0, 1, 2, 3, 0] + [0] * 10))
        with pytest.raises(EmptyInputError):
            train_model(model, X[:0], np.array([], dtype=int))
        with pytest.raises(EmptyInputError, match="class"):
            train_model(model, X, np.zeros(15, dtype=int))

    def test_memorization_capacity(self):
        # dropout 0 + max pooling memorizes a tiny task
        X, y = blob_grids(8, 4, side=8, seed=48, spread=1.2)
        cfg = tiny_config(class_count=4, stage_filters=(4, 6, 8),
                          dense_units=(16, 16),
                          sgd=SgdConfig(learning_rate=0.03, momentum=0.9,
                                        batch_size=8, epochs=200, seed=49))
        model = build_model(cfg)
        report = train_model(model, X, y)
        assert min(report.epoch_losses) < 0.01


class TestSvmHead:
    def test_untrained_model_rejected(self):
        model = build_model(tiny_config())
        X, y = blob_grids(5, 2, side=8, seed=50)
        with pytest.raises(UntrainedModelError):
            fit_svm_head(model, X, y)

    def test_separable_head_reaches_full_accuracy(self):
        rng = stream(51, "sep")
        X = np.vstack([rng.normal(size=(40, 6)) + 4.0,
                       rng.normal(size=(40, 6)) - 4.0])
        y = np.array([0] * 40 + [1] * 40)
        W, b = svm.fit_ovr_hinge(X, y, 2, lam=1e-4, epochs=10, seed=52)
        assert (svm.predict_ovr(X, W, b) == y).mean() == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(svm.SingleClassError):
            svm.fit_ovr_hinge(np.zeros((5, 3)), np.zeros(5, dtype=int), 2)

    def test_hinge_objective_decreases_under_decaying_steps(self):
        rng = stream(53, "hinge")
        X = np.vstack([rng.normal(size=(20, 4)) + 1.5,
                       rng.normal(size=(20, 4)) - 1.5])
        t = np.array([1.0] * 20 + [-1.0] * 20)
        objectives = []
        for epochs in range(1, 9):
            w, b = svm._fit_binary(X, t, lam=1e-3, epochs=epochs, lr0=0.2,
                                   batch_size=40, rng=stream(54, "fit"))
            objectives.append(svm.hinge_objective(X, t, w, b, 1e-3))
        assert all(b <= a + 1e-12 for a, b in zip(objectives, objectives[1:]))

    def test_head_predicts_through_model(self):
        X, y = blob_grids(60, 2, side=8, seed=55)
        cfg = tiny_config(class_count=2, svm_head=True,
                          sgd=SgdConfig(learning_rate=0.05, momentum=0.9,
                                        batch_size=32, epochs=8, seed=56))
        model = build_model(cfg)
        train_model(model, X, y)
        with pytest.raises(MissingHeadError):
            predict(model, X)
        fit_svm_head(model, X, y)
        pred = predict(model, X)
        assert (pred == y).mean() >= 0.95
        no_head = predict(model, X, use_head=False)
        assert set(np.unique(np.concatenate([pred, no_head]))) <= {0, 1}


class TestPredict:
    def test_all_zero_model_ties_to_class_zero(self):
        model = build_model(tiny_config(class_count=5))
        for p in model.network.parameters():
            p.value = np.zeros_like(p.value)
        X, _ = blob_grids(4, 5, side=8, seed=57)
        assert np.all(predict(model, X, use_head=False) == 0)

    def test_codes_in_range(self):
        model = build_model(tiny_config(class_count=5))
        X, _ = blob_grids(10, 5, side=8, seed=58)
        pred = predict(model, X, use_head=False)
        assert pred.min() >= 0 and pred.max() < 5


class TestPersistence:
    def test_round_trip_bit_identical_predictions(self, tmp_path):
        X, y = blob_grids(40, 3, side=8, seed=59)
        cfg = tiny_config(class_count=3, svm_head=True,
                          pooling_modes=("stochastic", "max", "stochastic"),
                          sgd=SgdConfig(learning_rate=0.05, momentum=0.9,
                                        batch_size=16, epochs=4, seed=60))
        model = build_model(cfg)
        train_model(model, X, y)
        fit_svm_head(model, X, y)
        path = tmp_path / "model.enc"
        save_model(model, path)
        again = load_model(path)
        for pa, pb in zip(model.network.parameters(), again.network.parameters()):
            assert np.array_equal(pa.value, pb.value)
        assert np.array_equal(predict(model, X), predict(again, X))
        probs_a = encnn.predict_proba(model, X)
        probs_b = encnn.predict_proba(again, X)
        assert np.array_equal(probs_a, probs_b)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bogus.enc"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(model_io.MagicMismatchError):
            load_model(path)

    def test_truncated_block(self, tmp_path):
        X, y = blob_grids(10, 2, side=8, seed=61)
        cfg = tiny_config(class_count=2,
                          sgd=SgdConfig(epochs=1, batch_size=8, seed=62))
        model = build_model(cfg)
        train_model(model, X, y)
        path = tmp_path / "model.enc"
        save_model(model, path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) - 200])
        with pytest.raises(model_io.TruncationError, match="block"):
            load_model(path)

    def test_version_rejected(self, tmp_path):
        path = tmp_path / "vers.enc"
        path.write_bytes(b"ENC1" + (99).to_bytes(4, "little") + b"\x00" * 32)
        with pytest.raises(model_io.VersionError):
            load_model(path)


class TestGradCheckMiniature:
    def test_miniature_network_gradients(self):
        cfg = tiny_config()
        model = build_model(cfg)
        rng = stream(63, "gc")
        x = rng.normal(size=(2, 1, 8, 8))
        err = grad_check(model.network, x, np.array([1, 4]), epsilon=1e-5)
        assert err < 1e-5
