import numpy as np
import pytest

from mfcim.network import (BatchNormLite, ConvMF, DenseLayer, Flatten, MaxPool,
                           MFDense, Model, TrainConfig, TrainingDiverged,
                           accuracy, build_model, cross_entropy, evaluate,
                           fold_batchnorm_lite, mlp_config, quantized_forward,
                           train)
from mfcim.operator import SurrogateParams


def single_mf(w, alpha, b):
    model = build_model([{"kind": "mf_dense", "in_dim": len(w[0]),
                          "out_dim": len(w)}], seed=0)
    layer = model.layers[0]
    layer.params["w"] = np.asarray(w, dtype=np.float64)
    layer.set_alpha(np.full(len(w), alpha))
    layer.params["b"] = np.full(len(w), float(b))
    return model


class TestForward:
    def test_worked_example(self):
        model = single_mf([[2.0, -3.0]], alpha=1.0, b=0.0)
        out = model.forward(np.array([[-1.0, 4.0]]))
        assert out[0, 0] == pytest.approx(-2.0)

    def test_alpha_zero_gives_biases(self):
        model = single_mf([[2.0, -3.0], [1.0, 1.0]], alpha=0.0, b=0.7)
        out = model.forward(np.array([[-1.0, 4.0], [0.3, 0.4]]))
        assert np.allclose(out, 0.7)

    def test_operator_nonlinearity_witness(self):
        model = single_mf([[0.5, -0.25, 1.5]], alpha=1.0, b=0.0)
        x = np.array([[0.2, -0.7, 0.4]])
        y1 = model.forward(x)
        y2 = model.forward(2 * x)
        assert not np.allclose(y2, 2 * y1)

    def test_shape_mismatch(self):
        model = single_mf([[1.0, 1.0]], 1.0, 0.0)
        with pytest.raises(ValueError):
            model.forward(np.ones((1, 3)))


class TestTraining:
    def test_toy_separable_converges(self):
        rng = np.random.default_rng(5)
        x = np.repeat(np.array([[1.0, 1.0], [-1.0, -1.0]]), 25, axis=0)
        x += rng.normal(0, 0.05, x.shape)
        y = np.repeat(np.array([0, 1]), 25)
        model = build_model([{"kind": "mf_dense", "in_dim": 2, "out_dim": 2}],
                            seed=2)
        hist = train(model, x, y, TrainConfig(epochs=50, batch_size=10, lr=0.05,
                                              momentum=0.9, seed=0))
        assert hist[-1]["train_acc"] == 1.0
        assert len(hist) == 50

    def test_zero_learning_rate_freezes_weights(self):
        x = np.array([[1.0, -1.0]] * 8)
        y = np.array([0] * 8)
        model = build_model(mlp_config(2, 4, 2), seed=1)
        before = {k: v.copy() for k, _, _, v in model.parameters()}
        train(model, x, y, TrainConfig(epochs=3, batch_size=4, lr=0.0, seed=0))
        for key, _, _, value in model.parameters():
            assert np.array_equal(before[key], value)

    def test_determinism(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, (64, 10))
        y = rng.integers(0, 3, 64)
        weights = []
        for _ in range(2):
            model = build_model(mlp_config(10, 8, 3), seed=7)
            train(model, x, y, TrainConfig(epochs=3, batch_size=8, lr=0.01,
                                           seed=11))
            weights.append({k: v.copy() for k, _, _, v in model.parameters()})
        for key in weights[0]:
            assert np.array_equal(weights[0][key], weights[1][key])

    def test_divergence_aborts_with_diagnostic(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, (32, 6))
        y = rng.integers(0, 2, 32)
        model = build_model(mlp_config(6, 4, 2), seed=0)
        with pytest.raises(TrainingDiverged, match="learning rate"):
            train(model, x, y, TrainConfig(epochs=10, batch_size=8, lr=1e9,
                                           seed=0))

    def test_lr_schedule_overrides_constant(self):
        x = np.array([[1.0, -1.0], [-1.0, 1.0]] * 8)
        y = np.array([0, 1] * 8)
        model = build_model(mlp_config(2, 4, 2), seed=3)
        hist = train(model, x, y,
                     TrainConfig(epochs=2, batch_size=4, lr=0.5, seed=0,
                                 lr_schedule=(0.0, 0.0)))
        assert hist[-1]["loss"] == pytest.approx(hist[0]["loss"])


class TestGradientFlow:
    def _fd_check(self, model, x, y, coords=100, rel=1e-3, seed=0):
        logits = model.forward(x, smooth=True)
        loss, grad = cross_entropy(logits, y)
        model.backward(grad)
        rng = np.random.default_rng(seed)
        checked = 0
        params = list(model.parameters())
        while checked < coords:
            key, layer, name, value = params[rng.integers(len(params))]
            flat = value.reshape(-1)
            i = int(rng.integers(flat.size))
            h = 1e-6
            old = flat[i]
            flat[i] = old + h
            up = cross_entropy(model.forward(x, smooth=True), y)[0]
            flat[i] = old - h
            down = cross_entropy(model.forward(x, smooth=True), y)[0]
            flat[i] = old
            fd = (up - down) / (2 * h)
            if abs(fd) < 1e-7:
                continue
            analytic = layer.grads[name].reshape(-1)[i]
            assert analytic == pytest.approx(fd, rel=rel, abs=1e-9), \
                f"{key}[{i}]: analytic {analytic} vs fd {fd}"
            checked += 1

    def test_mlp_backprop_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.normal(0, 1.0, (6, 12))
        y = rng.integers(0, 4, 6)
        model = build_model(mlp_config(12, 10, 4), seed=9)
        self._fd_check(model, x, y, coords=100)

    def test_conv_stack_backprop_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        x = rng.normal(0, 1.0, (3, 1, 8, 8))
        y = rng.integers(0, 2, 3)
        model = build_model([
            {"kind": "conv_mf", "in_ch": 1, "out_ch": 3, "kernel": 3},
            {"kind": "maxpool", "size": 2},
            {"kind": "flatten"},
            {"kind": "batchnorm_lite", "channels": 27},
            {"kind": "dense", "in_dim": 27, "out_dim": 2, "relu": False},
        ], seed=12)
        self._fd_check(model, x, y, coords=60)

    def test_conventional_conv_trains_toy(self):
        rng = np.random.default_rng(1)
        blank = rng.normal(0, 0.1, (40, 1, 8, 8))
        blob = blank.copy()
        blob[:, :, 2:6, 2:6] += 1.0
        x = np.concatenate([blank, blob])
        y = np.repeat([0, 1], 40)
        model = build_model([
            {"kind": "conv", "in_ch": 1, "out_ch": 4, "kernel": 3},
            {"kind": "maxpool", "size": 2},
            {"kind": "flatten"},
            {"kind": "dense", "in_dim": 36, "out_dim": 2, "relu": False},
        ], seed=3)
        hist = train(model, x, y, TrainConfig(epochs=20, batch_size=8, lr=0.02,
                                              seed=0))
        assert hist[-1]["train_acc"] >= 0.95


class TestQuantizedPaths:
    def _model(self, seed=5):
        model = build_model(mlp_config(40, 16, 4), seed=seed)
        return model

    def test_exact_vs_lossless_adc_bit_identical(self):
        rng = np.random.default_rng(2)
        x = rng.normal(0, 0.5, (12, 40))
        model = self._model()
        exact = quantized_forward(model, x, 7, adc=None)
        macro = quantized_forward(model, x, 7, adc=(31, 5))
        assert np.array_equal(exact, macro)

    def test_lossy_adc_differs(self):
        rng = np.random.default_rng(2)
        x = rng.normal(0, 0.5, (12, 40))
        model = self._model()
        exact = quantized_forward(model, x, 7, adc=None)
        lossy = quantized_forward(model, x, 7, adc=(31, 2))
        assert not np.array_equal(exact, lossy)

    def test_quantized_close_to_float(self):
        rng = np.random.default_rng(6)
        x = rng.normal(0, 0.5, (16, 40))
        model = self._model()
        f = model.forward(x)
        q = quantized_forward(model, x, 7)
        assert np.max(np.abs(f - q)) < 0.15 * np.max(np.abs(f))

    def test_weight_plane_skip_coarsens(self):
        rng = np.random.default_rng(6)
        x = rng.normal(0, 0.5, (4, 40))
        model = self._model()
        full = quantized_forward(model, x, 7)
        skipped = quantized_forward(model, x, 7, weight_lsb_skip=5)
        assert not np.array_equal(full, skipped)

    def test_conv_model_unsupported(self):
        model = build_model([{"kind": "conv_mf", "in_ch": 1, "out_ch": 2,
                              "kernel": 3}], seed=0)
        with pytest.raises(NotImplementedError):
            quantized_forward(model, np.zeros((1, 1, 8, 8)), 7)


class TestEvaluate:
    def test_empty_dataset_rejected(self):
        model = build_model(mlp_config(4, 3, 2), seed=0)
        with pytest.raises(ValueError):
            evaluate(model, (np.zeros((0, 4)), np.zeros(0, dtype=int)))

    def test_accuracy_range(self):
        rng = np.random.default_rng(0)
        model = build_model(mlp_config(4, 3, 2), seed=0)
        acc = evaluate(model, (rng.normal(0, 1, (20, 4)),
                               rng.integers(0, 2, 20)), center=False)
        assert 0.0 <= acc <= 1.0


def test_batchnorm_fold_preserves_outputs():
    model = build_model([
        {"kind": "mf_dense", "in_dim": 6, "out_dim": 4},
        {"kind": "batchnorm_lite", "channels": 4},
        {"kind": "dense", "in_dim": 4, "out_dim": 2, "relu": False},
    ], seed=4)
    bn = model.layers[1]
    bn.params["gamma"] = np.array([0.5, 2.0, 1.5, -1.0])
    bn.params["beta"] = np.array([0.1, -0.2, 0.0, 0.3])
    rng = np.random.default_rng(0)
    x = rng.normal(0, 1, (5, 6))
    before = model.forward(x)
    folded = fold_batchnorm_lite(model)
    assert len(folded.layers) == 2
    assert np.allclose(folded.forward(x), before)
