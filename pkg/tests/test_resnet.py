import numpy as np
import numpy.testing as npt
import pytest

from gaitrt.errors import DivergedError, InsufficientData, ShapeError
from gaitrt.resnet import (
    AdamState,
    ArchConfig,
    BatchNorm1D,
    Conv1D,
    Dense,
    GlobalAvgPool,
    MomentNet,
    Relu,
    TrainConfig,
    adam_step,
    load_resnet,
    save_resnet,
    train_moments,
    windowize,
)

TINY = ArchConfig(in_channels=3, n_out=2, window_len=8, initial_channels=4,
                  block_channels=(4, 6), dense_width=5)


def finite_difference_check(forward, params_and_grads, h=1e-6, rel_tol=1e-5,
                            abs_tol=1e-7, max_coords=60, rng=None):
    """Central finite differences against analytic gradients.

    forward() must rerun the full forward pass and return the scalar loss;
    analytic grads must already be accumulated.  abs_tol absorbs degenerate
    coordinates whose true derivative is zero (e.g. a conv bias feeding a
    batch norm), where both sides are pure rounding noise.
    """
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for theta, grad in params_and_grads:
        flat_theta = theta.reshape(-1)
        flat_grad = grad.reshape(-1)
        count = min(max_coords, flat_theta.size)
        coords = rng.choice(flat_theta.size, size=count, replace=False)
        for i in coords:
            orig = flat_theta[i]
            flat_theta[i] = orig + h
            lp = forward()
            flat_theta[i] = orig - h
            lm = forward()
            flat_theta[i] = orig
            fd = (lp - lm) / (2.0 * h)
            if abs(fd) < abs_tol and abs(flat_grad[i]) < abs_tol:
                continue
            denom = max(abs(fd), abs(flat_grad[i]))
            worst = max(worst, abs(flat_grad[i] - fd) / denom)
    assert worst < rel_tol, f"max relative gradient error {worst:.3e}"
    return worst


class TestConv1D:
    def test_identity_kernel(self):
        conv = Conv1D(2, 2, kernel=1)
        conv.weight[...] = np.eye(2)[None, :, :]
        conv.bias[...] = 0.0
        x = np.random.default_rng(0).normal(size=(3, 7, 2))
        npt.assert_allclose(conv.forward(x), x, atol=1e-15)

    def test_hand_arithmetic(self):
        conv = Conv1D(1, 1, kernel=2)
        conv.weight[...] = 1.0
        conv.bias[...] = 0.0
        x = np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1)
        npt.assert_array_equal(conv.forward(x).ravel(), [3.0, 5.0])

    def test_output_length_formula(self):
        conv = Conv1D(2, 3, kernel=3, stride=2, padding=1)
        x = np.zeros((1, 11, 2))
        assert conv.forward(x).shape == (1, (11 + 2 - 3) // 2 + 1, 3)

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(1)
        conv = Conv1D(3, 4, kernel=3, padding=1, rng=rng)
        x = rng.standard_normal((2, 9, 3))

        def loss():
            return float(np.sum(conv.forward(x) ** 2))

        y = conv.forward(x)
        conv.zero_grads()
        dx = conv.backward(2.0 * y)
        finite_difference_check(loss, [(conv.weight, conv.dweight),
                                       (conv.bias, conv.dbias)])
        # input gradient via FD on a few coordinates
        flat = x.reshape(-1)
        for i in (0, 5, 17):
            orig = flat[i]
            flat[i] = orig + 1e-6
            lp = loss()
            flat[i] = orig - 1e-6
            lm = loss()
            flat[i] = orig
            fd = (lp - lm) / 2e-6
            assert abs(dx.reshape(-1)[i] - fd) / max(abs(fd), 1e-8) < 1e-5

    def test_shape_error(self):
        conv = Conv1D(3, 4, kernel=3)
        with pytest.raises(ShapeError):
            conv.forward(np.zeros((1, 5, 2)))


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        bn = BatchNorm1D(4)
        x = np.random.default_rng(2).normal(loc=3, scale=7, size=(6, 11, 4))
        y = bn.forward(x, training=True)
        npt.assert_allclose(y.mean(axis=(0, 1)), 0.0, atol=1e-12)
        npt.assert_allclose(y.var(axis=(0, 1)), 1.0, atol=1e-4)  # eps effect

    def test_infer_mode_identity_with_unit_stats(self):
        bn = BatchNorm1D(3)
        x = np.random.default_rng(3).normal(size=(2, 5, 3))
        y = bn.forward(x, training=False)
        npt.assert_allclose(y, x, atol=5e-5)  # 1/sqrt(1 + eps) shrinkage

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(4)
        bn = BatchNorm1D(3)
        bn.gamma[...] = rng.uniform(0.5, 1.5, 3)
        bn.beta[...] = rng.uniform(-0.5, 0.5, 3)
        x = rng.standard_normal((3, 7, 3))
        target = rng.standard_normal((3, 7, 3))

        def loss():
            return float(np.sum((bn.forward(x, training=True) - target) ** 2))

        y = bn.forward(x, training=True)
        bn.zero_grads()
        dx = bn.backward(2.0 * (y - target))
        finite_difference_check(loss, [(bn.gamma, bn.dgamma), (bn.beta, bn.dbeta)])
        flat = x.reshape(-1)
        for i in (0, 10, 31):
            orig = flat[i]
            flat[i] = orig + 1e-6
            lp = loss()
            flat[i] = orig - 1e-6
            lm = loss()
            flat[i] = orig
            fd = (lp - lm) / 2e-6
            assert abs(dx.reshape(-1)[i] - fd) / max(abs(fd), 1e-6) < 1e-5


class TestResnetForward:
    def test_zero_weights_output_is_bias(self):
        net = MomentNet(TINY, seed=0)
        for name, p in net.params().items():
            p[...] = 0.0
        net.out.bias[...] = [1.5, -2.5]
        x = np.random.default_rng(5).normal(size=(4, 8, 3))
        y = net.forward(x, training=False)
        npt.assert_allclose(y, np.tile([1.5, -2.5], (4, 1)), atol=1e-14)

    def test_zeroed_blocks_reduce_to_head(self):
        # identity shortcuts (constant channel count) + zeroed block convs
        arch = ArchConfig(in_channels=3, n_out=2, window_len=8,
                          initial_channels=4, block_channels=(4, 4), dense_width=5)
        net = MomentNet(arch, seed=1)
        for blk in net.blocks:
            assert blk.project is None
            for layer in (blk.conv1, blk.conv2):
                layer.weight[...] = 0.0
                layer.bias[...] = 0.0
            for bn in (blk.bn1, blk.bn2):
                bn.beta[...] = 0.0
        x = np.abs(np.random.default_rng(6).normal(size=(3, 8, 3)))
        full = net.forward(x, training=False)
        head = net.init_conv.forward(x)
        head = net.init_bn.forward(head)
        head = net.init_relu.forward(head)
        head = net.pool.forward(head)
        head = net.dense.forward(head)
        head = net.dense_relu.forward(head)
        head = net.out.forward(head)
        npt.assert_allclose(full, head, atol=1e-12)

    def test_full_model_gradient_check(self):
        rng = np.random.default_rng(7)
        net = MomentNet(TINY, seed=2)
        x = rng.standard_normal((2, 8, 3))
        target = rng.standard_normal((2, 2))

        def loss():
            return float(np.mean((net.forward(x, training=True) - target) ** 2))

        pred = net.forward(x, training=True)
        net.zero_grads()
        diff = pred - target
        net.backward(2.0 * diff / diff.size)
        pairs = [(net.params()[k], net.grads()[k]) for k in sorted(net.params())]
        finite_difference_check(loss, pairs, rel_tol=1e-4, max_coords=8, rng=rng)

    def test_batch_size_invariance(self):
        net = MomentNet(TINY, seed=3)
        x = np.random.default_rng(8).normal(size=(5, 8, 3))
        batched = net.forward(x, training=False)
        singles = np.vstack([net.forward(x[i : i + 1], training=False)
                             for i in range(5)])
        npt.assert_allclose(batched, singles, atol=1e-10)


class TestAdam:
    def test_first_step_closed_form(self):
        theta = {"w": np.array([1.0])}
        grads = {"w": np.array([1.0])}
        state = AdamState(learning_rate=1e-3)
        adam_step(theta, grads, state)
        # bias-corrected first step: theta -= lr * g / (|g| + eps_effective)
        assert theta["w"][0] == pytest.approx(1.0 - 9.99999e-4, abs=1e-9)

    def test_zero_gradient_no_move(self):
        theta = {"w": np.array([2.0, -3.0])}
        grads = {"w": np.zeros(2)}
        state = AdamState()
        adam_step(theta, grads, state)
        npt.assert_array_equal(theta["w"], [2.0, -3.0])

    def test_quadratic_descent(self):
        theta = {"w": np.array([1.0])}
        state = AdamState(learning_rate=5e-2)
        values = []
        for _ in range(100):
            grads = {"w": 2.0 * theta["w"]}
            adam_step(theta, grads, state)
            values.append(abs(theta["w"][0]))
        assert values[-1] < 0.5
        # monotone decrease after warmup, until the optimum neighborhood
        # (momentum oscillates once |theta| is near zero)
        settled = next(i for i, v in enumerate(values) if v < 0.05)
        tail = values[3:settled]
        assert all(b <= a + 1e-12 for a, b in zip(tail[:-1], tail[1:]))

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState())


class TestWindowize:
    def test_counts_stride_10(self):
        w, idx = windowize(np.zeros((20, 4)), length=10, stride=10)
        assert w.shape == (2, 10, 4)
        npt.assert_array_equal(idx, [9, 19])

    def test_counts_stride_1(self):
        w, idx = windowize(np.zeros((20, 2)), length=10, stride=1)
        assert w.shape == (11, 10, 2)

    def test_target_alignment(self):
        data = np.arange(40, dtype=float).reshape(20, 2)
        w, idx = windowize(data, length=10, stride=1)
        for i in range(len(idx)):
            assert idx[i] == i + 9
            npt.assert_array_equal(w[i, -1], data[idx[i]])

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            windowize(np.zeros((5, 2)), length=10)


def _toy_training_set(n_cycles=8, cycle_len=40, channels=3, n_out=2, noise=0.0,
                      seed=0):
    """Targets are linear in the window means, so a GAP-headed network can
    represent the mapping exactly."""
    rng = np.random.default_rng(seed)
    windows, targets, ids = [], [], []
    for c in range(n_cycles):
        t = np.linspace(0, 2 * np.pi, cycle_len)
        base = np.stack([np.sin(t + c * 0.01), np.cos(t), np.sin(2 * t)], axis=1)
        w, idx = windowize(base[:, :channels], length=8, stride=2)
        means = w.mean(axis=1)
        y = np.stack([2.0 * means[:, 0], means[:, 1] - 1.0], axis=1)
        windows.append(w)
        targets.append(y[:, :n_out] + noise * rng.standard_normal((len(idx), n_out)))
        ids.append(np.full(len(idx), c))
    return (np.concatenate(windows), np.concatenate(targets), np.concatenate(ids))


class TestTrainMoments:
    def test_constant_targets_converge_to_bias(self):
        windows, targets, ids = _toy_training_set()
        targets = np.full_like(targets, 3.25)
        config = TrainConfig(max_epochs=50, patience=50, batch_size=16,
                             window_len=8, learning_rate=1e-1)
        model, history = train_moments(windows, targets, ids, config, seed=1,
                                       arch=TINY)
        assert min(history["val_mse"]) < 1e-4
        assert len(history["val_mse"]) <= 50

    def test_early_stop_contract(self):
        windows, targets, ids = _toy_training_set(noise=0.3)
        config = TrainConfig(max_epochs=60, patience=5, batch_size=32,
                             window_len=8, learning_rate=1e-2)
        model, history = train_moments(windows, targets, ids, config, seed=2,
                                       arch=TINY)
        n = len(history["val_mse"])
        best = history["best_epoch"]
        assert n <= 60
        assert n >= best + 1
        assert n <= best + config.patience + 1

    def test_restore_best_equals_history_min(self):
        windows, targets, ids = _toy_training_set(noise=0.2)
        config = TrainConfig(max_epochs=30, patience=4, batch_size=32,
                             window_len=8, learning_rate=1e-2)
        model, history = train_moments(windows, targets, ids, config, seed=3,
                                       arch=TINY)
        assert history["best_val_mse"] == min(history["val_mse"])

    def test_deterministic_under_seed(self):
        windows, targets, ids = _toy_training_set()
        config = TrainConfig(max_epochs=5, patience=5, batch_size=32, window_len=8)
        m1, h1 = train_moments(windows, targets, ids, config, seed=7, arch=TINY)
        m2, h2 = train_moments(windows, targets, ids, config, seed=7, arch=TINY)
        assert h1["val_mse"] == h2["val_mse"]
        q = windows[:5]
        npt.assert_array_equal(m1.predict(q), m2.predict(q))

    def test_diverged_error_on_nonfinite_loss(self):
        windows, targets, ids = _toy_training_set()
        targets = targets.copy()
        targets[5] = np.nan  # poisoned target -> non-finite loss
        config = TrainConfig(max_epochs=30, patience=30, batch_size=256,
                             window_len=8)
        with pytest.raises(DivergedError):
            train_moments(windows, targets, ids, config, seed=4, arch=TINY)

    def test_training_loss_drops_on_noiseless_task(self):
        windows, targets, ids = _toy_training_set(noise=0.0)
        config = TrainConfig(max_epochs=300, patience=300, batch_size=256,
                             window_len=8, learning_rate=1e-2)
        model, history = train_moments(windows, targets, ids, config, seed=5,
                                       arch=TINY)
        assert history["train_loss"][-1] < 1e-3 * history["train_loss"][0]

    def test_serialization_round_trip(self, tmp_path):
        windows, targets, ids = _toy_training_set()
        config = TrainConfig(max_epochs=3, patience=3, batch_size=32, window_len=8)
        model, _ = train_moments(windows, targets, ids, config, seed=6, arch=TINY)
        path = tmp_path / "net.grtm"
        save_resnet(model, path)
        loaded = load_resnet(path)
        q = windows[:7]
        npt.assert_array_equal(loaded.predict(q), model.predict(q))
        save_resnet(loaded, tmp_path / "again.grtm")
        assert (tmp_path / "again.grtm").read_bytes() == path.read_bytes()
