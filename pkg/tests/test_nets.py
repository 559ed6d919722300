"""Network backend: structure, gradients, training, persistence."""

import numpy as np
import pytest

from activenas import (
    ArchPoint,
    BlockSpec,
    NetworkSpec,
    SearchGrid,
    TrainConfig,
    capacity_report,
    instantiate,
    layer_manifest,
    load_model,
    parameter_count,
    save_model,
    train,
)
from activenas.errors import ConfigError, DataError, TrainingDivergedError

BLOCK4 = BlockSpec(beta=2, alpha=2, base_width=4)


def tiny_spec(arch=(1, 1), input_dim=2, n_classes=2, dropout=0.0):
    return NetworkSpec(
        ArchPoint(*arch), BLOCK4, (input_dim,), n_classes, dropout_rate=dropout
    )


def finite_difference_grad(model, x, y, coords, eps=1e-6):
    base = model.params.copy()
    grads = []
    for c in coords:
        model.params[:] = base
        model.params[c] += eps
        lp = model.loss_and_grad(x, y)
        model.params[:] = base
        model.params[c] -= eps
        lm = model.loss_and_grad(x, y)
        grads.append((lp - lm) / (2 * eps))
    model.params[:] = base
    return np.array(grads)


class TestStructure:
    def test_param_count_matches_hand_count(self):
        m = instantiate(tiny_spec(), seed=7)
        # affine 2->4 (12) + block 4->4 twice (20+20) + classifier 4->2 (10)
        assert m.n_params == 62

    def test_param_count_agrees_with_capacity_up_to_4x3(self):
        grid = SearchGrid(BLOCK4, 4, 3)
        for arch in grid.points():
            spec = NetworkSpec(arch, BLOCK4, (2,), 2)
            cap = capacity_report(grid, arch, (2,), 2)
            assert parameter_count(spec) == cap.params_w
            assert instantiate(spec, seed=0).n_params == cap.params_w

    def test_stack_widths_double(self):
        spec = NetworkSpec(ArchPoint(1, 3), BLOCK4, (2,), 2)
        assert spec.stack_widths == [4, 8, 16]

    def test_same_seed_same_params(self):
        a = instantiate(tiny_spec(), seed=7)
        b = instantiate(tiny_spec(), seed=7)
        assert np.array_equal(a.params, b.params)

    def test_different_seed_different_params(self):
        a = instantiate(tiny_spec(), seed=7)
        b = instantiate(tiny_spec(), seed=8)
        assert not np.array_equal(a.params, b.params)

    def test_unknown_block_kind_rejected(self):
        with pytest.raises(ConfigError):
            NetworkSpec(
                ArchPoint(1, 1),
                BlockSpec(beta=2, alpha=2, kind="residual-conv"),
                (2,), 2,
            )

    def test_bad_beta_for_dense_family(self):
        with pytest.raises(ConfigError):
            NetworkSpec(ArchPoint(1, 1), BlockSpec(beta=3, alpha=2), (2,), 2)

    def test_manifest_counted_layers(self):
        manifest = layer_manifest(tiny_spec(arch=(1, 2)))
        counted = [e.name for e in manifest if e.counted]
        uncounted = [e.name for e in manifest if not e.counted]
        assert counted == ["init", "s0.b0.A1", "s0.b0.A2", "s1.b0.A1", "s1.b0.A2", "clf"]
        assert uncounted == ["t1"]


class TestForward:
    def test_residual_identity_with_zero_block_weights(self):
        m = instantiate(tiny_spec(arch=(3, 1), input_dim=4, n_classes=3), seed=1)
        for name in m.param_names():
            if ".A1." in name or ".A2." in name:
                m.param(name)[:] = 0.0
        x = np.random.default_rng(0).normal(size=(5, 4))
        # with every block an identity, the net is initial affine+relu -> clf
        h = np.maximum(x @ m.param("init.W") + m.param("init.b"), 0.0)
        logits = h @ m.param("clf.W") + m.param("clf.b")
        expect = np.exp(logits - logits.max(axis=1, keepdims=True))
        expect /= expect.sum(axis=1, keepdims=True)
        assert np.allclose(m.predict_proba(x), expect, atol=1e-12)

    def test_rows_sum_to_one(self):
        m = instantiate(tiny_spec(arch=(2, 2), input_dim=3, n_classes=4), seed=3)
        x = np.random.default_rng(1).normal(size=(17, 3))
        p = m.predict_proba(x)
        assert p.shape == (17, 4)
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(np.isfinite(p))

    def test_hand_set_dominant_logit(self):
        m = instantiate(tiny_spec(input_dim=2, n_classes=2), seed=0)
        m.params[:] = 0.0
        m.param("init.W")[:] = np.eye(2, 4)
        m.param("clf.W")[:] = 0.0
        m.param("clf.b")[:] = [5.0, -5.0]
        p = m.predict_proba(np.ones((3, 2)))
        assert np.all(p.argmax(axis=1) == 0)

    def test_shape_mismatch(self):
        m = instantiate(tiny_spec(input_dim=3), seed=0)
        with pytest.raises(DataError):
            m.predict_proba(np.zeros((4, 5)))

    def test_embedding_dimension_and_composition(self):
        m = instantiate(tiny_spec(arch=(1, 2), input_dim=2, n_classes=3), seed=2)
        x = np.random.default_rng(2).normal(size=(6, 2))
        emb = m.embed(x)
        assert emb.shape == (6, 8)
        logits = emb @ m.param("clf.W") + m.param("clf.b")
        expect = np.exp(logits - logits.max(axis=1, keepdims=True))
        expect /= expect.sum(axis=1, keepdims=True)
        assert np.allclose(m.predict_proba(x), expect, atol=1e-12)

    def test_identical_inputs_identical_embeddings(self):
        m = instantiate(tiny_spec(arch=(2, 1)), seed=5)
        x = np.tile([[0.3, -1.2]], (4, 1))
        emb = m.embed(x)
        assert np.allclose(emb, emb[0])


class TestGradients:
    @pytest.mark.parametrize("arch", [(1, 1), (2, 2)])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_finite_differences(self, arch, seed):
        spec = tiny_spec(arch=arch, input_dim=3, n_classes=3)
        m = instantiate(spec, seed=seed)
        assert m.n_params <= 1200
        rng = np.random.default_rng(seed + 10)
        # nudge every parameter off zero so zero-initialized views get
        # checked at a generic point, not a stationary one
        m.params += rng.normal(0.0, 0.05, size=m.n_params)
        x = rng.normal(size=(8, 3))
        y = rng.integers(0, 3, size=8)
        m.loss_and_grad(x, y)
        analytic = m.grads.copy()
        coords = rng.choice(m.n_params, size=12, replace=False)
        numeric = finite_difference_grad(m, x, y, coords)
        scale = np.maximum(np.abs(numeric), np.abs(analytic[coords]))
        rel = np.abs(analytic[coords] - numeric) / np.maximum(scale, 1e-8)
        assert rel.max() <= 1e-4


class TestMCDropout:
    def test_rate_zero_passes_identical(self):
        m = instantiate(tiny_spec(arch=(2, 1), dropout=0.0), seed=4)
        x = np.random.default_rng(3).normal(size=(9, 2))
        stack = m.predict_proba_mc(x, 5, seed=123)
        base = m.predict_proba(x)
        for t in range(5):
            assert np.allclose(stack[t], base, atol=1e-12)

    def test_single_pass_reproducible(self):
        m = instantiate(tiny_spec(arch=(2, 1), dropout=0.3), seed=4)
        x = np.random.default_rng(4).normal(size=(6, 2))
        a = m.predict_proba_mc(x, 1, seed=99)
        b = m.predict_proba_mc(x, 1, seed=99)
        assert np.array_equal(a, b)

    def test_stack_shape_and_row_sums(self):
        m = instantiate(tiny_spec(arch=(1, 2), dropout=0.1, n_classes=3), seed=4)
        x = np.random.default_rng(5).normal(size=(7, 2))
        stack = m.predict_proba_mc(x, 16, seed=0)
        assert stack.shape == (16, 7, 3)
        assert np.allclose(stack.sum(axis=2), 1.0, atol=1e-6)
        assert np.all(stack.mean(axis=0).sum(axis=1) == pytest.approx(1.0, abs=1e-6))

    def test_zero_passes_rejected(self):
        m = instantiate(tiny_spec(), seed=0)
        with pytest.raises(ConfigError):
            m.predict_proba_mc(np.zeros((2, 2)), 0)


class TestEvaluate:
    def setup_method(self):
        self.m = instantiate(tiny_spec(input_dim=2, n_classes=2), seed=0)
        self.m.params[:] = 0.0
        self.m.param("init.W")[:] = np.eye(2, 4)
        self.m.param("clf.W")[:] = np.array(
            [[1.0, -1.0], [-1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
        )
        self.x = np.array([[3.0, 0.0], [3.0, 0.0], [0.0, 3.0], [0.0, 3.0]])

    def test_all_correct(self):
        assert self.m.evaluate(self.x, np.array([0, 0, 1, 1])) == 0.0

    def test_all_wrong(self):
        assert self.m.evaluate(self.x, np.array([1, 1, 0, 0])) == 1.0

    def test_three_of_four(self):
        assert self.m.evaluate(self.x, np.array([0, 0, 1, 0])) == 0.25

    def test_cross_entropy_option(self):
        ce = self.m.evaluate(self.x, np.array([0, 0, 1, 1]), loss="cross-entropy")
        assert 0.0 < ce < 0.1

    def test_empty_data_rejected(self):
        with pytest.raises(DataError):
            self.m.evaluate(np.zeros((0, 2)), np.zeros(0, dtype=int))

    def test_unknown_loss_rejected(self):
        with pytest.raises(ConfigError):
            self.m.evaluate(self.x, np.array([0, 0, 1, 1]), loss="hinge")


class TestTraining:
    def make_blobs(self, n=200, seed=0):
        rng = np.random.default_rng(seed)
        half = n // 2
        x = np.concatenate(
            [rng.normal(-2.0, 0.5, size=(half, 2)), rng.normal(2.0, 0.5, size=(half, 2))]
        )
        y = np.concatenate([np.zeros(half, dtype=int), np.ones(half, dtype=int)])
        return x, y

    def test_separable_blobs_reach_low_error(self):
        x, y = self.make_blobs()
        m = instantiate(tiny_spec(dropout=0.05), seed=1)
        cfg = TrainConfig(epochs=30, batch_size=16, lr_initial=0.01,
                          nominal_epoch_size=400)
        train(m, x, y, cfg)
        assert m.evaluate(x, y) <= 0.05
        assert len(m.train_history) == 30

    def test_zero_epochs_leaves_params(self):
        m = instantiate(tiny_spec(), seed=1)
        before = m.params.copy()
        train(m, np.zeros((4, 2)), np.zeros(4, dtype=int), TrainConfig(epochs=0))
        assert np.array_equal(m.params, before)

    def test_training_deterministic(self):
        x, y = self.make_blobs(n=60)
        cfg = TrainConfig(epochs=5, batch_size=8, lr_initial=0.01,
                          nominal_epoch_size=100, seed=42)
        a = instantiate(tiny_spec(arch=(2, 1), dropout=0.1), seed=9)
        b = instantiate(tiny_spec(arch=(2, 1), dropout=0.1), seed=9)
        train(a, x, y, cfg)
        train(b, x, y, cfg)
        assert np.array_equal(a.params, b.params)
        assert a.train_history == b.train_history

    def test_oversampled_epoch_step_count(self):
        x, y = self.make_blobs(n=10)
        m = instantiate(tiny_spec(), seed=0)
        cfg = TrainConfig(epochs=3, batch_size=16, nominal_epoch_size=100,
                          lr_initial=0.01)
        train(m, x, y, cfg)
        # ceil(100/16) = 7 steps per epoch regardless of |data| = 10
        assert m.train_steps == 3 * 7

    def test_empty_data_rejected(self):
        m = instantiate(tiny_spec(), seed=0)
        with pytest.raises(DataError):
            train(m, np.zeros((0, 2)), np.zeros(0, dtype=int), TrainConfig(epochs=1))

    def test_retrain_requires_flag_and_reinitializes(self):
        x, y = self.make_blobs(n=40)
        cfg = TrainConfig(epochs=2, batch_size=8, lr_initial=0.01,
                          nominal_epoch_size=50)
        m = instantiate(tiny_spec(), seed=3)
        fresh = m.params.copy()
        train(m, x, y, cfg)
        with pytest.raises(ConfigError):
            train(m, x, y, cfg)
        m2 = instantiate(tiny_spec(), seed=3)
        train(m2, x, y, cfg)
        train(m2, x, y, cfg, retrain=True)
        # fresh-init retrain: second call must start from the same seed-0 point
        m3 = instantiate(tiny_spec(), seed=3)
        assert np.array_equal(fresh, m3.params)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        x, y = self.make_blobs(n=40)
        m = instantiate(tiny_spec(arch=(2, 2)), seed=3)
        cfg = TrainConfig(epochs=3, batch_size=8, lr_initial=1e9,
                          nominal_epoch_size=50)
        with pytest.raises(TrainingDivergedError):
            train(m, x, y, cfg)

    def test_lr_decay_applied_at_listed_epochs(self):
        cfg = TrainConfig(epochs=10, lr_initial=0.5, lr_decay_factor=0.1,
                          lr_decay_epochs=(4, 8))
        from activenas.train import lr_at_epoch

        assert lr_at_epoch(cfg, 0) == 0.5
        assert lr_at_epoch(cfg, 3) == 0.5
        assert lr_at_epoch(cfg, 4) == pytest.approx(0.05)
        assert lr_at_epoch(cfg, 8) == pytest.approx(0.005)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=-1)
        with pytest.raises(ConfigError):
            TrainConfig(epochs=5, lr_decay_epochs=(7,))
        with pytest.raises(ConfigError):
            TrainConfig(epochs=5, batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(epochs=5, momentum=1.0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = instantiate(tiny_spec(arch=(2, 2), input_dim=3, n_classes=3,
                                  dropout=0.2), seed=11)
        x = np.random.default_rng(6).normal(size=(5, 3))
        path = tmp_path / "model.bin"
        save_model(m, path)
        loaded = load_model(path)
        assert loaded.spec == m.spec
        # parameters survive as 32-bit floats
        assert np.array_equal(
            loaded.params, m.params.astype(np.float32).astype(np.float64)
        )
        assert np.allclose(loaded.predict_proba(x), m.predict_proba(x), atol=1e-6)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DataError):
            load_model(path)

    def test_truncation_rejected(self, tmp_path):
        m = instantiate(tiny_spec(), seed=0)
        path = tmp_path / "model.bin"
        save_model(m, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(DataError):
            load_model(path)

    def test_unknown_version_rejected(self, tmp_path):
        m = instantiate(tiny_spec(), seed=0)
        path = tmp_path / "model.bin"
        save_model(m, path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError):
            load_model(path)
