import numpy as np
import pytest

from sae.data import Dataset
from sae.mds import uniform_distance_spec
from sae.model import MlpSpec, encode, init_model
from sae.svm import svm_fit
from sae.synth import gaussian_blobs
from sae.training import (
    EpochMetrics,
    TrainConfig,
    TrainingDiverged,
    batch_order,
    train,
)


def toy_dataset(n=60, dim=6, seed=0, labeled_fraction=1.0, n_classes=2):
    ds = gaussian_blobs(n, n_classes=n_classes, dim=dim, seed=seed)
    if labeled_fraction < 1.0:
        from sae.data import split_labeled

        ds = split_labeled(ds, int(n * labeled_fraction), seed=seed)
    return ds


def reference_plain_ae(spec, ds, cfg):
    """Independent mini-batch SGD autoencoder loop, written from the documented
    contract: Glorot init, ReLU hidden, identity latent, sigmoid/identity
    output, loss mean_j ||x_j - xhat_j||^2, delta = 2/B * (xhat - x),
    update p -= lr * grad, batch order default_rng([seed, epoch]).permutation.
    """
    rng = np.random.default_rng(cfg.seed)
    dims = spec.layer_dims
    dt = np.float32

    def glorot(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dt)

    enc = [[glorot(dims[i + 1], dims[i]), np.zeros(dims[i + 1], dt)]
           for i in range(len(dims) - 1)]
    rev = dims[::-1]
    dec = [[glorot(rev[i + 1], rev[i]), np.zeros(rev[i + 1], dt)]
           for i in range(len(rev) - 1)]

    def sigmoid(a):
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        ea = np.exp(a[~pos])
        out[~pos] = ea / (1.0 + ea)
        return out

    X_all = ds.features.T
    lr = dt(cfg.learning_rate)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(ds.n)
        for start in range(0, ds.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            X = np.ascontiguousarray(X_all[:, idx], dtype=dt)
            B = X.shape[1]

            acts = [X]
            for li, (w, b) in enumerate(enc):
                a = w @ acts[-1] + b[:, None]
                acts.append(a if li == len(enc) - 1 else np.maximum(a, 0))
            for li, (w, b) in enumerate(dec):
                a = w @ acts[-1] + b[:, None]
                if li == len(dec) - 1:
                    acts.append(sigmoid(a) if spec.output_activation == "sigmoid" else a)
                else:
                    acts.append(np.maximum(a, 0))
            Xhat = acts[-1]

            ones = np.ones(B, dtype=dt)
            delta = (Xhat - X) * (dt(2.0 / B) * ones)
            if spec.output_activation == "sigmoid":
                delta = delta * (Xhat * (1 - Xhat))
            layers = enc + dec
            grads = [None] * len(layers)
            for li in range(len(layers) - 1, -1, -1):
                h_prev = acts[li]
                grads[li] = (delta @ h_prev.T, delta.sum(axis=1))
                if li > 0:
                    w = layers[li][0]
                    if li == len(enc):  # decoder input = latent, identity activation
                        delta = w.T @ delta
                    else:
                        delta = (w.T @ delta) * (h_prev > 0)
            for (w, b), (gw, gb) in zip(layers, grads):
                w -= lr * gw
                b -= lr * gb
    return enc, dec


class TestPlainAeEquivalence:
    def test_gamma_zero_bitwise_identical(self):
        ds = toy_dataset(n=50, dim=5, seed=3)
        spec = MlpSpec((5, 4, 2), output_activation="identity")
        cfg = TrainConfig(gamma=0.0, learning_rate=0.05, batch_size=8,
                          epochs=10, seed=11)
        model, _ = train(init_model(spec, cfg.seed), ds, None, cfg)
        ref_enc, ref_dec = reference_plain_ae(spec, ds, cfg)
        for (w, b), (rw, rb) in zip(model.encoder, ref_enc):
            assert np.array_equal(w, rw)
            assert np.array_equal(b, rb)
        for (w, b), (rw, rb) in zip(model.decoder, ref_dec):
            assert np.array_equal(w, rw)
            assert np.array_equal(b, rb)

    def test_gamma_zero_sigmoid_bitwise_identical(self):
        rng = np.random.default_rng(0)
        features = rng.random((40, 4)).astype(np.float64)
        ds = Dataset(features=features, raw_labels=None, superclass=None,
                     n_classes=0, labeled_ids=np.empty(0, np.int64),
                     unlabeled_ids=np.arange(40, dtype=np.int64), kind="image")
        spec = MlpSpec((4, 3, 2), output_activation="sigmoid")
        cfg = TrainConfig(gamma=0.0, batch_size=16, epochs=10, seed=2)
        model, _ = train(init_model(spec, cfg.seed), ds, None, cfg)
        ref_enc, ref_dec = reference_plain_ae(spec, ds, cfg)
        for (w, b), (rw, rb) in zip(model.encoder + model.decoder, ref_enc + ref_dec):
            assert np.array_equal(w, rw)
            assert np.array_equal(b, rb)


class TestDeterminism:
    def test_identical_reruns(self):
        ds = toy_dataset(n=80, dim=6, seed=1)
        spec = uniform_distance_spec(2, 1.0)
        cfg = TrainConfig(gamma=0.5, learning_rate=0.01, epochs=4, batch_size=16, seed=7)
        mspec = MlpSpec((6, 4, 2), output_activation="identity")
        m1, h1 = train(init_model(mspec, cfg.seed), ds, spec, cfg)
        m2, h2 = train(init_model(mspec, cfg.seed), ds, spec, cfg)
        assert h1 == h2
        for p1, p2 in zip(m1.parameters(), m2.parameters()):
            assert np.array_equal(p1, p2)

    def test_batch_order_contract(self):
        order = batch_order(3, 5, 100)
        again = np.random.default_rng([3, 5]).permutation(100)
        assert np.array_equal(order, again)


class TestMetrics:
    def test_loss_decomposition(self):
        ds = toy_dataset(n=60, dim=5, seed=2)
        spec = uniform_distance_spec(2, 1.0)
        cfg = TrainConfig(gamma=0.3, learning_rate=0.01, epochs=3, batch_size=16, seed=0)
        mspec = MlpSpec((5, 3, 2), output_activation="identity")
        _, history = train(init_model(mspec, cfg.seed), ds, spec, cfg)
        for m in history:
            # combined = gamma*structural + (1-gamma)*labeled recon MSE; with a
            # fully labeled set the labeled recon MSE is recoverable:
            recon_mse_labeled = (m.combined_loss - cfg.gamma * m.structural_loss) / (1 - cfg.gamma)
            assert recon_mse_labeled >= -1e-12
            recomposed = cfg.gamma * m.structural_loss + (1 - cfg.gamma) * recon_mse_labeled
            assert abs(recomposed - m.combined_loss) < 1e-9

    def test_metrics_rows_per_epoch(self):
        ds = toy_dataset(n=40, dim=4, seed=5)
        cfg = TrainConfig(gamma=0.0, learning_rate=0.01, epochs=5, batch_size=8, seed=1)
        _, history = train(init_model(MlpSpec((4, 2), output_activation="identity"),
                                      cfg.seed), ds, None, cfg)
        assert [m.epoch for m in history] == list(range(5))
        assert all(isinstance(m, EpochMetrics) for m in history)

    def test_combined_equals_recon_at_gamma_zero(self):
        ds = toy_dataset(n=40, dim=4, seed=6)
        cfg = TrainConfig(gamma=0.0, learning_rate=0.01, epochs=2, batch_size=8, seed=1)
        _, history = train(init_model(MlpSpec((4, 2), output_activation="identity"),
                                      cfg.seed), ds, None, cfg)
        for m in history:
            assert m.structural_loss == 0.0
            assert m.combined_loss > 0


class TestUnlabeledNeutrality:
    def test_empty_labeled_set_matches_gamma_zero(self):
        ds = toy_dataset(n=50, dim=5, seed=4)
        # hide all labels
        from dataclasses import replace

        unlabeled = replace(ds, labeled_ids=np.empty(0, np.int64),
                            unlabeled_ids=np.arange(ds.n, dtype=np.int64))
        mspec = MlpSpec((5, 3, 2), output_activation="identity")
        spec = uniform_distance_spec(2, 1.0)
        m_zero, h_zero = train(init_model(mspec, 9), unlabeled, spec,
                               TrainConfig(gamma=0.0, learning_rate=0.01, epochs=6, batch_size=10, seed=9))
        m_high, h_high = train(init_model(mspec, 9), unlabeled, spec,
                               TrainConfig(gamma=0.9, learning_rate=0.01, epochs=6, batch_size=10, seed=9))
        assert h_zero == h_high
        for p1, p2 in zip(m_zero.parameters(), m_high.parameters()):
            assert np.array_equal(p1, p2)


class TestTargetRefresh:
    def test_targets_constant_within_epoch_and_refreshed_between(self, monkeypatch):
        import sae.training as train_mod

        calls = []
        original = train_mod._epoch_targets

        def spy(model, ds, spec, cfg):
            out = original(model, ds, spec, cfg)
            calls.append(out.copy())
            return out

        monkeypatch.setattr(train_mod, "_epoch_targets", spy)
        ds = toy_dataset(n=40, dim=4, seed=8)
        cfg = TrainConfig(gamma=0.5, learning_rate=0.01, epochs=3, batch_size=8, seed=2)
        train(init_model(MlpSpec((4, 3, 2), output_activation="identity"), cfg.seed),
              ds, uniform_distance_spec(2, 1.0), cfg)
        assert len(calls) == 3  # one target solve per epoch
        assert not np.array_equal(calls[0], calls[1])  # refreshed between epochs


class TestDivergence:
    def test_divergence_aborts_with_diagnostic(self):
        ds = toy_dataset(n=30, dim=4, seed=3)
        cfg = TrainConfig(gamma=0.0, learning_rate=1e6, epochs=20, batch_size=8, seed=0)
        with np.errstate(all="ignore"):
            with pytest.raises(TrainingDiverged):
                train(init_model(MlpSpec((4, 3, 2), output_activation="identity"),
                                 cfg.seed, dtype=np.float64), ds, None, cfg)


class TestCallbacks:
    def test_callback_can_swap_dataset(self):
        ds = toy_dataset(n=40, dim=4, seed=10, labeled_fraction=0.5)
        swapped = toy_dataset(n=40, dim=4, seed=10)  # fully labeled
        seen = []

        def cb(epoch, model, metrics):
            seen.append(len(ds.labeled_ids) if epoch == 0 else None)
            return swapped if epoch == 0 else None

        cfg = TrainConfig(gamma=0.5, learning_rate=0.01, epochs=3, batch_size=8, seed=0)
        model, _ = train(init_model(MlpSpec((4, 3, 2), output_activation="identity"),
                                    cfg.seed), ds, uniform_distance_spec(2, 1.0), cfg,
                         callbacks=[cb])
        assert len(seen) == 3

    def test_requires_spec_for_structured_training(self):
        ds = toy_dataset(n=30, dim=4, seed=1)
        with pytest.raises(ValueError, match="distance spec"):
            train(init_model(MlpSpec((4, 2), output_activation="identity"), 0),
                  ds, None, TrainConfig(gamma=0.5, epochs=1))


class TestStructuredSeparation:
    def test_two_class_toy_becomes_linearly_separable(self):
        # Latent clusters land on the prescribed geometry and a linear
        # classifier fits the labeled latents perfectly.
        ds = gaussian_blobs(200, n_classes=2, dim=8, separation=3.0, spread=0.6, seed=21)
        spec = uniform_distance_spec(2, 1.0)
        cfg = TrainConfig(gamma=0.5, learning_rate=0.02, epochs=60,
                          batch_size=16, seed=21)
        mspec = MlpSpec((8, 6, 2), output_activation="identity")
        model, _ = train(init_model(mspec, cfg.seed, dtype=np.float64), ds, spec, cfg)
        Z = encode(model, ds.features.T)
        svm = svm_fit(Z, ds.superclass, epochs=80, seed=0)
        from sae.commands import classification_error

        assert classification_error(svm, Z, ds.superclass) == 0.0
