import numpy as np
import pytest

from sae.data import split_labeled
from sae.mds import uniform_distance_spec
from sae.model import MlpSpec, encode, init_model, reconstruct
from sae.morphing import (
    MorphTrack,
    class_centers,
    deformation_vector,
    morph,
    morph_track,
    write_pgm,
)
from sae.svm import predict, svm_fit
from sae.synth import gaussian_blobs
from sae.training import TrainConfig, train


@pytest.fixture(scope="module")
def converged():
    ds = gaussian_blobs(160, n_classes=2, dim=8, separation=2.5, spread=0.5, seed=31)
    cfg = TrainConfig(gamma=0.5, learning_rate=0.01, epochs=150, batch_size=16, seed=5)
    model, _ = train(init_model(MlpSpec((8, 5, 2), output_activation="identity"),
                                cfg.seed, dtype=np.float64),
                     ds, uniform_distance_spec(2, 1.0), cfg)
    Z = encode(model, ds.features.T)
    svm = svm_fit(Z, ds.superclass, epochs=60, seed=0)
    return ds, model, svm


class TestClassCenters:
    def test_single_sample_classes(self):
        z = np.array([[1.0, 5.0], [2.0, 6.0]])
        centers = class_centers(z, np.array([0, 1]))
        assert np.array_equal(centers[0], [1.0, 2.0])
        assert np.array_equal(centers[1], [5.0, 6.0])

    def test_symmetric_pair_gives_midpoint(self):
        z = np.array([[1.0, -1.0], [0.0, 0.0]])
        centers = class_centers(z, np.array([0, 0]))
        assert np.allclose(centers[0], [0.0, 0.0])

    def test_converged_centers_match_prescribed_distance(self, converged):
        ds, model, _ = converged
        Z = encode(model, ds.features.T)
        centers = class_centers(np.asarray(Z, np.float64), ds.superclass)
        gap = np.linalg.norm(centers[0] - centers[1])
        assert abs(gap - 1.0) < 0.1  # within 10% of the spec distance

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError):
            class_centers(np.zeros((2, 3)), np.array([0, 0, 2]))


class TestDeformationVector:
    def test_zero_for_same_center(self):
        c = np.array([1.0, 2.0])
        assert np.array_equal(deformation_vector(c, c), np.zeros(2))

    def test_antisymmetry(self):
        a, b = np.array([0.0, 1.0]), np.array([2.0, -1.0])
        assert np.array_equal(deformation_vector(a, b), -deformation_vector(b, a))

    def test_unit_separation(self):
        a, b = np.zeros(3), np.array([1.0, 0.0, 0.0])
        assert np.linalg.norm(deformation_vector(a, b)) == 1.0


class TestMorph:
    def test_alpha_zero_is_reconstruction_bitwise(self, converged):
        ds, model, svm = converged
        v = deformation_vector(svm.class_centers[0], svm.class_centers[1])
        x = ds.features[3]
        out = morph(model, x, v, 0.0)
        recon = reconstruct(model, np.asarray(x, model.dtype)[:, None])[:, 0]
        assert np.array_equal(out, recon)

    def test_alpha_one_shifted_latent_classified_as_target(self, converged):
        ds, model, svm = converged
        v = deformation_vector(svm.class_centers[0], svm.class_centers[1])
        source = ds.features[ds.superclass == 0][0]
        z = np.asarray(encode(model, source[:, None])[:, 0], np.float64)
        assert predict(svm, z + v) == 1

    def test_scores_monotone_along_direction(self, converged):
        ds, model, svm = converged
        track = morph_track(model, svm, ds.features[ds.superclass == 0][0],
                            (0, 1), n_steps=11)
        diffs = np.diff(track.scores)
        assert np.all(diffs >= -1e-12)


class TestMorphTrack:
    def test_two_steps_are_endpoints(self, converged):
        ds, model, svm = converged
        track = morph_track(model, svm, ds.features[0], (0, 1), n_steps=2)
        assert track.alphas == (0.0, 1.0)
        assert track.outputs.shape == (ds.dim, 2)

    def test_toy_scores_near_endpoints(self, converged):
        ds, model, svm = converged
        source = ds.features[ds.superclass == 0][0]
        track = morph_track(model, svm, source, (0, 1), n_steps=5)
        assert track.scores[0] < 0.35
        assert track.scores[-1] > 0.65

    def test_minimum_steps(self, converged):
        ds, model, svm = converged
        with pytest.raises(ValueError):
            morph_track(model, svm, ds.features[0], (0, 1), n_steps=1)

    def test_strictly_increasing_alphas_enforced(self):
        with pytest.raises(ValueError):
            MorphTrack(source_id=0, pair=(0, 1), alphas=(0.0, 0.0),
                       outputs=np.zeros((2, 2)), scores=(0.0, 1.0))

    def test_unknown_pair(self, converged):
        ds, model, svm = converged
        with pytest.raises(KeyError):
            morph_track(model, svm, ds.features[0], (0, 7), n_steps=3)


class TestWritePgm:
    def test_round_trip_header_and_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.random((5, 7))
        p = tmp_path / "img.pgm"
        write_pgm(p, img)
        raw = p.read_bytes()
        header, rest = raw.split(b"\n", 1)
        assert header == b"P5"
        dims, rest = rest.split(b"\n", 1)
        assert dims == b"7 5"
        maxval, pixels = rest.split(b"\n", 1)
        assert maxval == b"255"
        assert len(pixels) == 35
        assert np.frombuffer(pixels, np.uint8).reshape(5, 7).max() <= 255
