import numpy as np
import pytest

from sae.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint
from sae.model import MlpSpec, encode, init_model, reconstruct
from sae.svm import svm_fit


@pytest.fixture
def model():
    m = init_model(MlpSpec((6, 4, 3)), seed=7)
    m.epochs_trained = 12
    return m


@pytest.fixture
def fitted_svm():
    rng = np.random.default_rng(0)
    labels = np.arange(40) % 3
    centers = np.array([[0, 0, 0.0], [1, 0, 0], [0, 1, 0]])
    z = centers[labels].T + 0.05 * rng.standard_normal((3, 40))
    return svm_fit(z, labels, epochs=30, seed=1)


class TestRoundTrip:
    def test_forward_pass_bitwise(self, model, tmp_path):
        path = tmp_path / "m.sae"
        save_checkpoint(path, model)
        loaded = load_checkpoint(path).model
        X = np.random.default_rng(1).random((6, 9)).astype(np.float32)
        assert np.array_equal(reconstruct(model, X), reconstruct(loaded, X))
        assert np.array_equal(encode(model, X), encode(loaded, X))
        assert loaded.epochs_trained == 12
        assert loaded.spec == model.spec

    def test_magic_prefix(self, model, tmp_path):
        path = tmp_path / "m.sae"
        save_checkpoint(path, model)
        assert path.read_bytes()[:4] == MAGIC == b"SAE1"

    def test_parameter_blob_is_float32_le(self, model, tmp_path):
        path = tmp_path / "m.sae"
        save_checkpoint(path, model)
        raw = path.read_bytes()
        import struct

        manifest_len = struct.unpack("<I", raw[4:8])[0]
        manifest = dict(line.split("=", 1)
                        for line in raw[8:8 + manifest_len].decode().splitlines())
        count = int(manifest["param_count"])
        blob = np.frombuffer(raw[8 + manifest_len:8 + manifest_len + 4 * count], "<f4")
        flat = np.concatenate([p.reshape(-1) for p in model.parameters()])
        assert np.array_equal(blob, flat)

    def test_svm_section_round_trip(self, model, fitted_svm, tmp_path):
        path = tmp_path / "m.sae"
        save_checkpoint(path, model, svm=fitted_svm)
        bundle = load_checkpoint(path)
        assert bundle.svm is not None
        assert sorted(bundle.svm.pairs) == sorted(fitted_svm.pairs)
        for pair in fitted_svm.pairs:
            assert np.array_equal(bundle.svm.pairs[pair].w, fitted_svm.pairs[pair].w)
            assert bundle.svm.pairs[pair].b == fitted_svm.pairs[pair].b
        for c in fitted_svm.classes:
            assert np.array_equal(bundle.svm.class_centers[c],
                                  fitted_svm.class_centers[c])
        assert bundle.svm.lam == fitted_svm.lam

    def test_extra_manifest_entries(self, model, tmp_path):
        path = tmp_path / "m.sae"
        save_checkpoint(path, model, extra={"gamma": "0.5", "seed": "3"})
        manifest = load_checkpoint(path).manifest
        assert manifest["gamma"] == "0.5"
        assert manifest["seed"] == "3"

    def test_extra_key_clash_rejected(self, model, tmp_path):
        with pytest.raises(ValueError):
            save_checkpoint(tmp_path / "m.sae", model, extra={"param_count": "1"})


class TestErrors:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(p)

    def test_truncated_blob(self, model, tmp_path):
        path = tmp_path / "m.sae"
        save_checkpoint(path, model)
        truncated = tmp_path / "trunc"
        truncated.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(truncated)
