"""Checkpoint container: text manifest plus flat little-endian float32 blob.

Layout:
    bytes 0..3   magic "SAE1"
    bytes 4..7   u32 little-endian manifest byte length
    manifest     UTF-8 "key=value" lines
    parameters   param_count float32 little-endian values, declaration order
                 (encoder layers then decoder layers, weights row-major then bias)
    svm section  optional; float64 little-endian: per sorted pair w then b,
                 then per sorted class its center

Model parameters are stored as float32; models kept in float32 round-trip
bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import MlpSpec, SaeModel
from .svm import PairClassifier, SvmModel

MAGIC = b"SAE1"


class CheckpointError(ValueError):
    """Raised for unreadable or inconsistent checkpoint files."""


@dataclass(frozen=True)
class CheckpointBundle:
    model: SaeModel
    svm: SvmModel | None
    manifest: dict[str, str]


def _format_manifest(items: dict[str, str]) -> bytes:
    lines = [f"{k}={v}" for k, v in items.items()]
    return ("\n".join(lines) + "\n").encode()


def _parse_manifest(raw: bytes) -> dict[str, str]:
    manifest: dict[str, str] = {}
    for line in raw.decode().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        manifest[key] = value
    return manifest


def save_checkpoint(path, model: SaeModel, svm: SvmModel | None = None,
                    extra: dict[str, str] | None = None) -> None:
    """Write model (and optional SVM section) to ``path``."""
    params = model.parameters()
    blob = np.concatenate([np.asarray(p, np.float32).reshape(-1) for p in params])

    manifest = {
        "layer_dims": ",".join(str(d) for d in model.spec.layer_dims),
        "output_activation": model.spec.output_activation,
        "epochs_trained": str(model.epochs_trained),
        "param_count": str(blob.size),
        "svm_present": "0",
    }
    svm_blob = np.empty(0, np.float64)
    if svm is not None:
        pairs = sorted(svm.pairs)
        classes = svm.classes
        m = model.spec.latent_dim
        chunks = []
        for p in pairs:
            clf = svm.pairs[p]
            chunks.append(np.asarray(clf.w, np.float64))
            chunks.append(np.asarray([clf.b], np.float64))
        for c in classes:
            chunks.append(np.asarray(svm.class_centers[c], np.float64))
        svm_blob = np.concatenate(chunks)
        manifest.update({
            "svm_present": "1",
            "svm_pairs": ";".join(f"{a},{b}" for a, b in pairs),
            "svm_classes": ",".join(str(c) for c in classes),
            "svm_lambda": repr(float(svm.lam)),
            "svm_value_count": str(svm_blob.size),
            "svm_latent_dim": str(m),
        })
    if extra:
        overlap = set(extra) & set(manifest)
        if overlap:
            raise ValueError(f"extra manifest keys clash: {sorted(overlap)}")
        manifest.update(extra)

    raw = _format_manifest(manifest)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(blob.astype("<f4").tobytes())
        if svm is not None:
            f.write(svm_blob.astype("<f8").tobytes())


def load_checkpoint(path) -> CheckpointBundle:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (manifest_len,) = struct.unpack("<I", f.read(4))
        manifest = _parse_manifest(f.read(manifest_len))

        spec = MlpSpec(
            layer_dims=tuple(int(d) for d in manifest["layer_dims"].split(",")),
            output_activation=manifest["output_activation"],
        )
        param_count = int(manifest["param_count"])
        raw = f.read(param_count * 4)
        if len(raw) != param_count * 4:
            raise CheckpointError(f"{path}: truncated parameter blob")
        flat = np.frombuffer(raw, dtype="<f4")

        dims = spec.layer_dims
        shapes = [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]
        shapes += [(d1, d0) for d0, d1 in reversed(shapes)]
        encoder: list[tuple[np.ndarray, np.ndarray]] = []
        decoder: list[tuple[np.ndarray, np.ndarray]] = []
        offset = 0
        for li, (rows, cols) in enumerate(shapes):
            w = flat[offset:offset + rows * cols].reshape(rows, cols).copy()
            offset += rows * cols
            b = flat[offset:offset + rows].copy()
            offset += rows
            (encoder if li < len(dims) - 1 else decoder).append((w, b))
        if offset != param_count:
            raise CheckpointError(f"{path}: parameter count mismatch "
                                  f"({param_count} declared, {offset} consumed)")
        model = SaeModel(spec=spec, encoder=encoder, decoder=decoder,
                         epochs_trained=int(manifest.get("epochs_trained", "0")))

        svm = None
        if manifest.get("svm_present") == "1":
            count = int(manifest["svm_value_count"])
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated svm section")
            values = np.frombuffer(raw, dtype="<f8")
            m = int(manifest["svm_latent_dim"])
            pair_keys = [tuple(int(x) for x in p.split(","))
                         for p in manifest["svm_pairs"].split(";") if p]
            classes = [int(c) for c in manifest["svm_classes"].split(",") if c]
            pairs = {}
            offset = 0
            for key in pair_keys:
                w = values[offset:offset + m].copy()
                offset += m
                b = float(values[offset])
                offset += 1
                pairs[(key[0], key[1])] = PairClassifier(w=w, b=b)
            centers = {}
            for c in classes:
                centers[c] = values[offset:offset + m].copy()
                offset += m
            if offset != count:
                raise CheckpointError(f"{path}: svm value count mismatch")
            svm = SvmModel(pairs=pairs, class_centers=centers,
                           lam=float(manifest["svm_lambda"]))
    return CheckpointBundle(model=model, svm=svm, manifest=manifest)
