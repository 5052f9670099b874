"""MLP autoencoder with exact analytic gradients.

Matrices are column-per-sample: inputs are (dim, n), latents (m, n). The
encoder applies affine layers with ReLU between them and identity at the
latent layer (targets are unconstrained points, so the latent must not be
squashed). The decoder mirrors the encoder and finishes with a logistic
sigmoid for unit-range image data or identity for raw vector data.

Losses per sample are squared Euclidean norms; batch losses are means over
samples. The combined objective weights the latent-target term by gamma and
reconstruction by (1 - gamma); samples without a target contribute their
reconstruction term with weight one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

OUTPUT_ACTIVATIONS = ("sigmoid", "identity")


@dataclass(frozen=True)
class MlpSpec:
    """Encoder layer sizes, input through latent; the decoder mirrors them."""

    layer_dims: tuple[int, ...]
    output_activation: str = "sigmoid"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValueError("need at least input and latent dimensions")
        if any(d < 1 for d in dims):
            raise ValueError("layer dimensions must be positive")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def latent_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class SaeModel:
    """Encoder/decoder parameters: per layer a weight matrix (out, in) and bias (out,)."""

    spec: MlpSpec
    encoder: list[tuple[np.ndarray, np.ndarray]]
    decoder: list[tuple[np.ndarray, np.ndarray]]
    epochs_trained: int = 0

    @property
    def dtype(self):
        return self.encoder[0][0].dtype

    def copy(self) -> "SaeModel":
        return SaeModel(
            spec=self.spec,
            encoder=[(w.copy(), b.copy()) for w, b in self.encoder],
            decoder=[(w.copy(), b.copy()) for w, b in self.decoder],
            epochs_trained=self.epochs_trained,
        )

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in declaration order (encoder then decoder, W then b)."""
        out: list[np.ndarray] = []
        for w, b in self.encoder:
            out.extend((w, b))
        for w, b in self.decoder:
            out.extend((w, b))
        return out


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype)


def init_model(spec: MlpSpec, seed: int, dtype=np.float32) -> SaeModel:
    """Seeded uniform Glorot weights, zero biases; encoder layers drawn first."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    encoder = [(_glorot(rng, dims[i + 1], dims[i], dtype),
                np.zeros(dims[i + 1], dtype=dtype))
               for i in range(len(dims) - 1)]
    rev = dims[::-1]
    decoder = [(_glorot(rng, rev[i + 1], rev[i], dtype),
                np.zeros(rev[i + 1], dtype=dtype))
               for i in range(len(rev) - 1)]
    return SaeModel(spec=spec, encoder=encoder, decoder=decoder)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # Split by sign to stay overflow-free in either direction.
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _forward_encoder(model: SaeModel, X: np.ndarray) -> list[np.ndarray]:
    """Activations [X, h1, ..., Z]; ReLU on hidden layers, identity at the latent."""
    acts = [X]
    last = len(model.encoder) - 1
    for i, (w, b) in enumerate(model.encoder):
        a = w @ acts[-1] + b[:, None]
        acts.append(a if i == last else np.maximum(a, 0))
    return acts


def _forward_decoder(model: SaeModel, Z: np.ndarray) -> list[np.ndarray]:
    acts = [Z]
    last = len(model.decoder) - 1
    for i, (w, b) in enumerate(model.decoder):
        a = w @ acts[-1] + b[:, None]
        if i == last:
            acts.append(_sigmoid(a) if model.spec.output_activation == "sigmoid" else a)
        else:
            acts.append(np.maximum(a, 0))
    return acts


def encode(model: SaeModel, X: np.ndarray) -> np.ndarray:
    """Latent codes Z (m, n) for inputs X (dim, n)."""
    X = np.asarray(X, dtype=model.dtype)
    if X.ndim != 2 or X.shape[0] != model.spec.input_dim:
        raise ValueError(f"expected ({model.spec.input_dim}, n) input, got {X.shape}")
    return _forward_encoder(model, X)[-1]


def decode(model: SaeModel, Z: np.ndarray) -> np.ndarray:
    """Reconstructions (dim, n) for latent codes Z (m, n)."""
    Z = np.asarray(Z, dtype=model.dtype)
    if Z.ndim != 2 or Z.shape[0] != model.spec.latent_dim:
        raise ValueError(f"expected ({model.spec.latent_dim}, n) latent, got {Z.shape}")
    return _forward_decoder(model, Z)[-1]


def reconstruct(model: SaeModel, X: np.ndarray) -> np.ndarray:
    return decode(model, encode(model, X))


def loss_ae(x: np.ndarray, xhat: np.ndarray) -> float:
    """Squared reconstruction error ||x - xhat||^2; mean over columns for batches."""
    x = np.asarray(x)
    xhat = np.asarray(xhat)
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    diff = np.asarray(x, dtype=np.float64) - np.asarray(xhat, dtype=np.float64)
    if diff.ndim == 1:
        return float(diff @ diff)
    return float(np.mean(np.sum(diff * diff, axis=0)))


def loss_structural(z: np.ndarray, ztilde: np.ndarray) -> float:
    """Squared distance to the latent target ||z - ztilde||^2; batch mean over columns."""
    return loss_ae(z, ztilde)


def loss_combined(x, xhat, z, ztilde, gamma: float) -> float:
    """gamma-weighted sum of structural and reconstruction losses.

    With no target (ztilde None) the loss is the plain reconstruction error.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if ztilde is None:
        return loss_ae(x, xhat)
    return gamma * loss_structural(z, ztilde) + (1.0 - gamma) * loss_ae(x, xhat)


def _zero_gradients(model: SaeModel):
    enc = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.encoder]
    dec = [(np.zeros_like(w), np.zeros_like(b)) for w, b in model.decoder]
    return enc, dec


def gradients(model: SaeModel, X: np.ndarray, Ztilde: np.ndarray | None,
              gamma: float, target_mask: np.ndarray | None = None):
    """Exact gradients of the batch-mean combined loss.

    ``Ztilde`` gives latent targets for the columns selected by ``target_mask``
    (all columns when the mask is omitted); ``Ztilde=None`` means a pure
    reconstruction batch. Columns without a target contribute reconstruction
    with weight one, targeted columns with weight (1 - gamma), and the target
    term injects 2*gamma*(z - ztilde)/batch at the latent layer.

    Returns (encoder_grads, decoder_grads, batch_loss) with gradients shaped
    like the parameters.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    X = np.asarray(X, dtype=model.dtype)
    n = X.shape[1]
    if n == 0:
        raise ValueError("empty batch")

    if Ztilde is None:
        mask = np.zeros(n, dtype=bool)
        Zt = None
    else:
        mask = np.ones(n, dtype=bool) if target_mask is None else np.asarray(target_mask, bool)
        Zt = np.asarray(Ztilde, dtype=model.dtype)
        if Zt.shape != (model.spec.latent_dim, int(mask.sum())):
            raise ValueError(f"targets must be (m, n_targeted), got {Zt.shape}")

    enc_acts = _forward_encoder(model, X)
    Z = enc_acts[-1]
    dec_acts = _forward_decoder(model, Z)
    Xhat = dec_acts[-1]
    if not np.all(np.isfinite(Xhat)):
        raise FloatingPointError("non-finite values in forward pass")

    dtype = model.dtype
    recon_coeff = np.where(mask, dtype.type(1.0 - gamma), dtype.type(1.0))

    enc_grads, dec_grads = _zero_gradients(model)

    # Decoder backprop from d(recon)/d(xhat) = 2*coeff*(xhat - x)/n.
    delta = (Xhat - X) * (dtype.type(2.0 / n) * recon_coeff)
    if model.spec.output_activation == "sigmoid":
        delta = delta * (Xhat * (1 - Xhat))
    for i in range(len(model.decoder) - 1, -1, -1):
        w, _ = model.decoder[i]
        h_prev = dec_acts[i]
        dec_grads[i] = (delta @ h_prev.T, delta.sum(axis=1))
        if i > 0:
            delta = (w.T @ delta) * (h_prev > 0)
        else:
            delta = w.T @ delta

    # Structural term enters at the latent layer.
    if Zt is not None and mask.any():
        struct = np.zeros_like(Z)
        struct[:, mask] = (Z[:, mask] - Zt) * dtype.type(2.0 * gamma / n)
        delta = delta + struct

    for i in range(len(model.encoder) - 1, -1, -1):
        w, _ = model.encoder[i]
        h_prev = enc_acts[i]
        enc_grads[i] = (delta @ h_prev.T, delta.sum(axis=1))
        if i > 0:
            delta = (w.T @ delta) * (h_prev > 0)

    recon = float(np.mean(np.sum((np.asarray(Xhat, np.float64) - np.asarray(X, np.float64)) ** 2,
                                 axis=0) * np.asarray(recon_coeff, np.float64)))
    batch_loss = recon
    if Zt is not None and mask.any():
        sdiff = np.asarray(Z[:, mask], np.float64) - np.asarray(Zt, np.float64)
        batch_loss += gamma * float(np.sum(sdiff * sdiff)) / n
    return enc_grads, dec_grads, batch_loss
