"""Variational speech priors.

The standard variant (M1) encodes a clean-speech power frame into a
diagonal-Gaussian posterior over a latent vector and decodes the latent
into per-bin speech variances.  The label-guided variants (M2-VAD,
M2-IBM) concatenate a per-frame label to both the encoder input and the
decoder input.  The reconstruction term of the training loss is the
Itakura-Saito form log v + s2/v summed over bins; the KL term is the
closed-form divergence from the standard-normal latent prior.
"""

from dataclasses import dataclass

import numpy as np

from .container import ACT_IDS, ACT_NAMES, Block, read_container, write_container
from .nn import FeedForwardNet, Layer, TrainConfig, backward, forward, train

__all__ = [
    "VaeModel",
    "GaussianPosterior",
    "build_model",
    "encode",
    "sample_latent",
    "decode",
    "elbo_loss",
    "train_vae",
    "save_vae",
    "load_vae",
    "kl_standard_normal",
    "is_reconstruction",
]

VARIANTS = ("M1", "M2-VAD", "M2-IBM")


def label_dim(variant, n_bins):
    if variant == "M1":
        return 0
    if variant == "M2-VAD":
        return 1
    if variant == "M2-IBM":
        return n_bins
    raise ValueError("unknown variant %r" % variant)


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian over the latent, variance kept as log-variance."""

    mean: np.ndarray
    log_var: np.ndarray

    @property
    def variance(self):
        return np.exp(self.log_var)


class VaeModel:
    def __init__(self, variant, trunk, head_mean, head_log_var, decoder):
        self.variant = variant
        self.trunk = trunk
        self.head_mean = head_mean
        self.head_log_var = head_log_var
        self.decoder = decoder
        self.latent_dim = head_mean.out_dim
        self.n_bins = decoder.out_dim
        self.label_dim = label_dim(variant, self.n_bins)

    def parameters(self):
        return (
            self.trunk.parameters()
            + self.head_mean.parameters()
            + self.head_log_var.parameters()
            + self.decoder.parameters()
        )


def build_model(variant, n_bins=513, latent_dim=16, hidden=128, rng_seed=0) -> VaeModel:
    """Encoder trunk F+c -> hidden -> hidden (tanh) with identity heads of
    size D; decoder D+c -> hidden -> hidden (tanh) -> F (exp)."""
    if variant not in VARIANTS:
        raise ValueError("unknown variant %r" % variant)
    c = label_dim(variant, n_bins)
    trunk = FeedForwardNet.create(
        [n_bins + c, hidden, hidden], ["tanh", "tanh"], rng_seed=rng_seed
    )
    head_mean = FeedForwardNet.create([hidden, latent_dim], ["identity"], rng_seed=rng_seed + 1)
    head_log_var = FeedForwardNet.create([hidden, latent_dim], ["identity"], rng_seed=rng_seed + 2)
    decoder = FeedForwardNet.create(
        [latent_dim + c, hidden, hidden, n_bins],
        ["tanh", "tanh", "exp"],
        rng_seed=rng_seed + 3,
    )
    return VaeModel(variant, trunk, head_mean, head_log_var, decoder)


def _check_label(model, power, label):
    power = np.asarray(power, dtype=np.float64)
    if model.label_dim == 0:
        if label is not None:
            raise ValueError("variant %s takes no label" % model.variant)
        return power, None
    if label is None:
        raise ValueError("variant %s requires a label" % model.variant)
    label = np.asarray(label, dtype=np.float64)
    if label.ndim == power.ndim - 1 and model.label_dim == 1:
        label = label[..., None]
    if label.shape[-1] != model.label_dim or label.shape[:-1] != power.shape[:-1]:
        raise ValueError("label shape does not match variant %s" % model.variant)
    return power, label


def encode(model: VaeModel, power, label=None) -> GaussianPosterior:
    """Posterior parameters from a power frame (or batch of frames)."""
    power, label = _check_label(model, power, label)
    x = power if label is None else np.concatenate([power, label], axis=-1)
    h = forward(model.trunk, x).output
    mean = forward(model.head_mean, h).output
    log_var = forward(model.head_log_var, h).output
    return GaussianPosterior(mean=mean, log_var=log_var)


def sample_latent(post: GaussianPosterior, rng) -> np.ndarray:
    """Reparameterized draw z = mean + sqrt(var) * eps."""
    eps = rng.standard_normal(post.mean.shape)
    return post.mean + np.exp(0.5 * post.log_var) * eps


def decode(model: VaeModel, z, label=None) -> np.ndarray:
    """Per-bin speech variances, strictly positive."""
    z = np.asarray(z, dtype=np.float64)
    if model.label_dim:
        if label is None:
            raise ValueError("variant %s requires a label" % model.variant)
        label = np.asarray(label, dtype=np.float64)
        if label.ndim == z.ndim - 1 and model.label_dim == 1:
            label = label[..., None]
        z = np.concatenate([z, label], axis=-1)
    elif label is not None:
        raise ValueError("variant %s takes no label" % model.variant)
    return forward(model.decoder, z).output


def kl_standard_normal(mean, log_var):
    """KL(N(mean, var) || N(0, I)) per frame."""
    return 0.5 * np.sum(mean**2 + np.exp(log_var) - log_var - 1.0, axis=-1)


def is_reconstruction(s2, v):
    """Itakura-Saito style reconstruction term, summed over bins."""
    return np.sum(np.log(v) + s2 / v, axis=-1)


def elbo_loss(model: VaeModel, power, label=None, rng=None, eps=None):
    """Negative per-frame ELBO (up to additive constants), batch mean.

    One reparameterized sample estimates the expectation; pass eps to fix
    it (used by the finite-difference checks).  Returns (loss, grads)
    with grads aligned to model.parameters().
    """
    power, label = _check_label(model, power, label)
    single = power.ndim == 1
    if single:
        power = power[None, :]
        label = None if label is None else label[None, :]
    if np.any(power < 0):
        raise ValueError("negative power")
    b = power.shape[0]

    enc_in = power if label is None else np.concatenate([power, label], axis=1)
    trunk_cache = forward(model.trunk, enc_in)
    h = trunk_cache.output
    mean_cache = forward(model.head_mean, h)
    log_var_cache = forward(model.head_log_var, h)
    mu = mean_cache.output
    lv = log_var_cache.output

    if eps is None:
        if rng is None:
            rng = np.random.default_rng(0)
        eps = rng.standard_normal(mu.shape)
    sigma = np.exp(0.5 * lv)
    z = mu + sigma * eps

    dec_in = z if label is None else np.concatenate([z, label], axis=1)
    dec_cache = forward(model.decoder, dec_in)
    v = dec_cache.output

    recon = is_reconstruction(power, v)
    kl = kl_standard_normal(mu, lv)
    loss = float(np.mean(recon + kl))

    dv = (1.0 / v - power / v**2) / b
    dec_grads, d_dec_in = backward(model.decoder, dec_cache, dv)
    dz = d_dec_in[:, : model.latent_dim]
    d_mu = dz + mu / b
    d_lv = dz * eps * 0.5 * sigma + 0.5 * (np.exp(lv) - 1.0) / b
    mean_grads, dh_mean = backward(model.head_mean, mean_cache, d_mu)
    lv_grads, dh_lv = backward(model.head_log_var, log_var_cache, d_lv)
    trunk_grads, _ = backward(model.trunk, trunk_cache, dh_mean + dh_lv)
    return loss, trunk_grads + mean_grads + lv_grads + dec_grads


def train_vae(model, train_powers, valid_powers, cfg: TrainConfig,
              train_labels=None, valid_labels=None):
    """Fit encoder and decoder jointly by minimizing the negative ELBO."""

    def loss_fn(m, xb, yb, rng):
        return elbo_loss(m, xb, label=yb, rng=rng)

    return train(model, loss_fn, (train_powers, train_labels),
                 (valid_powers, valid_labels), cfg)


def save_vae(path, model: VaeModel) -> None:
    nets = [model.trunk, model.head_mean, model.head_log_var, model.decoder]
    blocks = []
    for net in nets:
        for layer in net.layers:
            blocks.append(Block(layer.weight, layer.bias, ACT_IDS[layer.activation]))
    meta = {
        "kind": "vae",
        "variant": model.variant,
        "D": model.latent_dim,
        "F": model.n_bins,
        "trunk_layers": len(model.trunk.layers),
        "decoder_layers": len(model.decoder.layers),
    }
    write_container(path, blocks, meta)


def load_vae(path) -> VaeModel:
    meta, blocks = read_container(path)
    if meta.get("kind") != "vae":
        raise ValueError("%s is not a VAE checkpoint" % path)
    n_trunk = int(meta["trunk_layers"])
    n_dec = int(meta["decoder_layers"])
    layers = [
        Layer(
            weight=b.weights.astype(np.float64),
            bias=b.bias.astype(np.float64),
            activation=ACT_NAMES[b.act_id],
        )
        for b in blocks
    ]
    trunk = FeedForwardNet(layers[:n_trunk])
    head_mean = FeedForwardNet([layers[n_trunk]])
    head_log_var = FeedForwardNet([layers[n_trunk + 1]])
    decoder = FeedForwardNet(layers[n_trunk + 2 : n_trunk + 2 + n_dec])
    return VaeModel(meta["variant"], trunk, head_mean, head_log_var, decoder)
