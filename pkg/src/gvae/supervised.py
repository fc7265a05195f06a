"""Conventional supervised baseline: a dense mask estimator.

The network maps standardized mixture log-power to a per-bin mask in
(0, 1) and is trained with the magnitude spectrum approximation loss
sum_f (mask_f * |x_f| - |s_f|)^2, averaged over the frames in a batch.
"""

from dataclasses import dataclass

import numpy as np

from .container import ACT_IDS, ACT_NAMES, ACT_AUX, Block, read_container, write_container
from .dataset import Standardizer, fit_standardizer
from .nn import FeedForwardNet, Layer, TrainConfig, backward, forward, train
from .signals import Spectrogram

__all__ = [
    "MaskNet",
    "build_mask_net",
    "msa_loss",
    "train_supervised",
    "enhance_supervised",
    "save_mask_net",
    "load_mask_net",
]


@dataclass
class MaskNet:
    net: FeedForwardNet
    standardizer: Standardizer | None

    def parameters(self):
        return self.net.parameters()


def build_mask_net(n_bins=513, hidden=128, n_hidden_layers=5, rng_seed=0) -> MaskNet:
    """Five ReLU hidden layers and a sigmoid output, one unit per bin."""
    dims = [n_bins] + [hidden] * n_hidden_layers + [n_bins]
    acts = ["relu"] * n_hidden_layers + ["sigmoid"]
    return MaskNet(net=FeedForwardNet.create(dims, acts, rng_seed=rng_seed), standardizer=None)


def msa_loss(mask, mix_mag, clean_mag):
    """Magnitude spectrum approximation loss and its gradient w.r.t. the mask."""
    mask = np.asarray(mask, dtype=np.float64)
    mix_mag = np.asarray(mix_mag, dtype=np.float64)
    clean_mag = np.asarray(clean_mag, dtype=np.float64)
    n_frames = mask.shape[0] if mask.ndim > 1 else 1
    resid = mask * mix_mag - clean_mag
    loss = float(np.sum(resid**2) / n_frames)
    grad = 2.0 * resid * mix_mag / n_frames
    return loss, grad


def train_supervised(train_mix_mag, train_clean_mag, valid_mix_mag, valid_clean_mag,
                     cfg: TrainConfig, hidden=128) -> tuple:
    """Fit the mask net on (mixture, clean) magnitude pairs.

    Inputs are standardized mixture log-powers; the loss targets stay raw
    magnitudes.  Returns (MaskNet, history).
    """
    train_mix_mag = np.asarray(train_mix_mag, dtype=np.float64)
    n_bins = train_mix_mag.shape[1]
    model = build_mask_net(n_bins=n_bins, hidden=hidden, rng_seed=cfg.rng_seed)
    standardizer = fit_standardizer(train_mix_mag**2)
    model.standardizer = standardizer

    x_tr = standardizer.apply(train_mix_mag**2)
    x_va = standardizer.apply(valid_mix_mag**2)
    # targets carry both magnitudes so the generic trainer sees one array
    y_tr = np.stack([train_mix_mag, train_clean_mag], axis=1)
    y_va = np.stack([np.asarray(valid_mix_mag, dtype=np.float64),
                     np.asarray(valid_clean_mag, dtype=np.float64)], axis=1)

    def loss_fn(m, xb, yb, rng):
        cache = forward(m.net, xb)
        loss, dmask = msa_loss(cache.output, yb[:, 0], yb[:, 1])
        grads, _ = backward(m.net, cache, dmask)
        return loss, grads

    history = train(model, loss_fn, (x_tr, y_tr), (x_va, y_va), cfg)
    return model, history


def predict_mask(model: MaskNet, mixture_power):
    if model.standardizer is None:
        raise ValueError("mask net has no fitted standardizer")
    feats = model.standardizer.apply(mixture_power)
    return forward(model.net, feats).output


def enhance_supervised(model: MaskNet, mixture: Spectrogram) -> Spectrogram:
    """Apply the estimated mask to the complex mixture (noisy phase kept)."""
    mask = predict_mask(model, mixture.power())
    return Spectrogram(
        data=mask * mixture.data,
        n_fft=mixture.n_fft,
        hop=mixture.hop,
        sample_rate=mixture.sample_rate,
    )


def save_mask_net(path, model: MaskNet) -> None:
    blocks = [Block(l.weight, l.bias, ACT_IDS[l.activation]) for l in model.net.layers]
    if model.standardizer is not None:
        blocks.append(Block(model.standardizer.mean[None, :], act_id=ACT_AUX))
        blocks.append(Block(model.standardizer.std[None, :], act_id=ACT_AUX))
    write_container(path, blocks, {"kind": "masknet"})


def load_mask_net(path) -> MaskNet:
    meta, blocks = read_container(path)
    if meta.get("kind") != "masknet":
        raise ValueError("%s is not a mask-net checkpoint" % path)
    layers, aux = [], []
    for b in blocks:
        if b.act_id == ACT_AUX:
            aux.append(b.weights[0].astype(np.float64))
        else:
            layers.append(
                Layer(
                    weight=b.weights.astype(np.float64),
                    bias=b.bias.astype(np.float64),
                    activation=ACT_NAMES[b.act_id],
                )
            )
    std = Standardizer(aux[0], aux[1]) if len(aux) == 2 else None
    return MaskNet(net=FeedForwardNet(layers), standardizer=std)
