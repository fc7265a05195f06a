"""Label estimation from the noisy mixture.

Three backends produce per-frame labels for the guided models: trained
feedforward classifiers (VAD or IBM), a non-learned speech-presence
-probability estimator with a recursively smoothed noise PSD, and an
oracle passthrough that delegates to the ground-truth rules.
"""

from dataclasses import dataclass

import numpy as np

from .container import ACT_IDS, ACT_NAMES, ACT_AUX, Block, read_container, write_container
from .dataset import Standardizer, fit_standardizer
from .labels import LabelSeq, ibm_labels, vad_labels
from .nn import FeedForwardNet, Layer, TrainConfig, backward, bce_loss, forward, train

__all__ = [
    "ClassifierModel",
    "build_classifier",
    "train_classifier",
    "classify",
    "SppEstimator",
    "spp_ibm",
    "oracle_labels",
    "save_classifier",
    "load_classifier",
]


@dataclass
class ClassifierModel:
    kind: str  # VAD or IBM
    net: FeedForwardNet
    standardizer: Standardizer | None

    def parameters(self):
        return self.net.parameters()


def build_classifier(kind, n_bins=513, hidden=128, rng_seed=0) -> ClassifierModel:
    """Two ReLU hidden layers, sigmoid output of dim 1 (VAD) or F (IBM)."""
    if kind not in ("VAD", "IBM"):
        raise ValueError("kind must be VAD or IBM")
    out = 1 if kind == "VAD" else n_bins
    net = FeedForwardNet.create(
        [n_bins, hidden, hidden, out], ["relu", "relu", "sigmoid"], rng_seed=rng_seed
    )
    return ClassifierModel(kind=kind, net=net, standardizer=None)


def train_classifier(kind, train_power, train_labels, valid_power, valid_labels,
                     cfg: TrainConfig, n_bins=None, hidden=128) -> tuple:
    """Supervised BCE training on standardized mixture log-power frames.

    Labels are (N, 1) for VAD and (N, F) for IBM.  Returns
    (ClassifierModel, history).
    """
    train_power = np.asarray(train_power, dtype=np.float64)
    if n_bins is None:
        n_bins = train_power.shape[1]
    model = build_classifier(kind, n_bins=n_bins, hidden=hidden, rng_seed=cfg.rng_seed)
    standardizer = fit_standardizer(train_power)
    model.standardizer = standardizer

    x_tr = standardizer.apply(train_power)
    x_va = standardizer.apply(valid_power)

    def loss_fn(m, xb, yb, rng):
        cache = forward(m.net, xb)
        loss, dp = bce_loss(cache.output, yb)
        grads, _ = backward(m.net, cache, dp)
        return loss, grads

    history = train(model, loss_fn, (x_tr, np.asarray(train_labels, dtype=np.float64)),
                    (x_va, np.asarray(valid_labels, dtype=np.float64)), cfg)
    return model, history


def classify(model: ClassifierModel, mixture_power):
    """Posterior probabilities and hard labels for mixture power frames.

    Hard label is 1 iff the probability strictly exceeds 0.5 (a tie at
    exactly 0.5 counts as noise).
    """
    if model.standardizer is None:
        raise ValueError("classifier has no fitted standardizer")
    feats = model.standardizer.apply(np.asarray(mixture_power, dtype=np.float64))
    probs = forward(model.net, feats).output
    hard = (probs > 0.5).astype(np.float64)
    return probs, hard


def classify_labels(model: ClassifierModel, mixture_power) -> LabelSeq:
    _, hard = classify(model, np.atleast_2d(mixture_power))
    if model.kind == "VAD":
        return LabelSeq(kind="VAD", data=hard[:, 0])
    return LabelSeq(kind="IBM", data=hard)


class SppEstimator:
    """Per-bin speech presence probability with recursive noise tracking.

    Fixed prior SNR (15 dB), equal speech/noise priors and a smoothing
    constant of 0.8; the noise PSD starts from the mean power of the
    first five frames.
    """

    def __init__(self, xi_db=15.0, p_h1=0.5, alpha_psd=0.8, init_frames=5):
        if not 0.0 < p_h1 < 1.0:
            raise ValueError("p_h1 must be in (0, 1)")
        self.xi = 10.0 ** (xi_db / 10.0)
        self.p_h1 = p_h1
        self.alpha_psd = alpha_psd
        self.init_frames = init_frames
        self.noise_psd = None

    def initialize(self, power):
        head = np.asarray(power[: self.init_frames], dtype=np.float64)
        self.noise_psd = np.maximum(head.mean(axis=0), 1e-10)

    def step(self, frame_power):
        """SPP for one frame; updates the noise PSD afterwards."""
        prior_ratio = (1.0 - self.p_h1) / self.p_h1
        xi_term = self.xi / (1.0 + self.xi)
        spp = 1.0 / (
            1.0
            + (1.0 + self.xi)
            * prior_ratio
            * np.exp(-np.minimum(frame_power / self.noise_psd * xi_term, 700.0))
        )
        update = (1.0 - spp) * frame_power + spp * self.noise_psd
        self.noise_psd = np.maximum(
            self.alpha_psd * self.noise_psd + (1.0 - self.alpha_psd) * update, 1e-10
        )
        return spp


def spp_ibm(mixture_power) -> LabelSeq:
    """Non-learned IBM estimate: bin is speech iff its SPP exceeds 0.5."""
    power = np.atleast_2d(np.asarray(mixture_power, dtype=np.float64))
    est = SppEstimator()
    est.initialize(power)
    mask = np.empty_like(power)
    for n in range(power.shape[0]):
        mask[n] = est.step(power[n]) > 0.5
    return LabelSeq(kind="IBM", data=mask)


def oracle_labels(clean_power, noise_power=None, kind="IBM") -> LabelSeq:
    """Ground-truth passthrough (test-time diagnostic)."""
    if kind == "VAD":
        return vad_labels(clean_power)
    if noise_power is None:
        raise ValueError("oracle IBM needs the noise power")
    return ibm_labels(clean_power, noise_power)


def save_classifier(path, model: ClassifierModel) -> None:
    blocks = [
        Block(l.weight, l.bias, ACT_IDS[l.activation]) for l in model.net.layers
    ]
    if model.standardizer is not None:
        blocks.append(Block(model.standardizer.mean[None, :], act_id=ACT_AUX))
        blocks.append(Block(model.standardizer.std[None, :], act_id=ACT_AUX))
    write_container(path, blocks, {"kind": "classifier", "label": model.kind})


def load_classifier(path) -> ClassifierModel:
    meta, blocks = read_container(path)
    if meta.get("kind") != "classifier":
        raise ValueError("%s is not a classifier checkpoint" % path)
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
    return ClassifierModel(kind=meta["label"], net=FeedForwardNet(layers), standardizer=std)
