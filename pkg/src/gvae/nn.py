"""Minimal dense-network stack: forward, reverse-mode gradients, Adam,
losses and a mini-batch training loop with early stopping.

Weights are stored as (out, in) matrices; inputs may be single vectors or
(batch, in) matrices.  Gradients are exact reverse-mode derivatives and
are routinely checked against central finite differences in the tests.
"""

from dataclasses import dataclass, field

import numpy as np

from .container import ACT_IDS, ACT_NAMES, Block, read_container, write_container

__all__ = [
    "Layer",
    "FeedForwardNet",
    "TrainConfig",
    "AdamState",
    "forward",
    "backward",
    "adam_step",
    "train",
    "bce_loss",
    "parameter_count",
    "save_net",
    "load_net",
    "TrainingDiverged",
]

ACTIVATIONS = ("identity", "tanh", "relu", "sigmoid", "exp")

# pre-activation clip for exp keeps float64 finite without touching the
# gradient anywhere training actually operates
_EXP_CLIP = 500.0


def apply_activation(name, z):
    if name == "identity":
        return z
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "exp":
        return np.exp(np.minimum(z, _EXP_CLIP))
    raise ValueError("unknown activation %r" % name)


def activation_derivative(name, z, a):
    """d activation / d z, given pre-activation z and output a."""
    if name == "identity":
        return np.ones_like(z)
    if name == "tanh":
        return 1.0 - a**2
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "exp":
        return a
    raise ValueError("unknown activation %r" % name)


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError("unknown activation %r" % self.activation)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("inconsistent layer shapes")


class FeedForwardNet:
    """A chain of dense layers."""

    def __init__(self, layers):
        self.layers = list(layers)
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")

    @classmethod
    def create(cls, dims, activations, rng_seed=0):
        """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        rng = np.random.default_rng(rng_seed)
        layers = []
        for d_in, d_out, act in zip(dims, dims[1:], activations):
            bound = np.sqrt(6.0 / (d_in + d_out))
            w = rng.uniform(-bound, bound, size=(d_out, d_in))
            layers.append(Layer(weight=w, bias=np.zeros(d_out), activation=act))
        return cls(layers)

    @property
    def in_dim(self):
        return self.layers[0].weight.shape[1] if self.layers else 0

    @property
    def out_dim(self):
        return self.layers[-1].weight.shape[0] if self.layers else 0

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def __call__(self, x):
        return forward(self, x).output


@dataclass
class ForwardCache:
    """Everything backward() needs: layer inputs, pre-activations, outputs."""

    inputs: list
    pre_activations: list
    outputs: list
    squeezed: bool

    @property
    def output(self):
        y = self.outputs[-1]
        return y[0] if self.squeezed else y


def forward(net: FeedForwardNet, x) -> ForwardCache:
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if net.layers and x.shape[1] != net.in_dim:
        raise ValueError(
            "input dim %d does not match first layer (%d)" % (x.shape[1], net.in_dim)
        )
    inputs, pres, outs = [], [], []
    for layer in net.layers:
        inputs.append(x)
        z = x @ layer.weight.T + layer.bias
        a = apply_activation(layer.activation, z)
        pres.append(z)
        outs.append(a)
        x = a
    if not net.layers:
        outs = [x]
        pres = [x]
        inputs = [x]
    return ForwardCache(inputs=inputs, pre_activations=pres, outputs=outs, squeezed=squeezed)


def backward(net: FeedForwardNet, cache: ForwardCache, grad_output):
    """Reverse-mode gradients for every layer parameter.

    grad_output is dLoss/d(network output).  Returns (grads, grad_input)
    where grads aligns with net.parameters() and grad_input is dLoss/dx.
    """
    if cache is None:
        raise ValueError("forward cache required for backward")
    g = np.asarray(grad_output, dtype=np.float64)
    if cache.squeezed and g.ndim == 1:
        g = g[None, :]
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        dz = g * activation_derivative(
            layer.activation, cache.pre_activations[i], cache.outputs[i]
        )
        grads[2 * i] = dz.T @ cache.inputs[i]
        grads[2 * i + 1] = dz.sum(axis=0)
        g = dz @ layer.weight
    if cache.squeezed:
        g = g[0]
    return grads, g


def parameter_count(model) -> int:
    """Total number of learnable scalars (weights plus biases)."""
    return int(sum(p.size for p in model.parameters()))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3):
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params, grads):
    """One Adam update, in place.  Raises on non-finite gradients."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("diverged: non-finite gradient")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g**2
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def bce_loss(p, t):
    """Mean binary cross entropy and its gradient with respect to p.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    pc = np.clip(p, 1e-7, 1.0 - 1e-7)
    loss = float(np.mean(-(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))))
    grad = (pc - t) / (pc * (1.0 - pc)) / pc.size
    return loss, grad


@dataclass
class TrainConfig:
    batch_size: int = 128
    lr: float = 1e-3
    patience: int = 20
    max_epochs: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class TrainingDiverged(RuntimeError):
    def __init__(self, history):
        super().__init__("training aborted: non-finite loss")
        self.history = history


def _eval_loss(model, loss_fn, x, y, batch_size, seed):
    """Validation loss with a fixed rng so epochs are comparable."""
    rng = np.random.default_rng(seed)
    total, count = 0.0, 0
    for lo in range(0, len(x), batch_size):
        xb = x[lo : lo + batch_size]
        yb = None if y is None else y[lo : lo + batch_size]
        loss, _ = loss_fn(model, xb, yb, rng)
        total += loss * len(xb)
        count += len(xb)
    return total / count


def train(model, loss_fn, train_data, valid_data, cfg: TrainConfig):
    """Mini-batch Adam with early stopping on the validation loss.

    train_data / valid_data are (inputs, targets) pairs; targets may be
    None.  loss_fn(model, xb, yb, rng) must return (loss, grads) with
    grads aligned to model.parameters().  The model keeps the parameters
    of its best validation epoch.  Returns a history dict.
    """
    x_tr, y_tr = train_data
    x_va, y_va = valid_data
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("empty training or validation split")

    params = model.parameters()
    adam = AdamState.for_params(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.rng_seed)
    valid_seed = np.random.default_rng(cfg.rng_seed + 1).integers(2**63)

    history = {"train_loss": [], "valid_loss": [], "best_epoch": 0}
    best_valid = np.inf
    best_params = [p.copy() for p in params]
    epochs_since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(x_tr))
        epoch_rng = np.random.default_rng(rng.integers(2**63))
        epoch_loss, seen = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb = x_tr[idx]
            yb = None if y_tr is None else y_tr[idx]
            loss, grads = loss_fn(model, xb, yb, epoch_rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(history)
            adam_step(adam, params, grads)
            epoch_loss += loss * len(idx)
            seen += len(idx)
        valid_loss = _eval_loss(model, loss_fn, x_va, y_va, cfg.batch_size, valid_seed)
        history["train_loss"].append(epoch_loss / seen)
        history["valid_loss"].append(valid_loss)

        if valid_loss < best_valid:
            best_valid = valid_loss
            best_params = [p.copy() for p in params]
            history["best_epoch"] = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    for p, b in zip(params, best_params):
        p[...] = b
    return history


def save_net(path, net: FeedForwardNet, meta=None) -> None:
    blocks = [
        Block(l.weight, l.bias, ACT_IDS[l.activation]) for l in net.layers
    ]
    write_container(path, blocks, meta or {})


def load_net(path):
    """Returns (FeedForwardNet, meta)."""
    meta, blocks = read_container(path)
    layers = []
    for b in blocks:
        if b.act_id not in ACT_NAMES:
            raise ValueError("block with activation id %d is not a layer" % b.act_id)
        layers.append(
            Layer(
                weight=b.weights.astype(np.float64),
                bias=b.bias.astype(np.float64),
                activation=ACT_NAMES[b.act_id],
            )
        )
    return FeedForwardNet(layers), meta
