"""Offline enhancement by Monte-Carlo expectation-maximization.

Given a frozen speech prior (and estimated labels for the guided
variants), the per-utterance noise parameters {gain, activations,
patterns} are fit by alternating a Metropolis-Hastings E-step over the
latent variables with multiplicative M-step updates on the Monte-Carlo
objective

    Q = (1/R) sum_r sum_{n,f} [ log lam_rnf + |x_nf|^2 / lam_rnf ],
    lam_rnf = g_n * v_f(z_n^r) + (H W)_nf.

Clean speech is then reconstructed with the posterior-mean Wiener gain.
"""

from dataclasses import dataclass, field

import numpy as np

from .labels import LabelSeq
from .signals import Spectrogram
from .vae import VaeModel, decode, encode

__all__ = [
    "NmfState",
    "McemConfig",
    "LatentChain",
    "mixture_loglik",
    "mh_estep",
    "mstep_update",
    "run_mcem",
    "wiener_reconstruct",
]

FLOOR = 1e-10


@dataclass
class NmfState:
    """Unsupervised parameters: activations (N, K), patterns (K, F), gains (N,)."""

    h: np.ndarray
    w: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.h = np.maximum(np.asarray(self.h, dtype=np.float64), FLOOR)
        self.w = np.maximum(np.asarray(self.w, dtype=np.float64), FLOOR)
        self.g = np.maximum(np.asarray(self.g, dtype=np.float64), FLOOR)

    @property
    def rank(self):
        return self.h.shape[1]

    def noise_psd(self):
        return self.h @ self.w

    @classmethod
    def initialize(cls, n_frames, n_bins, rank, rng):
        return cls(
            h=rng.uniform(0.0, 1.0, size=(n_frames, rank)),
            w=rng.uniform(0.0, 1.0, size=(rank, n_bins)),
            g=np.ones(n_frames),
        )


@dataclass
class McemConfig:
    n_iters: int = 200
    n_samples: int = 10  # kept states per E-step
    burn_in: int = 5
    proposal_std: float = 0.1
    rng_seed: int = 0
    rel_tol: float = 1e-4  # early stop when |dQ| < rel_tol*|Q| ...
    tol_patience: int = 10  # ... for this many consecutive iterations

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("need at least one kept sample")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.proposal_std <= 0:
            raise ValueError("proposal_std must be positive")


@dataclass
class LatentChain:
    current: np.ndarray  # (N, D)
    kept: np.ndarray | None = None  # (R, N, D)
    accepted_moves: int = 0
    total_moves: int = 0
    trace: list = field(default_factory=list)  # (iteration, Q, acceptance rate)

    @property
    def acceptance_rate(self):
        return self.accepted_moves / max(self.total_moves, 1)


def _label_matrix(labels, n_frames):
    if labels is None:
        return None
    if isinstance(labels, LabelSeq):
        data = labels.data
    else:
        data = np.asarray(labels, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] != n_frames:
        raise ValueError("label frame count does not match the spectrogram")
    return data


def _speech_var(model, z, label_mat):
    """Decoder variances for (N, D) or (R, N, D) latents."""
    if z.ndim == 2:
        return decode(model, z, label_mat if model.label_dim else None)
    r = z.shape[0]
    if model.label_dim:
        lab = np.broadcast_to(label_mat, (r,) + label_mat.shape)
        flat = decode(
            model,
            z.reshape(-1, z.shape[-1]),
            lab.reshape(-1, label_mat.shape[-1]),
        )
    else:
        flat = decode(model, z.reshape(-1, z.shape[-1]))
    return flat.reshape(r, z.shape[1], -1)


def mixture_loglik(z, x_frame, model: VaeModel, label, nmf: NmfState, n) -> float:
    """Log p(x_n | z) + log p(z) for one frame under the mixture model."""
    z = np.asarray(z, dtype=np.float64)
    lab = None
    if model.label_dim:
        lab = np.asarray(label, dtype=np.float64).reshape(-1)
    v = decode(model, z, lab if model.label_dim else None)
    lam = nmf.g[n] * v + nmf.noise_psd()[n]
    power = np.abs(np.asarray(x_frame)) ** 2
    if not np.all(np.isfinite(lam)):
        raise FloatingPointError("non-finite mixture variance")
    x_term = float(np.sum(-np.log(np.pi * lam) - power / lam))
    d = z.size
    z_term = float(-0.5 * d * np.log(2.0 * np.pi) - 0.5 * np.sum(z**2))
    return x_term + z_term


def mh_estep(chain: LatentChain, x_power, model: VaeModel, labels, nmf: NmfState,
             cfg: McemConfig, rng) -> np.ndarray:
    """Random-walk Metropolis-Hastings over per-frame latents.

    Runs burn_in + n_samples moves; every post-burn-in state is kept.
    All frames move in parallel (they are conditionally independent given
    the noise parameters).  Returns the kept latents, shape (R, N, D).
    """
    n_frames, d = chain.current.shape
    label_mat = _label_matrix(labels, n_frames)
    noise = nmf.noise_psd()
    g = nmf.g[:, None]

    z = chain.current
    v = _speech_var(model, z, label_mat)
    lam = g * v + noise
    kept = np.empty((cfg.n_samples, n_frames, d))
    z_sq = np.sum(z**2, axis=1)

    for move in range(cfg.burn_in + cfg.n_samples):
        z_prime = z + cfg.proposal_std * rng.standard_normal(z.shape)
        v_prime = _speech_var(model, z_prime, label_mat)
        lam_prime = g * v_prime + noise
        z_prime_sq = np.sum(z_prime**2, axis=1)
        delta = (
            np.sum(np.log(lam) - np.log(lam_prime) + (1.0 / lam - 1.0 / lam_prime) * x_power, axis=1)
            + 0.5 * (z_sq - z_prime_sq)
        )
        accept = np.log(rng.uniform(size=n_frames)) < delta
        z = np.where(accept[:, None], z_prime, z)
        v = np.where(accept[:, None], v_prime, v)
        lam = np.where(accept[:, None], lam_prime, lam)
        z_sq = np.where(accept, z_prime_sq, z_sq)
        chain.accepted_moves += int(accept.sum())
        chain.total_moves += n_frames
        if move >= cfg.burn_in:
            kept[move - cfg.burn_in] = z

    chain.current = z
    chain.kept = kept
    return kept


def q_objective(x_power, nmf: NmfState, v_kept) -> float:
    """Monte-Carlo EM objective for fixed latent samples."""
    lam = nmf.g[None, :, None] * v_kept + nmf.noise_psd()[None, :, :]
    return float(np.mean(np.sum(np.log(lam) + x_power[None, :, :] / lam, axis=(1, 2))))


def mstep_update(nmf: NmfState, x_power, kept, model: VaeModel = None,
                 labels=None, v_kept=None) -> NmfState:
    """Multiplicative majorize-minimize updates of H, W and g.

    Each factor is updated with the mixture variances recomputed after
    the previous one; results are floored to keep the updates strictly
    positive.
    """
    x_power = np.asarray(x_power, dtype=np.float64)
    if v_kept is None:
        label_mat = _label_matrix(labels, x_power.shape[0])
        v_kept = _speech_var(model, np.asarray(kept, dtype=np.float64), label_mat)
    h, w, g = nmf.h, nmf.w, nmf.g

    def lam_sums(h, w, g):
        lam = g[None, :, None] * v_kept + (h @ w)[None, :, :]
        return np.sum(lam**-1, axis=0), np.sum(lam**-2, axis=0)

    inv_sum, inv_sq_sum = lam_sums(h, w, g)
    h = h * np.sqrt(((x_power * inv_sq_sum) @ w.T) / np.maximum(inv_sum @ w.T, FLOOR))
    h = np.maximum(h, FLOOR)

    inv_sum, inv_sq_sum = lam_sums(h, w, g)
    w = w * np.sqrt((h.T @ (x_power * inv_sq_sum)) / np.maximum(h.T @ inv_sum, FLOOR))
    w = np.maximum(w, FLOOR)

    lam = g[None, :, None] * v_kept + (h @ w)[None, :, :]
    num = np.sum(x_power[None, :, :] * v_kept / lam**2, axis=(0, 2))
    den = np.maximum(np.sum(v_kept / lam, axis=(0, 2)), FLOOR)
    g = np.maximum(g * np.sqrt(num / den), FLOOR)

    return NmfState(h=h, w=w, g=g)


def run_mcem(x: Spectrogram, model: VaeModel, labels=None,
             cfg: McemConfig = None, nmf_rank: int = 10):
    """Fit the noise model and latent chain on one utterance.

    The chain starts at the encoder mean applied to the mixture power
    (with the estimated labels for the guided variants); the NMF factors
    start uniform in [0, 1].  Returns (NmfState, LatentChain) with the
    per-iteration (iteration, Q, acceptance rate) trace on the chain.
    """
    cfg = cfg or McemConfig()
    if (labels is not None) != bool(model.label_dim):
        raise ValueError("labels required iff the model is a guided variant")
    x_power = x.power()
    n_frames = x_power.shape[0]
    label_mat = _label_matrix(labels, n_frames)

    rng = np.random.default_rng(cfg.rng_seed)
    nmf = NmfState.initialize(n_frames, x_power.shape[1], nmf_rank, rng)
    post = encode(model, x_power, label_mat if model.label_dim else None)
    chain = LatentChain(current=np.array(post.mean, dtype=np.float64))

    q_prev = None
    quiet = 0
    for iteration in range(cfg.n_iters):
        acc0, tot0 = chain.accepted_moves, chain.total_moves
        kept = mh_estep(chain, x_power, model, label_mat, nmf, cfg, rng)
        v_kept = _speech_var(model, kept, label_mat)
        nmf = mstep_update(nmf, x_power, kept, v_kept=v_kept)
        q = q_objective(x_power, nmf, v_kept)
        rate = (chain.accepted_moves - acc0) / max(chain.total_moves - tot0, 1)
        chain.trace.append((iteration, q, rate))
        if q_prev is not None and abs(q_prev - q) < cfg.rel_tol * abs(q):
            quiet += 1
            if quiet >= cfg.tol_patience:
                break
        else:
            quiet = 0
        q_prev = q
    return nmf, chain


def wiener_reconstruct(x: Spectrogram, model: VaeModel, labels, nmf: NmfState,
                       chain: LatentChain) -> Spectrogram:
    """Posterior-mean Wiener gain applied to the mixture.

    gain_nf = (1/R) sum_r g_n v_f(z_n^r) / lam_rnf, which lies in (0, 1)
    for every sample by construction.
    """
    if chain.kept is None:
        raise ValueError("chain holds no kept samples; run the E-step first")
    label_mat = _label_matrix(labels, x.n_frames)
    v_kept = _speech_var(model, chain.kept, label_mat)
    scaled = nmf.g[None, :, None] * v_kept
    gain = np.mean(scaled / (scaled + nmf.noise_psd()[None, :, :]), axis=0)
    return Spectrogram(
        data=gain * x.data, n_fft=x.n_fft, hop=x.hop, sample_rate=x.sample_rate
    )
