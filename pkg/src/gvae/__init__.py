"""Single-channel speech enhancement with VAE speech priors, an NMF noise
model and Monte-Carlo EM inference."""

__version__ = "0.1.0"

from .signals import Waveform, Spectrogram, stft, istft, mix_at_snr
from .wavio import read_wav, write_wav
from .labels import LabelSeq, vad_labels, ibm_labels
from .dataset import (
    ManifestRecord,
    Standardizer,
    fit_standardizer,
    read_manifest,
    synthesize_dataset,
    write_manifest,
)
from .nn import (
    AdamState,
    FeedForwardNet,
    Layer,
    TrainConfig,
    adam_step,
    backward,
    bce_loss,
    forward,
    parameter_count,
    train,
)
from .vae import (
    GaussianPosterior,
    VaeModel,
    build_model,
    decode,
    elbo_loss,
    encode,
    sample_latent,
    train_vae,
)
from .classifiers import (
    ClassifierModel,
    classify,
    oracle_labels,
    spp_ibm,
    train_classifier,
)
from .mcem import (
    LatentChain,
    McemConfig,
    NmfState,
    mh_estep,
    mixture_loglik,
    mstep_update,
    run_mcem,
    wiener_reconstruct,
)
from .supervised import MaskNet, enhance_supervised, msa_loss, train_supervised
from .metrics import confidence_interval, f1, si_sdr
from .evaluate import run_evaluation
