"""Experiment runner: enhance a corpus split with several systems and
tabulate SI-SDR (with 95% confidence intervals) and classifier F1."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierModel, classify_labels, spp_ibm
from .dataset import CorpusEntry, read_labels
from .labels import LabelSeq
from .mcem import McemConfig, run_mcem, wiener_reconstruct
from .metrics import SI_SDR_CAP_DB, confidence_interval, f1, si_sdr
from .signals import Waveform, istft, stft
from .supervised import MaskNet, enhance_supervised
from .vae import VaeModel
from .wavio import read_wav

__all__ = [
    "EvalRow",
    "EvalReport",
    "run_evaluation",
    "MixtureSystem",
    "SupervisedSystem",
    "VaeSystem",
    "estimate_labels",
    "enhance_mcem",
]


def estimate_labels(backend, mix_power, entry: CorpusEntry = None,
                    classifier: ClassifierModel = None, kind=None) -> LabelSeq:
    """Per-frame labels for a guided model from the chosen backend.

    dnn-vad / dnn-ibm run the trained classifier, spp-ibm the non-learned
    estimator, oracle reads the stored ground truth for the utterance.
    """
    if backend in ("dnn-vad", "dnn-ibm"):
        if classifier is None:
            raise ValueError("backend %s needs a trained classifier" % backend)
        return classify_labels(classifier, mix_power)
    if backend == "spp-ibm":
        return spp_ibm(mix_power)
    if backend == "oracle":
        if entry is None:
            raise ValueError("oracle backend needs corpus ground truth")
        vad, ibm, _ = read_labels(entry.labels_path)
        return vad if kind == "VAD" else ibm
    raise ValueError("unknown classifier backend %r" % backend)


def enhance_mcem(mixture: Waveform, model: VaeModel, labels,
                 cfg: McemConfig, nmf_rank=10, n_fft=1024, hop=256):
    """Full MCEM enhancement of one waveform; returns (estimate, chain)."""
    spec = stft(mixture, n_fft=n_fft, hop=hop)
    nmf, chain = run_mcem(spec, model, labels=labels, cfg=cfg, nmf_rank=nmf_rank)
    enhanced = wiener_reconstruct(spec, model, labels, nmf, chain)
    return istft(enhanced, length=len(mixture)), chain


class MixtureSystem:
    """Passthrough: the estimate is the mixture itself."""

    name = "Mixture"
    classifier_name = "--"
    has_f1 = False
    by_construction_buckets = True

    def enhance(self, entry: CorpusEntry) -> Waveform:
        return read_wav(entry.mixture_path)


class SupervisedSystem:
    name = "Supervised"
    classifier_name = "--"
    has_f1 = False
    by_construction_buckets = False

    def __init__(self, mask_net: MaskNet, n_fft=1024, hop=256):
        self.mask_net = mask_net
        self.n_fft = n_fft
        self.hop = hop

    def enhance(self, entry: CorpusEntry) -> Waveform:
        mixture = read_wav(entry.mixture_path)
        spec = stft(mixture, n_fft=self.n_fft, hop=self.hop)
        return istft(enhance_supervised(self.mask_net, spec), length=len(mixture))


class VaeSystem:
    """M1 or a guided variant with a label backend."""

    has_f1 = False
    by_construction_buckets = False

    def __init__(self, model: VaeModel, backend=None, classifier=None,
                 mcem_cfg: McemConfig = None, nmf_rank=10, n_fft=1024, hop=256):
        self.model = model
        self.backend = backend
        self.classifier = classifier
        self.mcem_cfg = mcem_cfg or McemConfig()
        self.nmf_rank = nmf_rank
        self.n_fft = n_fft
        self.hop = hop
        self.label_kind = {"M2-VAD": "VAD", "M2-IBM": "IBM"}.get(model.variant)
        if model.variant == "M1":
            self.name = "M1"
            self.classifier_name = "--"
        else:
            if backend is None:
                raise ValueError("guided variant %s needs a classifier backend" % model.variant)
            self.name = model.variant.replace("-", "+")
            self.classifier_name = backend
            self.has_f1 = True

    def labels_for(self, entry: CorpusEntry, mix_power):
        if self.model.variant == "M1":
            return None
        return estimate_labels(self.backend, mix_power, entry=entry,
                               classifier=self.classifier, kind=self.label_kind)

    def truth_for(self, entry: CorpusEntry):
        vad, ibm, _ = read_labels(entry.labels_path)
        return vad if self.label_kind == "VAD" else ibm

    def enhance(self, entry: CorpusEntry) -> Waveform:
        mixture = read_wav(entry.mixture_path)
        spec = stft(mixture, n_fft=self.n_fft, hop=self.hop)
        labels = self.labels_for(entry, spec.power())
        cfg = McemConfig(
            n_iters=self.mcem_cfg.n_iters,
            n_samples=self.mcem_cfg.n_samples,
            burn_in=self.mcem_cfg.burn_in,
            proposal_std=self.mcem_cfg.proposal_std,
            rng_seed=self.mcem_cfg.rng_seed + entry.index,
            rel_tol=self.mcem_cfg.rel_tol,
            tol_patience=self.mcem_cfg.tol_patience,
        )
        nmf, chain = run_mcem(spec, self.model, labels=labels, cfg=cfg,
                              nmf_rank=self.nmf_rank)
        enhanced = wiener_reconstruct(spec, self.model, labels, nmf, chain)
        return istft(enhanced, length=len(mixture))


@dataclass
class EvalRow:
    model: str
    classifier: str
    f1_score: float | None
    overall: tuple
    per_snr: dict


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    snrs: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_tsv(self) -> str:
        cols = ["model", "classifier", "F1", "SI-SDR"] + ["SI-SDR@%g" % s for s in self.snrs]
        lines = ["\t".join(cols)]
        for row in self.rows:
            cells = [
                row.model,
                row.classifier,
                "--" if row.f1_score is None else "%.2f" % row.f1_score,
                "%.1f±%.1f" % row.overall,
            ]
            for s in self.snrs:
                cells.append("%.1f±%.1f" % row.per_snr[s])
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        table = [line.split("\t") for line in self.to_tsv().splitlines()]
        widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
        out = []
        for r in table:
            out.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        return "\n".join(out) + "\n"


def _utterance_metrics(system, entry):
    estimate = system.enhance(entry)
    reference = read_wav(entry.clean_path)
    value = si_sdr(estimate, reference)
    value = min(value, SI_SDR_CAP_DB)
    if system.has_f1:
        mix_power = stft(read_wav(entry.mixture_path), n_fft=system.n_fft,
                         hop=system.hop).power()
        pred = system.labels_for(entry, mix_power)
        truth = system.truth_for(entry)
        return value, (pred.data.ravel(), truth.data.ravel())
    return value, None


def run_evaluation(entries, systems, jobs=1, metadata=None) -> EvalReport:
    """Score every system on every corpus entry.

    The mixture-as-estimate row is always included.  Per-SNR buckets use
    the synthesis target SNR; the mixture row's bucket cells show the
    bucket label with zero width by construction.
    """
    systems = list(systems)
    if not any(isinstance(s, MixtureSystem) for s in systems):
        systems.insert(0, MixtureSystem())
    snrs = sorted({e.snr_db for e in entries})
    report = EvalReport(snrs=snrs, metadata=metadata or {})

    for system in systems:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(lambda e: _utterance_metrics(system, e), entries))
        else:
            results = [_utterance_metrics(system, e) for e in entries]
        values = np.array([r[0] for r in results])
        overall = confidence_interval(values) if len(values) > 1 else (float(values[0]), 0.0)

        per_snr = {}
        for s in snrs:
            if system.by_construction_buckets:
                per_snr[s] = (s, 0.0)
                continue
            bucket = np.array([v for v, e in zip(values, entries) if e.snr_db == s])
            per_snr[s] = (
                confidence_interval(bucket) if len(bucket) > 1 else (float(bucket[0]), 0.0)
            )

        f1_score = None
        if system.has_f1:
            pred = np.concatenate([r[1][0] for r in results])
            truth = np.concatenate([r[1][1] for r in results])
            _, _, f1_score = f1(pred, truth)

        report.rows.append(
            EvalRow(
                model=system.name,
                classifier=system.classifier_name,
                f1_score=f1_score,
                overall=overall,
                per_snr=per_snr,
            )
        )
    return report
