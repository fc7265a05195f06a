"""Corpus synthesis and feature plumbing.

A dataset manifest is a line-oriented, tab-separated file whose records
are (clean_path, noise_path, noise_offset, snr_db, split, rng_seed).
`synthesize_dataset` materializes each record into a mixture WAV, a clean
reference WAV and a label container holding the ground-truth VAD and IBM,
plus an index.tsv tying them together.
"""

import os
import warnings
from dataclasses import dataclass

import numpy as np

from .container import Block, read_container, write_container
from .labels import LabelSeq, ibm_labels, vad_labels
from .signals import Waveform, scale_for_snr, stft
from .wavio import read_wav, write_wav

__all__ = [
    "ManifestRecord",
    "read_manifest",
    "write_manifest",
    "synthesize_dataset",
    "Standardizer",
    "fit_standardizer",
    "CorpusEntry",
    "load_index",
    "SynthesisError",
]

SPLITS = ("train", "valid", "test")
LOG_EPS = 1e-10


@dataclass
class ManifestRecord:
    clean_path: str
    noise_path: str
    noise_offset: int  # -1 draws a random offset from rng_seed
    snr_db: float
    split: str
    rng_seed: int

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError("split must be one of %s" % (SPLITS,))


def read_manifest(path):
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ValueError("manifest line %d: expected 6 fields" % lineno)
            records.append(
                ManifestRecord(
                    clean_path=parts[0],
                    noise_path=parts[1],
                    noise_offset=int(parts[2]),
                    snr_db=float(parts[3]),
                    split=parts[4],
                    rng_seed=int(parts[5]),
                )
            )
    return records


def write_manifest(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(
                "%s\t%s\t%d\t%g\t%s\t%d\n"
                % (r.clean_path, r.noise_path, r.noise_offset, r.snr_db, r.split, r.rng_seed)
            )


class SynthesisError(RuntimeError):
    pass


@dataclass
class CorpusEntry:
    index: int
    split: str
    snr_db: float
    mixture_path: str
    clean_path: str
    labels_path: str


def _mix_record(record: ManifestRecord):
    clean = read_wav(record.clean_path)
    noise = read_wav(record.noise_path)
    if clean.sample_rate != noise.sample_rate:
        raise ValueError("sample rate mismatch")
    if len(noise) < len(clean):
        raise ValueError("noise shorter than speech")
    if record.noise_offset >= 0:
        offset = record.noise_offset
        if offset + len(clean) > len(noise):
            raise ValueError("noise_offset out of range")
    else:
        rng = np.random.default_rng(record.rng_seed)
        offset = int(rng.integers(0, len(noise) - len(clean) + 1))
    segment = noise.samples[offset : offset + len(clean)]
    alpha = scale_for_snr(clean.samples, segment, record.snr_db)
    scaled_noise = alpha * segment
    mixture = clean.samples + scaled_noise
    # common rescale keeps the mixture inside 16-bit range without
    # changing any power ratio
    peak = float(np.max(np.abs(mixture)))
    scale = 1.0 / peak if peak > 1.0 else 1.0
    return (
        Waveform(mixture * scale, clean.sample_rate),
        Waveform(clean.samples * scale, clean.sample_rate),
        Waveform(scaled_noise * scale, clean.sample_rate),
        scale,
    )


def _write_labels(path, vad: LabelSeq, ibm: LabelSeq, meta):
    blocks = [Block(vad.data[None, :]), Block(ibm.data)]
    write_container(path, blocks, dict(meta, kind="labels", blocks="vad,ibm"))


def read_labels(path):
    """Returns (vad LabelSeq, ibm LabelSeq, meta)."""
    meta, blocks = read_container(path)
    if meta.get("kind") != "labels":
        raise ValueError("%s is not a label container" % path)
    vad = LabelSeq(kind="VAD", data=blocks[0].weights[0].astype(np.float64))
    ibm = LabelSeq(kind="IBM", data=blocks[1].weights.astype(np.float64))
    return vad, ibm, meta


def synthesize_dataset(records, out_dir, n_fft=1024, hop=256):
    """Materialize manifest records into mixtures, references and labels.

    Fully deterministic given the manifest.  Returns the corpus entries,
    which are also written to <out_dir>/index.tsv.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, record in enumerate(records):
        try:
            mixture, clean, noise, scale = _mix_record(record)
            clean_spec = stft(clean, n_fft=n_fft, hop=hop)
            noise_spec = stft(noise, n_fft=n_fft, hop=hop)
            vad = vad_labels(clean_spec.power())
            ibm = ibm_labels(clean_spec.power(), noise_spec.power())

            stem = os.path.join(out_dir, "utt%05d" % i)
            write_wav(stem + "_mix.wav", mixture)
            write_wav(stem + "_clean.wav", clean)
            _write_labels(
                stem + "_labels.gv",
                vad,
                ibm,
                {
                    "n_fft": n_fft,
                    "hop": hop,
                    "snr_db": "%g" % record.snr_db,
                    "scale": repr(scale),
                },
            )
            entries.append(
                CorpusEntry(
                    index=i,
                    split=record.split,
                    snr_db=record.snr_db,
                    mixture_path=stem + "_mix.wav",
                    clean_path=stem + "_clean.wav",
                    labels_path=stem + "_labels.gv",
                )
            )
        except Exception as exc:
            raise SynthesisError("record %d: %s" % (i, exc)) from exc

    with open(os.path.join(out_dir, "index.tsv"), "w") as f:
        for e in entries:
            f.write(
                "%d\t%s\t%g\t%s\t%s\t%s\n"
                % (e.index, e.split, e.snr_db, e.mixture_path, e.clean_path, e.labels_path)
            )
    return entries


def load_index(out_dir):
    entries = []
    with open(os.path.join(out_dir, "index.tsv")) as f:
        for line in f:
            parts = line.rstrip("\n").split("\t")
            entries.append(
                CorpusEntry(
                    index=int(parts[0]),
                    split=parts[1],
                    snr_db=float(parts[2]),
                    mixture_path=parts[3],
                    clean_path=parts[4],
                    labels_path=parts[5],
                )
            )
    return entries


class Standardizer:
    """Frozen per-bin z-score of log(power + eps) features."""

    def __init__(self, mean, std, clamped=None):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if np.any(self.std <= 0):
            raise ValueError("standardizer std must be positive")
        self.clamped = (
            np.zeros_like(self.mean, dtype=bool) if clamped is None else clamped
        )

    def apply(self, power):
        feats = np.log(np.asarray(power, dtype=np.float64) + LOG_EPS)
        return (feats - self.mean) / self.std

    def save(self, path):
        blocks = [Block(self.mean[None, :]), Block(self.std[None, :])]
        write_container(path, blocks, {"kind": "standardizer", "blocks": "mean,std"})

    @classmethod
    def load(cls, path):
        meta, blocks = read_container(path)
        if meta.get("kind") != "standardizer":
            raise ValueError("%s is not a standardizer container" % path)
        mean = blocks[0].weights[0].astype(np.float64)
        std = blocks[1].weights[0].astype(np.float64)
        return cls(mean, std, clamped=std <= 1e-6)


def fit_standardizer(powers) -> Standardizer:
    """Fit per-bin statistics on training power spectra (list or (N, F))."""
    if isinstance(powers, (list, tuple)):
        if not powers:
            raise ValueError("empty training set")
        powers = np.vstack(powers)
    if powers.size == 0:
        raise ValueError("empty training set")
    feats = np.log(np.asarray(powers, dtype=np.float64) + LOG_EPS)
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    clamped = std < 1e-6
    if np.any(clamped):
        warnings.warn(
            "%d constant feature bins; std clamped to 1e-6" % int(clamped.sum())
        )
        std = np.where(clamped, 1e-6, std)
    return Standardizer(mean, std, clamped=clamped)


def collect_frames(entries, n_fft=1024, hop=256, want="clean_power"):
    """Stack per-frame features over corpus entries.

    want: clean_power | mix_power | magnitudes (returns (mix_mag, clean_mag))
    """
    feats, extra = [], []
    for e in entries:
        if want == "clean_power":
            spec = stft(read_wav(e.clean_path), n_fft=n_fft, hop=hop)
            feats.append(spec.power())
        elif want == "mix_power":
            spec = stft(read_wav(e.mixture_path), n_fft=n_fft, hop=hop)
            feats.append(spec.power())
        elif want == "magnitudes":
            mix = stft(read_wav(e.mixture_path), n_fft=n_fft, hop=hop)
            clean = stft(read_wav(e.clean_path), n_fft=n_fft, hop=hop)
            feats.append(mix.magnitude())
            extra.append(clean.magnitude())
        else:
            raise ValueError("unknown feature request %r" % want)
    if want == "magnitudes":
        return np.vstack(feats), np.vstack(extra)
    return np.vstack(feats)


def collect_labels(entries, kind):
    """Stack stored ground-truth labels (frames must align with collect_frames)."""
    rows = []
    for e in entries:
        vad, ibm, _ = read_labels(e.labels_path)
        rows.append(vad.data[:, None] if kind == "VAD" else ibm.data)
    return np.vstack(rows)
