"""Evaluation metrics: SI-SDR, precision/recall/F1 and normal-approximation
confidence intervals."""

import numpy as np

from .labels import LabelSeq
from .signals import Waveform

__all__ = ["si_sdr", "f1", "confidence_interval", "SI_SDR_CAP_DB"]

# finite stand-in for a perfect reconstruction when tabulating results
SI_SDR_CAP_DB = 300.0


def si_sdr(est: Waveform, ref: Waveform) -> float:
    """Scale-invariant signal-to-distortion ratio in dB.

    The reference is rescaled by alpha = <est, ref> / <ref, ref>; the
    ratio is ||alpha ref||^2 over ||est - alpha ref||^2.  An exact match
    up to scale returns +inf (reports cap it at SI_SDR_CAP_DB).
    """
    e = np.asarray(est.samples if isinstance(est, Waveform) else est, dtype=np.float64)
    r = np.asarray(ref.samples if isinstance(ref, Waveform) else ref, dtype=np.float64)
    if e.shape != r.shape:
        raise ValueError("length mismatch")
    ref_energy = float(np.dot(r, r))
    if ref_energy == 0.0:
        raise ValueError("zero reference")
    alpha = float(np.dot(e, r)) / ref_energy
    if alpha == 0.0:
        raise ValueError("orthogonal estimate")
    target = alpha * r
    resid = e - target
    resid_energy = float(np.dot(resid, resid))
    if resid_energy == 0.0:
        return np.inf
    return 10.0 * np.log10(float(np.dot(target, target)) / resid_energy)


def f1(pred: LabelSeq, truth: LabelSeq):
    """(precision, recall, F1) over all elements; IBM labels are flattened.

    An undefined rate (no predicted or no actual positives) counts as 0
    and forces F1 to 0, except that two all-negative label sets agree
    perfectly and score F1 = 1.
    """
    if isinstance(pred, LabelSeq):
        if pred.kind != truth.kind:
            raise ValueError("label kinds differ")
        p, t = pred.data, truth.data
    else:
        p, t = np.asarray(pred), np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError("label shapes differ")
    p = p.ravel().astype(bool)
    t = t.ravel().astype(bool)
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    if tp + fp == 0 and tp + fn == 0:
        return 0.0, 0.0, 1.0  # both all-negative: perfect agreement
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    return precision, recall, 2.0 * precision * recall / (precision + recall)


def confidence_interval(values):
    """Mean and 95% half-width (1.96 * sd / sqrt(n), sample sd)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("need at least two values")
    mean = float(values.mean())
    half_width = float(1.96 * values.std(ddof=1) / np.sqrt(values.size))
    return mean, half_width
