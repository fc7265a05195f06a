"""Ground-truth frame labels: voice activity and ideal binary masks."""

from dataclasses import dataclass

import numpy as np

__all__ = ["LabelSeq", "vad_labels", "ibm_labels"]

VAD = "VAD"
IBM = "IBM"


@dataclass
class LabelSeq:
    """Binary labels per frame (VAD, shape (N,)) or per bin (IBM, shape (N, F))."""

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in (VAD, IBM):
            raise ValueError("kind must be VAD or IBM")
        self.data = np.asarray(self.data, dtype=np.float64)
        expected_ndim = 1 if self.kind == VAD else 2
        if self.data.ndim != expected_ndim:
            raise ValueError("%s labels must be %d-D" % (self.kind, expected_ndim))
        if not np.all((self.data == 0.0) | (self.data == 1.0)):
            raise ValueError("labels must be binary")

    @property
    def n_frames(self):
        return self.data.shape[0]


def vad_labels(clean_power: np.ndarray, floor_db: float = -40.0) -> LabelSeq:
    """Frame-level speech activity from clean speech power.

    A frame is active iff its summed power is at least
    max_frame_power * 10^(floor_db/10).
    """
    if floor_db >= 0:
        raise ValueError("floor_db must be negative")
    frame_power = np.sum(np.asarray(clean_power, dtype=np.float64), axis=1)
    peak = frame_power.max() if frame_power.size else 0.0
    if peak <= 0.0:
        raise ValueError("silent utterance")
    threshold = peak * 10.0 ** (floor_db / 10.0)
    return LabelSeq(kind=VAD, data=(frame_power >= threshold).astype(np.float64))


def ibm_labels(clean_power: np.ndarray, noise_power: np.ndarray) -> LabelSeq:
    """Per-bin speech dominance: 1 iff clean power exceeds noise power.

    Ties count as noise, so an exactly equal bin is labeled 0.
    """
    clean_power = np.asarray(clean_power, dtype=np.float64)
    noise_power = np.asarray(noise_power, dtype=np.float64)
    if clean_power.shape != noise_power.shape:
        raise ValueError("shape mismatch between clean and noise power")
    return LabelSeq(kind=IBM, data=(clean_power > noise_power).astype(np.float64))
