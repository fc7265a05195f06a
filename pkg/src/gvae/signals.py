"""Time-frequency conversion and SNR-controlled mixing.

All spectrograms are one-sided STFTs of mono signals, stored as complex
matrices of shape (n_frames, n_bins) with n_bins = n_fft // 2 + 1.
Analysis uses a periodic Hann window, frames starting at offsets
0, hop, 2*hop, ... with the tail zero-padded so every sample is covered.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["Waveform", "Spectrogram", "stft", "istft", "mix_at_snr"]


@dataclass
class Waveform:
    """Mono time-domain signal with amplitudes nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """One-sided complex STFT, shape (n_frames, n_bins)."""

    data: np.ndarray
    n_fft: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("spectrogram must be a non-empty 2-D matrix")
        if self.data.shape[1] != self.n_fft // 2 + 1:
            raise ValueError(
                "bin count %d inconsistent with n_fft=%d"
                % (self.data.shape[1], self.n_fft)
            )

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def n_bins(self):
        return self.data.shape[1]

    def power(self) -> np.ndarray:
        """Per-bin power |x|^2, shape (n_frames, n_bins)."""
        return np.abs(self.data) ** 2

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)


def hann_periodic(n_fft: int) -> np.ndarray:
    """Periodic Hann window of length n_fft."""
    m = np.arange(n_fft)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * m / n_fft)


def frame_count(n_samples: int, n_fft: int, hop: int) -> int:
    """Number of analysis frames covering every input sample."""
    return int(np.ceil(max(n_samples - n_fft, 0) / hop)) + 1


def stft(w: Waveform, n_fft: int = 1024, hop: int = 256) -> Spectrogram:
    """Short-time Fourier transform with a periodic Hann window.

    Frames are taken at offsets 0, hop, 2*hop, ...; the signal tail is
    zero-padded so the final partial frame is included.  With the default
    1024/256 at 16 kHz this gives a 64 ms window, 16 ms frame period and
    513 frequency bins.

    Raises ValueError for signals shorter than one window or containing
    non-finite samples.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    if len(x) < n_fft:
        raise ValueError("signal too short: %d samples < n_fft=%d" % (len(x), n_fft))
    if n_fft % hop != 0:
        raise ValueError("hop must divide n_fft")

    n = frame_count(len(x), n_fft, hop)
    padded = np.zeros((n - 1) * hop + n_fft)
    padded[: len(x)] = x
    offsets = np.arange(n) * hop
    frames = padded[offsets[:, None] + np.arange(n_fft)[None, :]]
    frames = frames * hann_periodic(n_fft)[None, :]
    data = np.fft.rfft(frames, n=n_fft, axis=1)
    return Spectrogram(data=data, n_fft=n_fft, hop=hop, sample_rate=w.sample_rate)


def istft(s: Spectrogram, length: int | None = None) -> Waveform:
    """Inverse STFT by weighted overlap-add with the analysis Hann window.

    Reconstruction is exact (up to rounding) everywhere the squared-window
    overlap sum is positive, which for Hann excludes only sample 0.  If
    `length` is given the output is truncated to that many samples.
    """
    if s.hop <= 0 or s.n_fft % s.hop != 0:
        raise ValueError("hop=%d inconsistent with n_fft=%d" % (s.hop, s.n_fft))
    if s.data.shape[1] != s.n_fft // 2 + 1:
        raise ValueError("spectrogram bin count inconsistent with n_fft metadata")

    window = hann_periodic(s.n_fft)
    frames = np.fft.irfft(s.data, n=s.n_fft, axis=1) * window[None, :]
    total = (s.n_frames - 1) * s.hop + s.n_fft
    out = np.zeros(total)
    denom = np.zeros(total)
    wsq = window**2
    for i in range(s.n_frames):
        lo = i * s.hop
        out[lo : lo + s.n_fft] += frames[i]
        denom[lo : lo + s.n_fft] += wsq
    out /= np.maximum(denom, 1e-12)
    if length is not None:
        out = out[:length]
    return Waveform(samples=out, sample_rate=s.sample_rate)


def mix_at_snr(
    speech: Waveform, noise: Waveform, snr_db: float, rng_seed: int = 0
) -> tuple[Waveform, Waveform]:
    """Mix speech with a random noise segment scaled to a target SNR.

    A contiguous noise segment of speech length is drawn using rng_seed,
    then scaled by alpha = sqrt(P_s / (P_b * 10^(snr_db/10))) where P_s and
    P_b are mean squared amplitudes over the full utterance.  Returns
    (mixture, scaled_noise) with mixture = speech + scaled_noise exactly.
    """
    if speech.sample_rate != noise.sample_rate:
        raise ValueError("sample rate mismatch")
    if len(noise) < len(speech):
        raise ValueError("noise shorter than speech")
    p_s = float(np.mean(speech.samples**2))
    if p_s == 0.0:
        raise ValueError("silent speech")

    rng = np.random.default_rng(rng_seed)
    offset = int(rng.integers(0, len(noise) - len(speech) + 1))
    segment = noise.samples[offset : offset + len(speech)]
    p_b = float(np.mean(segment**2))
    if p_b == 0.0:
        raise ValueError("degenerate noise")

    alpha = np.sqrt(p_s / (p_b * 10.0 ** (snr_db / 10.0)))
    scaled = Waveform(samples=alpha * segment, sample_rate=speech.sample_rate)
    mixture = Waveform(
        samples=speech.samples + scaled.samples, sample_rate=speech.sample_rate
    )
    return mixture, scaled


def scale_for_snr(speech: np.ndarray, segment: np.ndarray, snr_db: float) -> float:
    """Gain applied to `segment` so that speech/segment power ratio hits snr_db."""
    p_s = float(np.mean(np.asarray(speech) ** 2))
    p_b = float(np.mean(np.asarray(segment) ** 2))
    if p_s == 0.0:
        raise ValueError("silent speech")
    if p_b == 0.0:
        raise ValueError("degenerate noise")
    return float(np.sqrt(p_s / (p_b * 10.0 ** (snr_db / 10.0))))
