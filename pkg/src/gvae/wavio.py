"""Mono 16-bit PCM WAV file reading and writing.

Only RIFF files with 16-bit signed little-endian PCM and a single channel
are accepted.  No resampling is performed; the stored sample rate is
passed through to the caller.
"""

import os
import wave

import numpy as np

from .signals import Waveform

__all__ = ["read_wav", "write_wav", "WavEncodingError", "WavChannelsError"]

_FULL_SCALE = 32768.0


class WavEncodingError(ValueError):
    """File is not 16-bit PCM (or not a parseable WAV at all)."""


class WavChannelsError(ValueError):
    """File has more than one channel."""


def read_wav(path) -> Waveform:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with wave.open(str(path), "rb") as f:
            n_channels = f.getnchannels()
            sampwidth = f.getsampwidth()
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except wave.Error as exc:
        raise WavEncodingError("unsupported WAV encoding: %s" % exc) from exc
    if n_channels != 1:
        raise WavChannelsError("expected mono, got %d channels" % n_channels)
    if sampwidth != 2:
        raise WavEncodingError("expected 16-bit PCM, got %d-byte samples" % sampwidth)
    ints = np.frombuffer(raw, dtype="<i2")
    return Waveform(samples=ints.astype(np.float64) / _FULL_SCALE, sample_rate=rate)


def write_wav(path, w: Waveform) -> None:
    """Write as 16-bit PCM, clipping amplitudes to the representable range."""
    scaled = np.round(np.asarray(w.samples, dtype=np.float64) * _FULL_SCALE)
    ints = np.clip(scaled, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(w.sample_rate))
        f.writeframes(ints.tobytes())
