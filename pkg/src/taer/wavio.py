"""WAV file I/O: 16-bit PCM and 32-bit float, mono or multi-channel.

The engine runs at 16 kHz only; resampling is out of scope, so a file
at any other rate is rejected outright.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile


class WavError(ValueError):
    """Raised for unsupported or mismatched WAV files."""


def read_wav(path, expect_rate: int | None = 16000) -> tuple[int, np.ndarray]:
    """Read a WAV file; return (rate, samples) with samples shaped (channels, n).

    16-bit PCM is scaled to [-1, 1); 32-bit float is passed through.
    """
    rate, data = wavfile.read(path)
    if expect_rate is not None and rate != expect_rate:
        raise WavError(f"{path}: sample rate {rate} Hz, engine requires {expect_rate} Hz")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported sample format {data.dtype}; use int16 or float32")
    if x.ndim == 1:
        x = x[None, :]
    else:
        x = x.T  # scipy gives (n, channels)
    return rate, x


def write_wav(path, samples: np.ndarray, rate: int = 16000, pcm16: bool = False) -> None:
    """Write (channels, n) or (n,) samples as float32 (default) or 16-bit PCM."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 2:
        x = x[0] if x.shape[0] == 1 else x.T  # scipy wants (n, channels)
    if pcm16:
        clipped = np.clip(x, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, rate, (clipped * 32768.0).round().astype(np.int16))
    else:
        wavfile.write(path, rate, x.astype(np.float32))
