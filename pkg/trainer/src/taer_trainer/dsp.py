"""Analysis front end and ERB bank, matching the engine's conventions:
20 ms periodic square-root Hann window, 50% overlap, 320-point FFT,
161 bins; ERB filters triangular on the Glasberg-Moore rate scale with
centers from 0 Hz to Nyquist inclusive, rows L1-normalized forward and
per-bin renormalized transpose inverse."""

from __future__ import annotations

import numpy as np
import torch

SAMPLE_RATE = 16000
WIN_LEN = 320
HOP = 160
NUM_BINS = 161


def sqrt_hann() -> torch.Tensor:
    n = torch.arange(WIN_LEN, dtype=torch.float64)
    return torch.sqrt(0.5 - 0.5 * torch.cos(2.0 * torch.pi * n / WIN_LEN))


def stft(x: torch.Tensor) -> torch.Tensor:
    """(B, n) real -> (B, T, F) complex; frame t = samples [t*hop, t*hop+win)."""
    window = sqrt_hann().to(x.dtype)
    spec = torch.stft(x, n_fft=WIN_LEN, hop_length=HOP, win_length=WIN_LEN,
                      window=window, center=False, return_complex=True)
    return spec.transpose(1, 2)  # (B, F, T) -> (B, T, F)


def istft(spec: np.ndarray) -> np.ndarray:
    """Overlap-add synthesis of a (T, F) complex spectrogram (numpy,
    metric/prediction use only)."""
    window = sqrt_hann().numpy()
    frames = np.fft.irfft(spec, n=WIN_LEN, axis=1) * window[None, :]
    out = np.zeros((spec.shape[0] - 1) * HOP + WIN_LEN)
    for t in range(spec.shape[0]):
        out[t * HOP : t * HOP + WIN_LEN] += frames[t]
    return out


def hz_to_erb_rate(f):
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=np.float64))


def erb_matrices(num_bands: int = 32, num_bins: int = NUM_BINS,
                 sample_rate: int = SAMPLE_RATE):
    """Forward (bands, bins) and inverse (bins, bands) matrices."""
    nyquist = sample_rate / 2.0
    bin_rate = hz_to_erb_rate(np.arange(num_bins) * (nyquist / (num_bins - 1)))
    centers = np.linspace(hz_to_erb_rate(0.0), hz_to_erb_rate(nyquist), num_bands)
    spacing = centers[1] - centers[0]
    weights = np.clip(1.0 - np.abs(bin_rate[None, :] - centers[:, None]) / spacing,
                      0.0, 1.0)
    forward = weights / weights.sum(axis=1, keepdims=True)
    inverse = (weights / weights.sum(axis=0, keepdims=True)).T
    return forward, inverse
