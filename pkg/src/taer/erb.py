"""Linear <-> ERB frequency compression.

Triangular filters with centers equally spaced on the ERB-rate scale
(Glasberg-Moore: erb(f) = 21.4*log10(1 + 0.00437 f)), the first center
at 0 Hz and the last at Nyquist, so every linear bin sits between two
centers and the un-normalized filter responses sum to one at every bin.
Rows of the forward matrix are L1-normalized; the inverse is the
transpose with each linear bin's band weights renormalized to sum to 1.
That makes expansion a linear interpolation of band values along the
ERB-rate axis and keeps reconstructed per-bin gains inside the convex
hull of the band gains (a pseudo-inverse could go negative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ErbError(ValueError):
    """Raised for invalid filterbank configurations or inputs."""


def hz_to_erb_rate(freq_hz):
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(freq_hz, dtype=np.float64))


def erb_rate_to_hz(rate):
    return (np.power(10.0, np.asarray(rate, dtype=np.float64) / 21.4) - 1.0) / 0.00437


@dataclass(frozen=True)
class ErbBank:
    matrix: np.ndarray          # (bands, bins), rows sum to 1
    inverse_matrix: np.ndarray  # (bins, bands), rows sum to 1

    @property
    def num_bands(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_bins(self) -> int:
        return self.matrix.shape[1]

    def to_erb(self, mag: np.ndarray) -> np.ndarray:
        """Compress nonnegative (..., bins) magnitudes to (..., bands)."""
        mag = np.asarray(mag, dtype=np.float64)
        if np.any(mag < 0):
            raise ErbError("to_erb expects nonnegative magnitudes")
        return mag @ self.matrix.T

    def to_linear(self, bands: np.ndarray) -> np.ndarray:
        """Expand nonnegative (..., bands) values to (..., bins)."""
        bands = np.asarray(bands, dtype=np.float64)
        if np.any(bands < 0):
            raise ErbError("to_linear expects nonnegative band values")
        return bands @ self.inverse_matrix.T


def build_erb_bank(num_bands: int = 32, num_bins: int = 161, sample_rate: int = 16000) -> ErbBank:
    if num_bands >= num_bins:
        raise ErbError(f"num_bands ({num_bands}) must be smaller than num_bins ({num_bins})")
    nyquist = sample_rate / 2.0
    bin_hz = np.arange(num_bins) * (nyquist / (num_bins - 1))
    bin_rate = hz_to_erb_rate(bin_hz)
    centers = np.linspace(hz_to_erb_rate(0.0), hz_to_erb_rate(nyquist), num_bands)
    spacing = centers[1] - centers[0]

    weights = np.zeros((num_bands, num_bins), dtype=np.float64)
    for b in range(num_bands):
        tri = 1.0 - np.abs(bin_rate - centers[b]) / spacing
        weights[b] = np.clip(tri, 0.0, 1.0)

    matrix = weights / weights.sum(axis=1, keepdims=True)
    col_sums = weights.sum(axis=0)
    if np.any(col_sums <= 0):
        raise ErbError("internal: some linear bin has no band coverage")
    inverse = (weights / col_sums[None, :]).T
    return ErbBank(matrix=matrix, inverse_matrix=inverse)
