"""Seeded synthetic corpus: harmonic voiced-like clips mixed with
spectrally shaped noise at a controlled SNR."""

from __future__ import annotations

import numpy as np

from .dsp import SAMPLE_RATE


def clean_clip(rng: np.random.Generator, seconds: float = 2.0) -> np.ndarray:
    """Harmonic tone complex with vibrato and a slow random envelope."""
    n = int(seconds * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(120.0, 280.0)
    vibrato = 1.0 + 0.008 * np.sin(2 * np.pi * rng.uniform(3.0, 7.0) * t
                                   + rng.uniform(0, 2 * np.pi))
    phase0 = 2 * np.pi * f0 * np.cumsum(vibrato) / SAMPLE_RATE
    sig = np.zeros(n)
    for k in range(1, int(rng.integers(4, 9))):
        sig += (rng.uniform(0.4, 1.0) / k) * np.sin(k * phase0
                                                    + rng.uniform(0, 2 * np.pi))
    knots = rng.uniform(0.25, 1.0, 9)
    env = np.interp(np.linspace(0, 8, n), np.arange(9), knots)
    sig *= env
    return 0.08 * sig / np.sqrt(np.mean(sig ** 2) + 1e-12)


def noise_clip(rng: np.random.Generator, seconds: float = 2.0) -> np.ndarray:
    """White noise through a random resonator bank: a smooth broadband
    floor plus a few sharp spectral peaks that can sit on the signal's
    partials."""
    n = int(seconds * SAMPLE_RATE)
    white = rng.normal(size=n)
    spec = np.fft.rfft(white)
    freqs = np.arange(spec.shape[0]) * (SAMPLE_RATE / n)
    knots = rng.uniform(-2.0, 2.0, 8)
    envelope = 10.0 ** (np.interp(np.linspace(0, 7, spec.shape[0]),
                                  np.arange(8), knots) / 2.0)
    for _ in range(int(rng.integers(2, 5))):
        center = rng.uniform(150.0, 3500.0)
        width = rng.uniform(30.0, 120.0)
        envelope += rng.uniform(8.0, 25.0) / (1.0 + ((freqs - center) / width) ** 2)
    shaped = np.fft.irfft(spec * envelope, n=n)
    return 0.08 * shaped / np.sqrt(np.mean(shaped ** 2) + 1e-12)


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    alpha = np.sqrt(np.sum(clean ** 2) / (np.sum(noise ** 2)
                                          * 10.0 ** (snr_db / 10.0)))
    return clean + alpha * noise


def make_pairs(n_clips: int, seconds: float, snr_lo: float, snr_hi: float,
               seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (noisy, clean) waveform arrays, each (n_clips, samples)."""
    rng = np.random.default_rng(seed)
    clean = np.stack([clean_clip(rng, seconds) for _ in range(n_clips)])
    noisy = np.empty_like(clean)
    for i in range(n_clips):
        snr = rng.uniform(snr_lo, snr_hi)
        noisy[i] = mix_at_snr(clean[i], noise_clip(rng, seconds), snr)
    return noisy, clean


def si_snr_db(estimate: np.ndarray, reference: np.ndarray) -> float:
    e = estimate - estimate.mean()
    s = reference - reference.mean()
    target = (np.dot(e, s) / np.dot(s, s)) * s
    noise = e - target
    return float(10.0 * np.log10(np.dot(target, target)
                                 / max(np.dot(noise, noise), 1e-30)))
