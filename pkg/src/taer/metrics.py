"""Noisy-mixture synthesis at controlled SNR and SI-SNR scoring."""

from __future__ import annotations

import csv

import numpy as np

SI_SNR_CAP_DB = 120.0


class MetricError(ValueError):
    """Raised for unusable signals (zero energy, length mismatch)."""


def mix(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """clean + alpha*noise with alpha chosen so the clean-to-scaled-noise
    energy ratio is exactly snr_db; noise is looped or truncated to the
    clean length, and only the noise is scaled."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    n = clean.shape[-1]
    if noise.shape[-1] < n:
        reps = int(np.ceil(n / noise.shape[-1]))
        noise = np.tile(noise, reps)
    noise = noise[..., :n]
    e_clean = float(np.sum(clean * clean))
    e_noise = float(np.sum(noise * noise))
    if e_clean <= 0.0:
        raise MetricError("clean source has zero energy")
    if e_noise <= 0.0:
        raise MetricError("noise source has zero energy")
    alpha = np.sqrt(e_clean / (e_noise * 10.0 ** (snr_db / 10.0)))
    return clean + alpha * noise


def si_snr(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Scale-invariant SNR in dB: both signals are zero-meaned, the
    estimate is projected onto the reference, and the target-to-residual
    energy ratio is returned, capped at +/-120 dB."""
    e = np.asarray(estimate, dtype=np.float64)
    s = np.asarray(reference, dtype=np.float64)
    if e.shape != s.shape:
        raise MetricError(f"length mismatch: {e.shape} vs {s.shape}")
    e = e - e.mean()
    s = s - s.mean()
    ref_energy = float(np.dot(s, s))
    if ref_energy <= 0.0:
        raise MetricError("reference has zero energy")
    target = (np.dot(e, s) / ref_energy) * s
    noise = e - target
    num = float(np.dot(target, target))
    den = float(np.dot(noise, noise))
    if den <= 0.0 or num / den > 10.0 ** (SI_SNR_CAP_DB / 10.0):
        return SI_SNR_CAP_DB
    if num <= 0.0 or num / den < 10.0 ** (-SI_SNR_CAP_DB / 10.0):
        return -SI_SNR_CAP_DB
    return float(10.0 * np.log10(num / den))


def write_score_report(path, rows: list[dict]) -> None:
    """CSV score report: utterance, snr_in, si_snr_in, si_snr_out."""
    fields = ["utterance", "snr_in", "si_snr_in", "si_snr_out"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})
