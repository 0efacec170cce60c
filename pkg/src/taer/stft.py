"""Time-frequency analysis and synthesis.

Square-root Hann windowing at 50% overlap, so that analysis times
synthesis window overlap-adds to unity on every interior sample
(constant-overlap-add).  The stream starts cold: no reflection padding,
frame t covers samples ``[t*hop, t*hop + win_len)`` and is emittable as
soon as its last sample has arrived.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid analysis configurations."""


@dataclass(frozen=True)
class StftConfig:
    sample_rate_hz: int = 16000
    win_len: int = 320
    hop: int = 160
    fft_size: int = 320
    num_bins: int = 161

    def __post_init__(self) -> None:
        if self.win_len < 2 or self.win_len % 2 != 0:
            raise ConfigError(f"win_len must be even and >= 2, got {self.win_len}")
        if self.hop * 2 != self.win_len:
            raise ConfigError(f"hop must be win_len/2, got hop={self.hop} win_len={self.win_len}")
        if self.num_bins != self.fft_size // 2 + 1:
            raise ConfigError(f"num_bins must be fft_size/2+1, got {self.num_bins}")
        if self.win_len != int(round(0.020 * self.sample_rate_hz)):
            raise ConfigError(
                f"win_len must be 20 ms at {self.sample_rate_hz} Hz, got {self.win_len}"
            )


def make_window(config: StftConfig) -> np.ndarray:
    """Periodic square-root Hann window: w[n] = sqrt(0.5 - 0.5*cos(2*pi*n/N))."""
    n = np.arange(config.win_len, dtype=np.float64)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / config.win_len))


def num_frames(n_samples: int, config: StftConfig) -> int:
    if n_samples < config.win_len:
        raise ConfigError(
            f"signal too short: need at least win_len={config.win_len} samples, got {n_samples}"
        )
    return (n_samples - config.win_len) // config.hop + 1


def stft(signal: np.ndarray, config: StftConfig) -> np.ndarray:
    """Analyze a real signal into a (T, num_bins) complex spectrogram.

    Frame t covers samples [t*hop, t*hop + win_len); each frame is
    windowed and transformed with an unnormalized forward FFT.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ConfigError("stft expects a 1-D signal per channel")
    t_frames = num_frames(signal.shape[0], config)
    window = make_window(config)
    idx = np.arange(config.win_len)[None, :] + config.hop * np.arange(t_frames)[:, None]
    frames = signal[idx] * window[None, :]
    return np.fft.rfft(frames, n=config.fft_size, axis=1)


def istft(spec: np.ndarray, config: StftConfig) -> np.ndarray:
    """Overlap-add synthesis with the same square-root Hann window.

    Inverse FFT uses the 1/fft_size convention, so istft(stft(x))
    reproduces x exactly on interior samples (beyond the first and last
    win_len - hop samples, which taper from the cold start).
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != config.num_bins:
        raise ConfigError(
            f"expected (T, {config.num_bins}) spectrogram, got shape {spec.shape}"
        )
    t_frames = spec.shape[0]
    window = make_window(config)
    frames = np.fft.irfft(spec, n=config.fft_size, axis=1)[:, : config.win_len] * window[None, :]
    out = np.zeros((t_frames - 1) * config.hop + config.win_len, dtype=np.float64)
    for t in range(t_frames):
        out[t * config.hop : t * config.hop + config.win_len] += frames[t]
    return out


class StreamingFramer:
    """Per-stream sample buffer that yields analysis frames as they complete.

    Frame t is emitted immediately once sample t*hop + win_len - 1 has
    been pushed; no lookahead beyond one window.
    """

    def __init__(self, config: StftConfig):
        self.config = config
        self._window = make_window(config)
        self._buf = np.zeros(0, dtype=np.float64)
        self.frames_emitted = 0

    def reset(self) -> None:
        self._buf = np.zeros(0, dtype=np.float64)
        self.frames_emitted = 0

    def push(self, samples: np.ndarray) -> np.ndarray:
        """Append samples; return (n_new_frames, num_bins) complex frames."""
        cfg = self.config
        self._buf = np.concatenate([self._buf, np.asarray(samples, dtype=np.float64)])
        out = []
        while self._buf.shape[0] >= cfg.win_len:
            frame = self._buf[: cfg.win_len] * self._window
            out.append(np.fft.rfft(frame, n=cfg.fft_size))
            self._buf = self._buf[cfg.hop :]
            self.frames_emitted += 1
        if not out:
            return np.zeros((0, cfg.num_bins), dtype=np.complex128)
        return np.stack(out)


class OverlapAddSynthesizer:
    """Streaming synthesis: push one spectral frame, pop the hop-sized
    chunk of samples that has become final."""

    def __init__(self, config: StftConfig):
        self.config = config
        self._window = make_window(config)
        self._tail = np.zeros(config.win_len - config.hop, dtype=np.float64)

    def reset(self) -> None:
        self._tail = np.zeros(self.config.win_len - self.config.hop, dtype=np.float64)

    def push(self, frame: np.ndarray) -> np.ndarray:
        cfg = self.config
        chunk = np.fft.irfft(frame, n=cfg.fft_size)[: cfg.win_len] * self._window
        # 50% overlap: the first hop of this chunk completes the pending tail.
        ready = self._tail + chunk[: cfg.hop]
        self._tail = chunk[cfg.hop :].copy()
        return ready
