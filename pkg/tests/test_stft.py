"""Analysis/synthesis: window closed forms, COLA, round trip, causality."""

import numpy as np
import pytest

from taer.stft import (
    ConfigError, OverlapAddSynthesizer, StftConfig, StreamingFramer,
    istft, make_window, num_frames, stft,
)

CFG = StftConfig()


class TestWindow:
    def test_endpoints_and_center(self):
        w = make_window(CFG)
        assert w[0] == 0.0
        assert w[160] == pytest.approx(1.0, abs=1e-15)
        assert np.all((w >= 0.0) & (w <= 1.0))

    def test_len4_closed_form(self):
        cfg = StftConfig(sample_rate_hz=200, win_len=4, hop=2, fft_size=4, num_bins=3)
        w = make_window(cfg)
        np.testing.assert_allclose(w, [0.0, np.sqrt(0.5), 1.0, np.sqrt(0.5)], atol=1e-15)

    def test_cola_interior(self):
        """Analysis*synthesis windows at 50% overlap sum to 1 on every
        interior sample (checked over three overlapped shifts)."""
        w2 = make_window(CFG) ** 2
        acc = np.zeros(CFG.win_len + 2 * CFG.hop)
        for k in range(3):
            acc[k * CFG.hop : k * CFG.hop + CFG.win_len] += w2
        interior = acc[CFG.hop : -CFG.hop]
        np.testing.assert_allclose(interior, 1.0, atol=1e-12)

    def test_invalid_win_len(self):
        with pytest.raises(ConfigError):
            StftConfig(sample_rate_hz=150, win_len=3, hop=1, fft_size=3, num_bins=2)


class TestStft:
    def test_dc_response_is_window_transform(self):
        """A constant input reduces each frame to the analysis window, so
        every frame's spectrum equals the window transform: bin 0 carries
        the bulk of the energy and everything else is window leakage."""
        spec = stft(np.ones(1600), CFG)
        ref = np.fft.rfft(make_window(CFG), n=CFG.fft_size)
        assert np.max(np.abs(spec - ref[None, :])) < 1e-10
        mags = np.abs(spec[0])
        assert np.argmax(mags) == 0
        assert mags[0] ** 2 > 0.85 * (mags ** 2).sum()
        assert np.all(mags[1:] < 0.34 * mags[0])

    def test_1khz_tone_hits_bin_20(self):
        n = np.arange(16000)
        tone = np.sin(2 * np.pi * 1000.0 * n / 16000.0)
        spec = stft(tone, CFG)
        # skip the cold-start frame: its window is only partially filled
        assert np.all(np.argmax(np.abs(spec[1:]), axis=1) == 20)

    def test_zero_signal(self):
        assert np.all(stft(np.zeros(1000), CFG) == 0)

    def test_too_short_signal_names_minimum(self):
        with pytest.raises(ConfigError, match="320"):
            stft(np.zeros(200), CFG)

    def test_linearity(self, rng):
        x = rng.normal(size=2000)
        y = rng.normal(size=2000)
        a, b = 1.7, -0.4
        lhs = stft(a * x + b * y, CFG)
        rhs = a * stft(x, CFG) + b * stft(y, CFG)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_frame_causality(self, rng):
        """Frame t depends only on samples below t*hop + win_len."""
        x = rng.normal(size=3200)
        base = stft(x, CFG)
        for t in (0, 3, 10):
            y = x.copy()
            y[t * CFG.hop + CFG.win_len] += 1.0  # first sample past frame t
            changed = np.abs(stft(y, CFG) - base).max(axis=1) > 0
            assert not changed[: t + 1].any()
            assert changed[t + 1 : t + 2].any()


class TestIstft:
    def test_round_trip_white_noise(self, rng):
        x = rng.normal(size=16000)
        y = istft(stft(x, CFG), CFG)
        inner = slice(CFG.win_len - CFG.hop, y.shape[0] - (CFG.win_len - CFG.hop))
        err = np.linalg.norm(y[inner] - x[inner]) / np.linalg.norm(x[inner])
        assert err <= 1e-6

    def test_zero_spectrogram(self):
        assert np.all(istft(np.zeros((12, 161), dtype=complex), CFG) == 0)

    def test_linearity(self, rng):
        a = rng.normal(size=(9, 161)) + 1j * rng.normal(size=(9, 161))
        b = rng.normal(size=(9, 161)) + 1j * rng.normal(size=(9, 161))
        lhs = istft(a + b, CFG)
        rhs = istft(a, CFG) + istft(b, CFG)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_bin_count_mismatch(self):
        with pytest.raises(ConfigError):
            istft(np.zeros((4, 100), dtype=complex), CFG)


class TestStreaming:
    def test_framer_matches_batch(self, rng):
        x = rng.normal(size=5000)
        framer = StreamingFramer(CFG)
        got = []
        for i in range(0, 5000, 37):  # awkward chunk size on purpose
            got.append(framer.push(x[i : i + 37]))
        got = np.concatenate([g for g in got if g.size], axis=0)
        ref = stft(x, CFG)
        assert got.shape == ref.shape
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_frame_emitted_at_exactly_one_window(self):
        framer = StreamingFramer(CFG)
        assert framer.push(np.zeros(CFG.win_len - 1)).shape[0] == 0
        assert framer.push(np.zeros(1)).shape[0] == 1

    def test_ola_synthesizer_matches_istft(self, rng):
        spec = rng.normal(size=(11, 161)) + 1j * rng.normal(size=(11, 161))
        ola = OverlapAddSynthesizer(CFG)
        chunks = [ola.push(frame) for frame in spec]
        got = np.concatenate(chunks)
        ref = istft(spec, CFG)
        np.testing.assert_allclose(got, ref[: got.shape[0]], atol=1e-12)

    def test_num_frames(self):
        assert num_frames(320, CFG) == 1
        assert num_frames(480, CFG) == 2
        assert num_frames(16000, CFG) == 99
