import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal as sp_signal

from ismkit.errors import DataError
from ismkit.signal import (MultiChannelWaveform, Waveform, lowfreq_extract,
                           lowpass_sos, segment)


class TestWaveform:
    def test_basic(self):
        w = Waveform(np.zeros(10), 5000.0)
        assert len(w) == 10
        assert w.duration_s == pytest.approx(0.002)

    def test_rejects_nan(self):
        with pytest.raises(DataError):
            Waveform(np.array([0.0, np.nan]), 5000.0)

    def test_rejects_inf(self):
        with pytest.raises(DataError):
            Waveform(np.array([np.inf]), 5000.0)

    def test_rejects_bad_rate(self):
        with pytest.raises(DataError):
            Waveform(np.zeros(4), 0.0)

    def test_multichannel_requires_four(self):
        chans = tuple(Waveform(np.zeros(8), 5000.0) for _ in range(3))
        with pytest.raises(DataError):
            MultiChannelWaveform(chans)

    def test_multichannel_requires_equal_lengths(self):
        chans = (Waveform(np.zeros(8), 5000.0),) * 3 + (Waveform(np.zeros(9), 5000.0),)
        with pytest.raises(DataError):
            MultiChannelWaveform(chans)


class TestSegment:
    def test_one_second_at_5k(self):
        grid = segment(Waveform(np.zeros(5000), 5000.0))
        assert grid.segment_len_samples == 25
        assert grid.segment_count == 200

    def test_partial_tail_dropped(self):
        grid = segment(Waveform(np.zeros(5015), 5000.0))
        assert grid.segment_count == 200

    def test_48k(self):
        grid = segment(Waveform(np.zeros(48000), 48000.0))
        assert grid.segment_len_samples == 240

    def test_too_short(self):
        with pytest.raises(DataError):
            segment(Waveform(np.zeros(10), 5000.0))

    @given(n=st.integers(min_value=25, max_value=100000),
           rate=st.sampled_from([1000.0, 5000.0, 8000.0, 44100.0, 48000.0]))
    def test_grid_covers_signal(self, n, rate):
        seg_len = int(round(0.005 * rate))
        if n < seg_len:
            return
        grid = segment(n, sample_rate_hz=rate)
        assert grid.segment_count * grid.segment_len_samples <= n
        assert n < (grid.segment_count + 1) * grid.segment_len_samples


class TestLowfreqExtract:
    def test_dc_passes(self):
        w = Waveform(np.full(10000, 0.3), 5000.0)
        out = lowfreq_extract(w)
        assert abs(out.samples[-1] - 0.3) < 0.003  # within 1%

    def _steady_rms_ratio(self, freq):
        fs = 5000.0
        t = np.arange(int(2 * fs)) / fs
        x = np.sin(2 * np.pi * freq * t)
        y = lowfreq_extract(Waveform(x, fs)).samples
        half = len(t) // 2
        return np.sqrt(np.mean(y[half:] ** 2)) / np.sqrt(np.mean(x[half:] ** 2))

    def test_200hz_attenuated_20db(self):
        ratio = self._steady_rms_ratio(200.0)
        assert 20 * np.log10(ratio) <= -20.0
        # oracle: the designed filter's frequency response at 200 Hz
        sos = lowpass_sos(100.0, 5000.0)
        _, h = sp_signal.sosfreqz(sos, worN=[200.0], fs=5000.0)
        assert ratio == pytest.approx(abs(h[0]), rel=1e-3)

    def test_10hz_within_1db(self):
        ratio = self._steady_rms_ratio(10.0)
        assert abs(20 * np.log10(ratio)) <= 1.0
        sos = lowpass_sos(100.0, 5000.0)
        _, h = sp_signal.sosfreqz(sos, worN=[10.0], fs=5000.0)
        assert ratio == pytest.approx(abs(h[0]), rel=1e-3)

    def test_cutoff_at_nyquist_rejected(self):
        with pytest.raises(DataError):
            lowfreq_extract(Waveform(np.zeros(100), 5000.0), cutoff_hz=2500.0)

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-5, 5, allow_nan=False), b=st.floats(-5, 5, allow_nan=False),
           seed=st.integers(0, 2 ** 16))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(2000)
        y = rng.standard_normal(2000)
        fs = 5000.0
        fx = lowfreq_extract(Waveform(x, fs)).samples
        fy = lowfreq_extract(Waveform(y, fs)).samples
        fxy = lowfreq_extract(Waveform(a * x + b * y, fs)).samples
        combined = a * fx + b * fy
        scale = max(np.linalg.norm(combined), 1e-30)
        assert np.linalg.norm(fxy - combined) / scale < 1e-9

    def test_output_same_length_and_rate(self):
        w = Waveform(np.random.default_rng(0).standard_normal(1234), 8000.0)
        out = lowfreq_extract(w)
        assert len(out) == 1234
        assert out.sample_rate_hz == 8000.0
