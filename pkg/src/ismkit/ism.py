"""Buffered intensity analysis, four-channel fusion and 200 Hz AM resynthesis.

Analysis slices the signal into buffers, decomposes each buffer into
intrinsic mode functions, measures per-5 ms amplitude and frequency of every
mode, and sums the perceptual intensities of the resolvable components.
Content too slow to resolve in a 5 ms window is not lost: a causal <100 Hz
low-pass of the raw signal rides along and is added back verbatim at
synthesis time.

Synthesis inverts the intensity map at the carrier frequency segment by
segment and modulates a phase-continuous sinusoid, with a short linear
crossfade at each segment start so amplitude steps never click.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import psychophysics as psy
from .emd import EmdConfig, emd_decompose, _component_arrays
from .errors import DataError, FileFormatError
from .signal import (SEGMENT_MS, SegmentGrid, Waveform, lowfreq_extract, lowpass_sos,
                     segment)

CROSSFADE_FRACTION = 0.25


@dataclass(frozen=True)
class IsmConfig:
    carrier_hz: float = 200.0
    buffer_ms: float = 100.0
    lowfreq_cutoff_hz: float = 100.0
    crossfade: bool = True
    segment_ms: float = SEGMENT_MS
    emd: EmdConfig = field(default_factory=EmdConfig)

    def __post_init__(self):
        if self.carrier_hz <= 0 or self.buffer_ms <= 0 or self.lowfreq_cutoff_hz <= 0:
            raise DataError("carrier, buffer and cutoff must be positive")
        if self.segment_ms <= 0:
            raise DataError("segment_ms must be positive")
        ratio = self.buffer_ms / self.segment_ms
        if abs(ratio - round(ratio)) > 1e-9:
            raise DataError(
                f"buffer_ms ({self.buffer_ms}) must be an integer multiple of "
                f"segment_ms ({self.segment_ms})")

    @property
    def segments_per_buffer(self) -> int:
        return int(round(self.buffer_ms / self.segment_ms))


@dataclass(frozen=True)
class IntensityProfile:
    """Per-segment perceptual intensity series."""

    values: np.ndarray
    segment_duration_ms: float = SEGMENT_MS
    start_time_s: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise DataError("profile values must be 1-D")
        if values.size and (not np.all(np.isfinite(values)) or np.any(values < 0)):
            raise DataError("profile values must be finite and non-negative")
        if self.segment_duration_ms <= 0:
            raise DataError("segment duration must be positive")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def midpoints_s(self) -> np.ndarray:
        dur = self.segment_duration_ms / 1000.0
        return self.start_time_s + (np.arange(self.values.size) + 0.5) * dur


@dataclass(frozen=True)
class AnalysisResult:
    profile: IntensityProfile
    lowfreq: Waveform


def _buffer_intensities(chunk: np.ndarray, offset: int, n_seg: int, seg_len: int,
                        seg_duration_s: float, rate: float,
                        model: psy.PsychoModel, cfg: IsmConfig) -> np.ndarray:
    """Total per-segment intensity of one buffer (chunk includes offset context)."""
    imf_set = emd_decompose(Waveform(chunk, rate), cfg.emd)
    buf_grid = SegmentGrid(seg_len, n_seg, seg_duration_s)
    total = np.zeros(n_seg, dtype=np.float64)
    for imf in imf_set.imfs:
        amp, freq, resolvable = _component_arrays(imf.samples, buf_grid, offset)
        if not np.any(resolvable):
            continue
        a = amp[resolvable]
        log_f = np.log(freq[resolvable])
        a_t = np.exp(np.interp(log_f, model._log_f_thr, model._log_a_thr))
        alpha = np.interp(log_f, model._log_f_exp, model._alpha)
        total[resolvable] += (a / a_t) ** (2.0 * alpha)
    return total


def analyze(waveform: Waveform, model: psy.PsychoModel | None = None,
            config: IsmConfig | None = None) -> AnalysisResult:
    """Compute the per-segment intensity profile and low-frequency channel.

    Buffers are processed independently, in order, each carrying one sample
    of incoming context so zero crossings that straddle a buffer boundary are
    attributed to the segment they complete in. A trailing partial buffer is
    still analyzed as long as it holds at least one full segment, so the
    profile covers every full segment of the input.
    """
    model = model or psy.DEFAULT_MODEL
    cfg = config or IsmConfig()
    rate = waveform.sample_rate_hz

    grid = segment(waveform, cfg.segment_ms)
    seg_len = grid.segment_len_samples
    segs_per_buffer = cfg.segments_per_buffer
    if grid.segment_count < segs_per_buffer:
        raise DataError(
            f"input of {len(waveform)} samples is shorter than one "
            f"{cfg.buffer_ms} ms buffer")

    values = np.zeros(grid.segment_count, dtype=np.float64)
    pos = 0
    while pos < grid.segment_count:
        n_seg = min(segs_per_buffer, grid.segment_count - pos)
        offset = 1 if pos > 0 else 0
        chunk = waveform.samples[pos * seg_len - offset:(pos + n_seg) * seg_len]
        values[pos:pos + n_seg] = _buffer_intensities(
            chunk, offset, n_seg, seg_len, grid.segment_duration_s, rate, model, cfg)
        pos += n_seg

    profile = IntensityProfile(values, cfg.segment_ms, start_time_s=0.0)
    lowfreq = lowfreq_extract(waveform, cfg.lowfreq_cutoff_hz)
    return AnalysisResult(profile=profile, lowfreq=lowfreq)


class StreamingAnalyzer:
    """Incremental analysis for a live capture loop.

    One producer feeds sample chunks of any size; complete 100 ms buffers are
    analyzed as they fill and their intensity segments returned. The
    low-frequency channel continues the causal filter state across feeds, so
    the concatenated outputs are identical to a single batch analyze() over
    the same samples. Call finish() to flush any trailing full segments.
    """

    def __init__(self, sample_rate_hz: float, model: psy.PsychoModel | None = None,
                 config: IsmConfig | None = None):
        from scipy.signal import sosfilt_zi

        self._model = model or psy.DEFAULT_MODEL
        self._cfg = config or IsmConfig()
        self._rate = float(sample_rate_hz)
        self._seg_len = int(round(self._cfg.segment_ms / 1000.0 * self._rate))
        if self._seg_len < 2:
            raise DataError("segment shorter than 2 samples at this rate")
        self._buf_segments = self._cfg.segments_per_buffer
        self._seg_duration_s = self._cfg.segment_ms / 1000.0
        self._sos = lowpass_sos(self._cfg.lowfreq_cutoff_hz, self._rate)
        self._zi = sosfilt_zi(self._sos) * 0.0  # zero initial conditions
        self._tail = np.empty(0, dtype=np.float64)
        self._context = 0  # 1 once any buffer has been consumed
        self._segments_done = 0
        self._finished = False

    def feed(self, samples: np.ndarray) -> tuple[np.ndarray, Waveform]:
        """Consume a chunk; returns (new intensity values, low-passed chunk)."""
        from scipy.signal import sosfilt

        if self._finished:
            raise DataError("analyzer already finished")
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DataError("feed expects a 1-D sample chunk")
        if samples.size == 0:
            return np.empty(0), Waveform(samples, self._rate)
        low, self._zi = sosfilt(self._sos, samples, zi=self._zi)
        self._tail = np.concatenate([self._tail, samples])

        out: list[np.ndarray] = []
        buf_len = self._buf_segments * self._seg_len
        while self._tail.size - self._context >= buf_len:
            chunk = self._tail[:self._context + buf_len]
            out.append(_buffer_intensities(
                chunk, self._context, self._buf_segments, self._seg_len,
                self._seg_duration_s, self._rate, self._model, self._cfg))
            # keep the last consumed sample as context for the next buffer
            self._tail = self._tail[self._context + buf_len - 1:]
            self._context = 1
            self._segments_done += self._buf_segments
        values = np.concatenate(out) if out else np.empty(0)
        return values, Waveform(low, self._rate)

    def finish(self) -> np.ndarray:
        """Flush trailing full segments of a final partial buffer."""
        if self._finished:
            return np.empty(0)
        self._finished = True
        n_seg = (self._tail.size - self._context) // self._seg_len
        if n_seg < 1:
            return np.empty(0)
        chunk = self._tail[:self._context + n_seg * self._seg_len]
        values = _buffer_intensities(
            chunk, self._context, n_seg, self._seg_len,
            self._seg_duration_s, self._rate, self._model, self._cfg)
        self._segments_done += n_seg
        return values

    @property
    def segments_emitted(self) -> int:
        return self._segments_done


def fuse_channels(profiles: list[IntensityProfile] | tuple[IntensityProfile, ...]
                  ) -> IntensityProfile:
    """Element-wise arithmetic mean of per-channel profiles."""
    if not profiles:
        raise DataError("no profiles to fuse")
    first = profiles[0]
    for p in profiles[1:]:
        if len(p) != len(first):
            raise DataError(f"profile length mismatch: {len(p)} vs {len(first)}")
        if p.segment_duration_ms != first.segment_duration_ms:
            raise DataError("profiles disagree on segment duration")
    mean = np.mean([p.values for p in profiles], axis=0)
    return IntensityProfile(mean, first.segment_duration_ms, first.start_time_s)


def synthesize(profile: IntensityProfile, lowfreq: Waveform | None,
               model: psy.PsychoModel | None = None,
               config: IsmConfig | None = None,
               sample_rate_hz: float | None = None) -> Waveform:
    """Resynthesize an amplitude-modulated carrier with the profile's intensity.

    Per segment the carrier amplitude is the exact inverse of the intensity
    map at the carrier frequency. The carrier phase advances uniformly across
    segment boundaries, and with crossfade enabled the amplitude ramps
    linearly over the first quarter of each segment from the previous
    segment's amplitude (from silence for the first segment).
    """
    model = model or psy.DEFAULT_MODEL
    cfg = config or IsmConfig()
    if len(profile) == 0:
        raise DataError("cannot synthesize from an empty profile")
    if lowfreq is not None:
        rate = lowfreq.sample_rate_hz
    elif sample_rate_hz is not None:
        rate = float(sample_rate_hz)
    else:
        raise DataError("need lowfreq waveform or explicit sample_rate_hz")
    if cfg.carrier_hz >= rate / 2.0:
        raise DataError(f"carrier {cfg.carrier_hz} Hz at or above Nyquist ({rate / 2} Hz)")

    seg_len = int(round(profile.segment_duration_ms / 1000.0 * rate))
    if seg_len < 2:
        raise DataError("segment shorter than 2 samples at this rate")
    n_seg = len(profile)
    n = n_seg * seg_len

    amps = psy.amplitude_for_intensity(profile.values, cfg.carrier_hz, model)
    amps = np.atleast_1d(np.asarray(amps, dtype=np.float64))

    envelope = np.repeat(amps, seg_len).reshape(n_seg, seg_len)
    if cfg.crossfade:
        fade_len = max(1, int(round(CROSSFADE_FRACTION * seg_len)))
        prev = np.concatenate([[0.0], amps[:-1]])
        ramp = np.arange(1, fade_len + 1, dtype=np.float64) / fade_len
        envelope[:, :fade_len] = prev[:, None] + (amps - prev)[:, None] * ramp[None, :]
    envelope = envelope.reshape(n)

    phase = 2.0 * np.pi * cfg.carrier_hz * np.arange(n, dtype=np.float64) / rate
    out = envelope * np.sin(phase)
    if lowfreq is not None:
        if len(lowfreq) < n:
            raise DataError("low-frequency channel shorter than the synthesized span")
        out = out + lowfreq.samples[:n]
    return Waveform(out, rate)


def convert(waveform: Waveform, model: psy.PsychoModel | None = None,
            config: IsmConfig | None = None) -> Waveform:
    """analyze then synthesize: re-express a vibration on the configured carrier."""
    result = analyze(waveform, model, config)
    return synthesize(result.profile, result.lowfreq, model, config)


def save_profile_csv(profile: IntensityProfile, path) -> None:
    """Write `t_s,intensity` rows, one per segment midpoint."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "intensity"])
        for t, v in zip(profile.midpoints_s(), profile.values):
            writer.writerow([f"{t:.6f}", f"{v:.9g}"])


def load_profile_csv(path) -> IntensityProfile:
    """Read a profile CSV back; segment duration is inferred from row spacing."""
    times: list[float] = []
    values: list[float] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["t_s", "intensity"]:
            raise FileFormatError(f"{path}: expected header 't_s,intensity'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(float(row[0]))
                values.append(float(row[1]))
            except (ValueError, IndexError):
                raise FileFormatError(f"{path}:{lineno}: bad row {row!r}") from None
    if not values:
        raise FileFormatError(f"{path}: no intensity rows")
    if len(times) > 1:
        dur_ms = float(np.median(np.diff(times))) * 1000.0
    else:
        dur_ms = SEGMENT_MS
    start = times[0] - dur_ms / 2000.0
    return IntensityProfile(np.asarray(values), dur_ms, start_time_s=start)
