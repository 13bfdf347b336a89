"""Empirical Mode Decomposition and per-segment component estimation.

The decomposition follows the classic sifting recipe: cubic-spline envelopes
through the local extrema, subtract the envelope mean, repeat until the
normalized squared change between iterations drops below a threshold, then
peel the intrinsic mode function off and continue on the remainder. Envelope
end-swing is suppressed by mirroring a few extrema beyond each edge before
fitting the splines.

Everything here is deterministic: the same samples and config produce
bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs

from .errors import DataError
from .signal import SegmentGrid, Waveform

(_DGTSV,) = get_lapack_funcs(("gtsv",), (np.empty(0, dtype=np.float64),))


@dataclass(frozen=True)
class EmdConfig:
    """Sifting hyperparameters.

    sift_sd_threshold is the classic normalized squared-difference stop
    criterion; boundary is how many extrema are mirrored past each edge
    before envelope fitting.
    """

    max_imfs: int = 8
    sift_sd_threshold: float = 0.2
    max_sift_iterations: int = 50
    boundary: int = 2

    def __post_init__(self):
        if self.max_imfs <= 0 or self.max_sift_iterations <= 0 or self.boundary <= 0:
            raise DataError("EmdConfig integers must be positive")
        if self.sift_sd_threshold <= 0:
            raise DataError("sift_sd_threshold must be positive")


@dataclass(frozen=True)
class ImfSet:
    """Ordered intrinsic mode functions (fastest first) plus the residual."""

    imfs: tuple[Waveform, ...]
    residual: Waveform
    source_length: int

    def reconstruct(self) -> np.ndarray:
        total = self.residual.samples.copy()
        for imf in self.imfs:
            total += imf.samples
        return total


@dataclass(frozen=True)
class SegmentComponent:
    """Equivalent-sine amplitude and zero-crossing frequency of one IMF over one segment.

    A component is resolvable only when the segment contains at least two
    zero crossings; slower content cannot be assigned a frequency at this
    window length and is carried by the low-frequency path instead.
    """

    amplitude: float
    frequency_hz: float
    resolvable: bool


def find_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of interior maxima and minima; plateaus count once, at their midpoint."""
    d = x[1:] - x[:-1]
    nz = (d != 0).nonzero()[0]
    if nz.size < 2:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    s = d[nz] > 0
    flips = (s[:-1] != s[1:]).nonzero()[0]
    locs = (nz[flips] + 1 + nz[flips + 1]) // 2
    rising_before = s[flips]
    return locs[rising_before], locs[~rising_before]


def count_zero_crossings(x: np.ndarray) -> int:
    """Count sign changes; a zero sample at either end of the window counts as one."""
    s = np.sign(x)
    nonzero = s[s != 0]
    if nonzero.size == 0:
        return 0
    crossings = int(np.count_nonzero(nonzero[1:] != nonzero[:-1]))
    if s[0] == 0:
        crossings += 1
    if s[-1] == 0 and x.size > 1:
        crossings += 1
    return crossings


def _reflect(x: np.ndarray, src: np.ndarray, sym: float) -> tuple[np.ndarray, np.ndarray]:
    # reversed so reflected positions come out ascending
    rev = src[::-1]
    return 2.0 * sym - rev.astype(np.float64), x[rev]


def _mirror_knots(x: np.ndarray, max_idx: np.ndarray, min_idx: np.ndarray,
                  n_mirror: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Extend extrema past both edges by symmetric reflection.

    Reflection is about the outermost extremum, unless the signal endpoint
    pokes outside the would-be envelope, in which case the endpoint becomes
    the symmetry point and joins the knot set (the standard guard against
    envelope undershoot at the edges). A final pass guarantees both envelopes
    have knots spanning the full sample range.
    """
    n = len(x)
    last = n - 1
    k = n_mirror

    # Left edge: choose sources and symmetry point
    if max_idx[0] < min_idx[0]:          # signal rises to a peak first
        if x[0] > x[min_idx[0]]:
            lsrc_max, lsrc_min, lsym = max_idx[1:k + 1], min_idx[:k], max_idx[0]
        else:                            # endpoint is below the first trough
            lsrc_max = max_idx[:k]
            lsrc_min = np.concatenate([[0], min_idx[:k - 1]])
            lsym = 0
    else:                                # signal falls to a trough first
        if x[0] < x[max_idx[0]]:
            lsrc_max, lsrc_min, lsym = max_idx[:k], min_idx[1:k + 1], min_idx[0]
        else:                            # endpoint is above the first peak
            lsrc_max = np.concatenate([[0], max_idx[:k - 1]])
            lsrc_min = min_idx[:k]
            lsym = 0

    # Right edge, mirror image of the left-edge logic
    if max_idx[-1] > min_idx[-1]:        # signal descends from a final peak
        if x[-1] < x[min_idx[-1]]:
            rsrc_max = max_idx[-k:]
            rsrc_min = np.concatenate([min_idx[len(min_idx) - (k - 1):], [last]])
            rsym = last
        else:
            rsrc_max, rsrc_min, rsym = max_idx[-k - 1:-1], min_idx[-k:], max_idx[-1]
    else:                                # signal climbs from a final trough
        if x[-1] > x[max_idx[-1]]:
            rsrc_max = np.concatenate([max_idx[len(max_idx) - (k - 1):], [last]])
            rsrc_min = min_idx[-k:]
            rsym = last
        else:
            rsrc_max, rsrc_min, rsym = max_idx[-k:], min_idx[-k - 1:-1], min_idx[-1]

    lt_max, lv_max = _reflect(x, lsrc_max, lsym)
    lt_min, lv_min = _reflect(x, lsrc_min, lsym)
    rt_max, rv_max = _reflect(x, rsrc_max, rsym)
    rt_min, rv_min = _reflect(x, rsrc_min, rsym)

    t_up, v_up = _dedupe_sorted(
        np.concatenate([lt_max, max_idx.astype(np.float64), rt_max]),
        np.concatenate([lv_max, x[max_idx], rv_max]))
    t_lo, v_lo = _dedupe_sorted(
        np.concatenate([lt_min, min_idx.astype(np.float64), rt_min]),
        np.concatenate([lv_min, x[min_idx], rv_min]))

    # Coverage guard: every envelope must have knots on or past both edges
    t_up, v_up = _ensure_span(x, t_up, v_up, max_idx, k, last)
    t_lo, v_lo = _ensure_span(x, t_lo, v_lo, min_idx, k, last)
    return t_up, v_up, t_lo, v_lo


def _ensure_span(x: np.ndarray, t: np.ndarray, v: np.ndarray,
                 idx: np.ndarray, k: int, last: int) -> tuple[np.ndarray, np.ndarray]:
    if t[0] > 0:
        add_t, add_v = _reflect(x, idx[:k], 0.0)
        t, v = _dedupe_sorted(np.concatenate([add_t, t]), np.concatenate([add_v, v]))
    if t[-1] < last:
        add_t, add_v = _reflect(x, idx[-k:], float(last))
        t, v = _dedupe_sorted(np.concatenate([t, add_t]), np.concatenate([v, add_v]))
    return t, v


def _dedupe_sorted(t: np.ndarray, v: np.ndarray) -> tuple:
    if t.size > 1 and ((t[1:] - t[:-1]) <= 0).any():
        order = np.argsort(t, kind="stable")
        t, v = t[order], v[order]
        keep = np.concatenate([[True], (t[1:] - t[:-1]) > 0])
        return (t[keep], v[keep])
    return (t, v)


def _spline_system(t: np.ndarray, v: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Natural-cubic tridiagonal pieces for one knot set: (h, dv, dl, d, rhs)."""
    h = t[1:] - t[:-1]
    dv = (v[1:] - v[:-1]) / h
    d = 2.0 * (h[:-1] + h[1:])
    rhs = 6.0 * (dv[1:] - dv[:-1])
    return h, dv, h[1:-1], d, rhs


def _envelope_mean(x: np.ndarray, boundary: int) -> np.ndarray | None:
    """Mean of the upper and lower cubic-spline envelopes, or None if x has too few extrema.

    Both envelopes are natural cubic splines through the mirrored extrema.
    Their tridiagonal systems are solved together as one block-diagonal
    system, and both are evaluated in a single vectorized pass (the lower
    envelope's knots shifted far right so the combined knot vector stays
    strictly increasing).
    """
    max_idx, min_idx = find_extrema(x)
    if max_idx.size < 2 or min_idx.size < 2:
        return None
    t_up, v_up, t_lo, v_lo = _mirror_knots(x, max_idx, min_idx, boundary)
    n = x.size
    k_up = t_up.size
    k_lo = t_lo.size

    h_up, dv_up, dl_up, d_up, rhs_up = _spline_system(t_up, v_up)
    h_lo, dv_lo, dl_lo, d_lo, rhs_lo = _spline_system(t_lo, v_lo)

    m_up = k_up - 2
    m_lo = k_lo - 2
    m = np.zeros(k_up + k_lo)
    if m_up + m_lo > 0:
        if m_up > 0 and m_lo > 0:
            dl = np.concatenate([dl_up, [0.0], dl_lo])
            d = np.concatenate([d_up, d_lo])
            rhs = np.concatenate([rhs_up, rhs_lo])
        elif m_up > 0:
            dl, d, rhs = dl_up, d_up, rhs_up
        else:
            dl, d, rhs = dl_lo, d_lo, rhs_lo
        sol = _DGTSV(dl, d, dl.copy(), rhs,
                     overwrite_dl=True, overwrite_d=True,
                     overwrite_du=True, overwrite_b=True)[3]
        m[1:1 + m_up] = sol[:m_up]
        m[k_up + 1:k_up + 1 + m_lo] = sol[m_up:]

    shift = t_up[-1] - t_lo[0] + 2.0 * n
    t = np.concatenate([t_up, t_lo + shift])
    v = np.concatenate([v_up, v_lo])
    h = np.concatenate([h_up, [shift], h_lo])
    dv = np.concatenate([dv_up, [0.0], dv_lo])

    q = np.arange(n, dtype=np.float64)
    q = np.concatenate([q, q + shift])
    i = t.searchsorted(q, side="right") - 1
    np.minimum(i, t.size - 2, out=i)  # i >= 0 holds since t[0] <= 0 <= q
    dt = q - t[i]
    hi = h[i]
    mi = m[i]
    mi1 = m[i + 1]
    a = (mi1 - mi) / (6.0 * hi)
    b = 0.5 * mi
    c = dv[i] - hi * (2.0 * mi + mi1) / 6.0
    env = v[i] + dt * (c + dt * (b + dt * a))
    return 0.5 * (env[:n] + env[n:])


def emd_decompose(waveform: Waveform, config: EmdConfig | None = None) -> ImfSet:
    """Decompose a waveform into intrinsic mode functions plus a residual.

    Stops at max_imfs or when the remainder is monotone (fewer than two
    maxima or minima). Each IMF is sifted until the normalized squared
    difference between successive iterates falls below sift_sd_threshold or
    the iteration cap is hit. The components always sum back to the input to
    within floating-point rounding.
    """
    cfg = config or EmdConfig()
    x = waveform.samples
    if x.size < 8:
        raise DataError(f"need at least 8 samples to decompose, got {x.size}")

    rate = waveform.sample_rate_hz
    imfs: list[Waveform] = []
    residual = x.copy()

    for _ in range(cfg.max_imfs):
        h = residual.copy()
        mean = _envelope_mean(h, cfg.boundary)
        if mean is None:
            break
        for _ in range(cfg.max_sift_iterations):
            denom = float(np.dot(h, h))
            if denom == 0.0:
                break
            h_next = h - mean
            sd = float(np.dot(mean, mean)) / denom
            h = h_next
            if sd < cfg.sift_sd_threshold:
                break
            mean = _envelope_mean(h, cfg.boundary)
            if mean is None:
                break
        max_idx, min_idx = find_extrema(h)
        if max_idx.size == 0 and min_idx.size == 0:
            break  # sifting flattened the remainder; keep it in the residual
        imfs.append(Waveform(h, rate))
        residual = residual - h

    return ImfSet(imfs=tuple(imfs), residual=Waveform(residual, rate),
                  source_length=x.size)


def imf_quality(imf: Waveform) -> tuple[int, int]:
    """(extrema count, zero-crossing count) for checking the IMF criterion post hoc."""
    max_idx, min_idx = find_extrema(imf.samples)
    return max_idx.size + min_idx.size, count_zero_crossings(imf.samples)


def _component_arrays(imf_samples: np.ndarray, grid: SegmentGrid, offset: int = 0
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-segment (amplitude, frequency, resolvable) arrays for one IMF.

    Segment k spans samples [offset + k*L, offset + (k+1)*L). Sign flips are
    located once over the whole array and each flip is attributed to the
    segment containing the later sample of the flipping pair, so a crossing
    that straddles a segment boundary is counted exactly once. Passing
    offset=1 gives the first segment one sample of incoming context, which is
    how buffered analysis avoids losing crossings at buffer boundaries.
    """
    seg_len = grid.segment_len_samples
    n_seg = grid.segment_count
    end = offset + n_seg * seg_len
    m = imf_samples[offset:end].reshape(n_seg, seg_len)

    amplitude = np.sqrt((2.0 / seg_len) * np.einsum("ij,ij->i", m, m))

    x = imf_samples[:end]
    s = np.sign(x)
    crossings = np.zeros(n_seg, dtype=np.int64)
    n_zero = x.size - np.count_nonzero(s)
    if n_zero < x.size:
        if n_zero:
            # forward-fill zero signs so a crossing through an exact zero counts once
            idx = np.where(s != 0, np.arange(x.size), 0)
            np.maximum.accumulate(idx, out=idx)
            filled = s[idx]
            flips = (filled[:-1] != filled[1:]) & (filled[:-1] != 0)
        else:
            flips = s[:-1] != s[1:]
        prefix = np.concatenate([[0], np.cumsum(flips)])
        starts = offset + np.arange(n_seg, dtype=np.int64) * seg_len
        lo = np.maximum(starts - 1, 0)
        hi = starts + seg_len - 1
        crossings = prefix[hi] - prefix[lo]
        # a zero sample on the span edge marks a crossing instant at the edge
        if offset == 0 and s[0] == 0:
            crossings[0] += 1
        if s[-1] == 0:
            crossings[-1] += 1

    frequency = crossings / (2.0 * grid.segment_duration_s)
    resolvable = crossings >= 2
    return amplitude, frequency, resolvable


def segment_components(imf_set: ImfSet, grid: SegmentGrid
                       ) -> list[list[SegmentComponent]]:
    """For every segment, one SegmentComponent per IMF.

    Amplitude is the equivalent-sine amplitude sqrt(2)*RMS; frequency comes
    from the zero-crossing count over the segment. Components with fewer
    than two crossings are flagged unresolvable.
    """
    if grid.segment_count * grid.segment_len_samples > imf_set.source_length:
        raise DataError("segment grid extends past the decomposed signal")
    per_imf = [_component_arrays(imf.samples, grid) for imf in imf_set.imfs]
    out: list[list[SegmentComponent]] = []
    for k in range(grid.segment_count):
        out.append([
            SegmentComponent(amplitude=float(amp[k]), frequency_hz=float(freq[k]),
                             resolvable=bool(res[k]))
            for amp, freq, res in per_imf
        ])
    return out
