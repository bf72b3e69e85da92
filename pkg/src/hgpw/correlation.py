"""Lifetime histograms, start-stop and multi-stop g2 estimators, IRF convolution.

Delays are integer picoseconds. g2 bins are centred on k * bin_width, so the
zero-delay bin spans [-bin/2, bin/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .photophysics import PhotonStream

PS = 1e-12


class CorrelationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    bin_width_ps: float
    centers_ps: np.ndarray
    counts: np.ndarray
    acquisition_s: float = 0.0
    rate_a: float = 0.0
    rate_b: float = 0.0
    normalized: bool = False
    values: np.ndarray | None = field(default=None, repr=False)
    errors: np.ndarray | None = field(default=None, repr=False)

    @property
    def g2(self):
        if not self.normalized:
            raise CorrelationError("histogram is not normalized")
        return self.values


@dataclass(frozen=True, eq=False)
class LifetimeHistogram:
    bin_width_ps: float
    centers_ps: np.ndarray
    counts: np.ndarray      # raw
    floor: float            # mean counts per bin in the last 10% of the range
    corrected: np.ndarray   # counts - floor, signed (use for fitting)

    @property
    def corrected_display(self):
        return np.clip(self.corrected, 0, None)


def _times(stream):
    t = stream.timestamps if isinstance(stream, PhotonStream) else np.asarray(stream, np.int64)
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise CorrelationError("input stream is not sorted by timestamp")
    return t


def histogram_lifetime(detector, sync, bin_width_ps, range_ps, floor_fraction=0.1):
    """Delay of each detection after the most recent sync pulse, binned from 0 to ``range_ps``."""
    t, s = _times(detector), _times(sync)
    if s.size == 0:
        raise CorrelationError("empty sync stream")
    if s.size > 1:
        period = np.median(np.diff(s))
        if range_ps >= period:
            raise CorrelationError(f"range {range_ps} ps must be shorter than the sync period {period} ps")
    nbins = int(round(range_ps / bin_width_ps))
    idx = np.searchsorted(s, t, side="right") - 1
    ok = idx >= 0
    delay = t[ok] - s[idx[ok]]
    delay = delay[delay < nbins * bin_width_ps]
    counts = np.bincount((delay // bin_width_ps).astype(np.int64), minlength=nbins)[:nbins].astype(float)
    centers = (np.arange(nbins) + 0.5) * bin_width_ps
    tail = counts[int(np.floor((1 - floor_fraction) * nbins)):]
    floor = float(tail.mean()) if tail.size else 0.0
    return LifetimeHistogram(bin_width_ps, centers, counts, floor, counts - floor)


def _bins(bin_width_ps, max_delay_ps, symmetric):
    k = int(np.ceil(max_delay_ps / bin_width_ps - 1e-12))
    if k < 10:
        raise CorrelationError("max delay must span at least 10 bins")
    lo = -k if symmetric else 0
    return k, lo, np.arange(lo, k + 1) * float(bin_width_ps)


def _bin_index(d, bin_width_ps, lo):
    return np.floor((d + 0.5 * bin_width_ps) / bin_width_ps).astype(np.int64) - lo


def _first_stops(starts, stops, same, limit):
    idx = np.searchsorted(stops, starts, side="right" if same else "left")
    ok = idx < stops.size
    d = stops[idx[ok]] - starts[ok]
    return d[d < limit]


def _acquisition(ta, tb, duration_s):
    if duration_s is not None:
        return float(duration_s)
    both = [x for x in (ta, tb) if x.size]
    if not both:
        return 0.0
    return (max(x[-1] for x in both) - min(x[0] for x in both)) * PS


def g2_start_stop(a, b, bin_width_ps=128, max_delay_ps=50_000, symmetric=True, duration_s=None):
    """First-stop histogram: each start in A is paired with the next stop in B.

    The symmetric variant fills negative delays by swapping the roles of A and
    B. For distinct streams a zero-delay tie is found from both sides.
    """
    ta, tb = _times(a), _times(b)
    same = a is b
    k, lo, centers = _bins(bin_width_ps, max_delay_ps, symmetric)
    limit = (k + 0.5) * bin_width_ps
    counts = np.zeros(centers.size)
    pos = _first_stops(ta, tb, same, limit)
    np.add.at(counts, _bin_index(pos, bin_width_ps, lo), 1)
    if symmetric:
        neg = _first_stops(tb, ta, same, limit)
        np.add.at(counts, _bin_index(-neg, bin_width_ps, lo), 1)
    T = _acquisition(ta, tb, duration_s)
    return CorrelationHistogram(float(bin_width_ps), centers, counts, T,
                                ta.size / T if T else 0.0, tb.size / T if T else 0.0)


def g2_full(a, b, bin_width_ps=128, max_delay_ps=50_000, duration_s=None, chunk=200_000):
    """All-pairs (multi-stop) cross-correlation histogram, symmetric in delay."""
    ta, tb = _times(a), _times(b)
    same = a is b
    k, lo, centers = _bins(bin_width_ps, max_delay_ps, True)
    limit = (k + 0.5) * bin_width_ps
    counts = np.zeros(centers.size)
    for s in range(0, ta.size, chunk):
        t = ta[s:s + chunk]
        first = np.searchsorted(tb, t - limit, side="left")
        last = np.searchsorted(tb, t + limit, side="left")
        n = last - first
        tot = int(n.sum())
        if tot == 0:
            continue
        owner = np.repeat(np.arange(t.size), n)
        offs = np.arange(tot) - np.repeat(np.cumsum(n) - n, n)
        j = first[owner] + offs
        d = tb[j] - t[owner]
        if same:
            keep = j != owner + s
            d = d[keep]
        counts += np.bincount(_bin_index(d, bin_width_ps, lo), minlength=centers.size)[:centers.size]
    T = _acquisition(ta, tb, duration_s)
    return CorrelationHistogram(float(bin_width_ps), centers, counts, T,
                                ta.size / T if T else 0.0, tb.size / T if T else 0.0)


def g2_normalize(hist: CorrelationHistogram) -> CorrelationHistogram:
    """C(tau) / (r_A r_B bin T), with sqrt(counts) errors propagated."""
    if hist.normalized:
        raise CorrelationError("histogram is already normalized")
    if not hist.acquisition_s > 0:
        raise CorrelationError("zero acquisition time")
    if not (hist.rate_a > 0 and hist.rate_b > 0):
        raise CorrelationError("zero count rate on a channel")
    norm = hist.rate_a * hist.rate_b * hist.bin_width_ps * PS * hist.acquisition_s
    return replace(hist, normalized=True, values=hist.counts / norm, errors=np.sqrt(hist.counts) / norm)


def gaussian_kernel(bin_width, sigma, truncate=5.0):
    m = int(np.floor(truncate * sigma / bin_width))
    x = np.arange(-m, m + 1) * bin_width
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def convolve_irf(curve, bin_width, sigma):
    """Convolve a curve sampled on uniform bins with a unit-area Gaussian (truncated at 5 sigma).

    ``bin_width`` and ``sigma`` share units. Ends are padded with the edge values.
    """
    curve = np.asarray(curve, dtype=float)
    if sigma < 0:
        raise CorrelationError("sigma must be >= 0")
    if sigma == 0:
        return curve.copy()
    if bin_width > sigma / 4:
        raise CorrelationError(f"bin width {bin_width} too coarse for sigma {sigma} (need <= sigma/4)")
    k = gaussian_kernel(bin_width, sigma)
    m = k.size // 2
    padded = np.pad(curve, m, mode="edge")
    return np.convolve(padded, k, mode="valid")
