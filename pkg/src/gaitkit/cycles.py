"""Walking-cycle segmentation by iterative template matching on |a|.

The accelerometer magnitude is rotation invariant, so segmentation does not
depend on how the phone sits in the pocket.  A one-second template is cut
around the first heel-strike trough, slid along the magnitude with a
correlation distance, and refreshed by exponential averaging each time a new
cycle boundary is found.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError, NoCyclesError, NoGaitDetectedError, ValidationError
from .ingest import UniformSignal, design_lowpass, fir_zero_phase

MIN_CYCLE_S = 0.25
MAX_CYCLE_S = 2.5
REFINE_S = 0.25
MERGE_S = 0.25


@dataclass
class GaitCycle:
    accel: np.ndarray  # (3, n_k), phone frame
    gyro: np.ndarray   # (3, n_k)
    start_index: int
    end_index: int

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=float)
        self.gyro = np.asarray(self.gyro, dtype=float)
        if self.accel.shape != self.gyro.shape or self.accel.ndim != 2 or self.accel.shape[0] != 3:
            raise ValidationError("cycle accel and gyro must both be 3 x n_k")
        if self.accel.shape[1] != self.end_index - self.start_index:
            raise ValidationError("cycle length does not match its index span")

    @property
    def n_k(self) -> int:
        return self.end_index - self.start_index


@dataclass
class Segmentation:
    """Everything segment_cycles found, including what it threw away."""

    cycles: list
    minima: list            # cycle-boundary anchors, in sample indices
    phi: np.ndarray         # match metric actually evaluated (NaN where never computed)
    dropped: list = field(default_factory=list)  # (start, end, reason)


def magnitude(accel) -> np.ndarray:
    """Per-sample Euclidean norm of a ``3 x m`` matrix."""
    accel = np.asarray(accel, dtype=float)
    return np.sqrt(np.sum(accel * accel, axis=0))


def corr_dist(u, v) -> float:
    """One minus the Pearson correlation of ``u`` and ``v`` (range [0, 2])."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or len(u) < 2:
        raise ValidationError("corr_dist needs two 1-D vectors of equal length >= 2")
    uc = u - u.mean()
    vc = v - v.mean()
    nu, nv = np.linalg.norm(uc), np.linalg.norm(vc)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("corr_dist is undefined for a constant vector")
    return float(np.clip(1.0 - np.dot(uc, vc) / (nu * nv), 0.0, 2.0))


def match_metric(a_mag, template) -> np.ndarray:
    """Correlation distance between ``template`` and every window of ``a_mag``.

    ``out[i]`` compares the template with ``a_mag[i:i + len(template)]``.
    Constant windows get the maximum distance 2.
    """
    a_mag = np.asarray(a_mag, dtype=float)
    t = np.asarray(template, dtype=float)
    n = len(t)
    if len(a_mag) < n:
        raise ValidationError(f"signal ({len(a_mag)} samples) shorter than template ({n})")
    tc = t - t.mean()
    tn = np.linalg.norm(tc)
    if tn == 0.0:
        raise DegenerateInputError("template is constant")
    w = sliding_window_view(a_mag, n)
    wc = w - w.mean(axis=1, keepdims=True)
    wn = np.sqrt(np.einsum("ij,ij->i", wc, wc))
    num = wc @ tc
    out = np.full(len(w), 2.0)
    ok = wn > 0
    out[ok] = np.clip(1.0 - num[ok] / (wn[ok] * tn), 0.0, 2.0)
    return out


def find_cycle_starts(phi, phi_th: float, min_gap: int = 0) -> np.ndarray:
    """Argmin of ``phi`` inside each contiguous region where ``phi < phi_th``.

    Regions separated by fewer than ``min_gap`` samples are merged first.
    """
    phi = np.asarray(phi, dtype=float)
    below = phi < phi_th
    if not below.any():
        return np.zeros(0, dtype=int)
    edges = np.diff(below.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)  # exclusive
    regions = [[starts[0], ends[0]]]
    for s, e in zip(starts[1:], ends[1:]):
        if s - regions[-1][1] < min_gap:
            regions[-1][1] = e
        else:
            regions.append([s, e])
    return np.array([s + int(np.argmin(phi[s:e])) for s, e in regions], dtype=int)


def _local_minima(x):
    return np.flatnonzero((x[1:-1] < x[:-2]) & (x[1:-1] <= x[2:])) + 1


def initial_template(a_mag, rate_hz: float, cutoff_hz: float = 3.0):
    """First template and the heel-strike index ``i_star`` it is centred on.

    The first trough of the low-passed magnitude is refined to the lowest raw
    sample within +-0.25 s, then one second of raw magnitude is cut around it.
    Shallow wiggles above the mean of the smoothed search span are not troughs.
    """
    a_mag = np.asarray(a_mag, dtype=float)
    n_s = int(round(rate_hz))
    half = n_s // 2
    search_end = int(round(3.0 * rate_hz))
    if len(a_mag) < search_end:
        raise NoGaitDetectedError(f"need at least 3 s of data to build a template, got {len(a_mag) / rate_hz:.2f} s")
    taps = design_lowpass(cutoff_hz, rate_hz, numtaps=2 * n_s + 1)
    smooth = fir_zero_phase(a_mag, taps)
    radius = int(round(REFINE_S * rate_hz))
    lo_ok, hi_ok = half, len(a_mag) - (n_s - half)
    level = smooth[half:search_end].mean()
    for i_tilde in _local_minima(smooth):
        if i_tilde < half or smooth[i_tilde] >= level:
            continue
        if i_tilde >= search_end:
            break
        lo = max(i_tilde - radius, lo_ok)
        hi = min(i_tilde + radius, hi_ok)
        if hi < lo:
            continue
        i_star = lo + int(np.argmin(a_mag[lo:hi + 1]))
        template = a_mag[i_star - half:i_star - half + n_s].copy()
        if np.ptp(template) > 0:
            return template, i_star
    raise NoGaitDetectedError("no magnitude trough found in the first 3 s")


def update_template(template, new, alpha: float = 0.9) -> np.ndarray:
    template = np.asarray(template, dtype=float)
    new = np.asarray(new, dtype=float)
    if template.shape != new.shape:
        raise ValidationError(f"template length mismatch: {template.shape} vs {new.shape}")
    # same as alpha*T + (1-alpha)*T', but exact when T' == T or alpha == 1
    return template + (1.0 - alpha) * (new - template)


def _next_minimum(a_mag, template, m, phi_th, min_gap, max_len, phi_out):
    """Next sub-threshold minimum after ``m``, or None within one cycle span."""
    n = len(template)
    hi = min(m + max_len, len(a_mag) - n)
    if hi <= m:
        return None
    phi = match_metric(a_mag[m:hi + n], template)
    phi_out[m:hi + 1] = phi
    # skip the tail of the region containing m itself
    above = np.flatnonzero(phi >= phi_th)
    if above.size == 0:
        return None
    j = above[0]
    found = find_cycle_starts(phi[j:], phi_th, min_gap)
    found = found[found + j >= min_gap]
    return None if found.size == 0 else m + j + int(found[0])


def _reacquire(a_mag, template, start, phi_th, min_gap, phi_out):
    n = len(template)
    if len(a_mag) - start < n:
        return None
    phi = match_metric(a_mag[start:], template)
    phi_out[start:start + len(phi)] = phi
    found = find_cycle_starts(phi, phi_th, min_gap)
    return None if found.size == 0 else start + int(found[0])


def locate_cycles(accel: UniformSignal, gyro: UniformSignal, phi_th: float = 0.3,
                  alpha: float = 0.9, cycle_cutoff_hz: float = 3.0) -> Segmentation:
    """Full iterative segmentation with diagnostics; see :func:`segment_cycles`."""
    if accel.data.shape != gyro.data.shape or accel.rate_hz != gyro.rate_hz:
        raise ValidationError("accel and gyro must share one uniform grid")
    rate = accel.rate_hz
    if len(accel) < 3.0 * rate:
        raise NoCyclesError(f"recording of {len(accel) / rate:.2f} s is shorter than 3 s")
    a_mag = magnitude(accel.data)
    n_s = int(round(rate))
    min_gap = int(MERGE_S * n_s)
    max_len = int(MAX_CYCLE_S * n_s)
    template, _ = initial_template(a_mag, rate, cycle_cutoff_hz)
    # phi minima mark window starts; cycle boundaries sit at the template's heel strike
    anchor = n_s // 2

    phi_trace = np.full(len(a_mag) - n_s + 1, np.nan)
    runs = []
    m = _reacquire(a_mag, template, 0, phi_th, min_gap, phi_trace)
    while m is not None:
        run = [m]
        while True:
            if len(run) > 1:
                template = update_template(template, a_mag[run[-1]:run[-1] + n_s], alpha)
            nxt = _next_minimum(a_mag, template, run[-1], phi_th, min_gap, max_len, phi_trace)
            if nxt is None:
                break
            run.append(nxt)
        runs.append(run)
        m = _reacquire(a_mag, template, run[-1] + max_len, phi_th, min_gap, phi_trace)

    if sum(len(r) for r in runs) < 3:
        raise NoCyclesError(f"found {sum(len(r) for r in runs)} cycle boundaries, need at least 3")

    cycles, dropped, minima = [], [], []
    lo_len, hi_len = MIN_CYCLE_S * n_s, MAX_CYCLE_S * n_s
    for r, run in enumerate(runs):
        bounds = [x + anchor for x in run]
        minima.extend(bounds)
        pairs = list(zip(bounds[:-1], bounds[1:]))
        if r == 0 and pairs:
            dropped.append((pairs[0][0], pairs[0][1], "first cycle"))
            pairs = pairs[1:]
        for s, e in pairs:
            if not lo_len <= e - s <= hi_len:
                dropped.append((s, e, f"implausible length {e - s}"))
                continue
            cycles.append(GaitCycle(accel.data[:, s:e], gyro.data[:, s:e], s, e))
    return Segmentation(cycles, minima, phi_trace, dropped)


def segment_cycles(accel: UniformSignal, gyro: UniformSignal, phi_th: float = 0.3,
                   alpha: float = 0.9, cycle_cutoff_hz: float = 3.0) -> list:
    """Split aligned accel/gyro signals into walking cycles.

    Boundaries are found one at a time: after each new boundary the template
    is refreshed with the ``N_s`` magnitude samples read from that alignment.
    The first cycle is discarded and cycles outside [0.25 s, 2.5 s] are dropped.
    """
    return locate_cycles(accel, gyro, phi_th, alpha, cycle_cutoff_hz).cycles
