"""Raw recording I/O, uniform resampling, FIR low-pass filtering and Welch spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.interpolate import CubicSpline

from .errors import InsufficientDataError, ParameterError, ParseError, ValidationError

REC_MAGIC = "#gaitkit-rec"
REC_VERSION = "v1"
MIN_RATE_HZ, MAX_RATE_HZ = 50.0, 500.0


@dataclass(eq=False)
class Recording:
    """One walking session.

    ``accel`` and ``gyro`` are ``(n, 4)`` arrays with columns ``t, x, y, z``
    (seconds, then m/s^2 or rad/s).
    """

    subject_id: str
    session_id: str
    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=float).reshape(-1, 4)
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(-1, 4)
        for name, s in (("accel", self.accel), ("gyro", self.gyro)):
            _validate_stream(s, name)

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (self.subject_id == other.subject_id and self.session_id == other.session_id
                and np.array_equal(self.accel, other.accel) and np.array_equal(self.gyro, other.gyro))

    @property
    def duration(self) -> float:
        t0 = min(self.accel[0, 0], self.gyro[0, 0])
        t1 = max(self.accel[-1, 0], self.gyro[-1, 0])
        return float(t1 - t0)


def _validate_stream(s: np.ndarray, name: str):
    if len(s) == 0:
        raise ValidationError(f"{name} stream is empty")
    if not np.all(np.isfinite(s)):
        raise ValidationError(f"{name} stream contains non-finite values")
    t = s[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise ValidationError(f"{name} timestamps not strictly increasing at sample {bad[0] + 1}")
    if len(t) >= 2:
        rate = (len(t) - 1) / (t[-1] - t[0])
        if not MIN_RATE_HZ <= rate <= MAX_RATE_HZ:
            raise ValidationError(
                f"{name} average sample rate {rate:.1f} Hz outside [{MIN_RATE_HZ:g}, {MAX_RATE_HZ:g}]")


@dataclass
class UniformSignal:
    """Three equal-length channels sampled at ``rate_hz`` starting at time ``t0``."""

    rate_hz: float
    data: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.rate_hz <= 0:
            raise ValidationError("rate_hz must be positive")
        if self.data.ndim != 2 or self.data.shape[0] != 3:
            raise ValidationError(f"expected 3 channels, got array of shape {self.data.shape}")

    def __len__(self):
        return self.data.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.rate_hz


@dataclass
class Spectrum:
    freqs_hz: np.ndarray
    power_db: np.ndarray  # (channels, len(freqs_hz))

    def linear(self) -> np.ndarray:
        return 10.0 ** (self.power_db / 10.0)


# -- text format ---------------------------------------------------------------

def _fmt_time(t: float) -> str:
    for digits in range(6, 18):
        s = f"{t:.{digits}f}"
        if float(s) == t:
            return s
    return f"{t:.17f}"


def write_recording(rec: Recording) -> str:
    lines = [f"{REC_MAGIC} {REC_VERSION} subject={rec.subject_id} session={rec.session_id}"]
    rows = [("A", r) for r in rec.accel.tolist()] + [("G", r) for r in rec.gyro.tolist()]
    rows.sort(key=lambda item: (item[1][0], item[0]))
    for tag, (t, x, y, z) in rows:
        lines.append(f"{tag},{_fmt_time(t)},{x!r},{y!r},{z!r}")
    return "\n".join(lines) + "\n"


def _parse_rec_header(line: str):
    tokens = line.split()
    if len(tokens) != 4 or tokens[0] != REC_MAGIC:
        raise ParseError(f"expected header '{REC_MAGIC} {REC_VERSION} subject=<id> session=<id>'", 1)
    if tokens[1] != REC_VERSION:
        raise ParseError(f"unsupported recording version {tokens[1]!r}", 1)
    fields = {}
    for tok in tokens[2:]:
        key, sep, value = tok.partition("=")
        if not sep or not value:
            raise ParseError(f"bad header field {tok!r}", 1)
        fields[key] = value
    if set(fields) != {"subject", "session"}:
        raise ParseError("header must define exactly subject= and session=", 1)
    return fields["subject"], fields["session"]


def parse_recording(text: str) -> Recording:
    """Parse the ``#gaitkit-rec v1`` text format.

    Timestamps are shifted so the earliest sample of either stream is at 0.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty recording", 1)
    subject, session = _parse_rec_header(lines[0])
    streams = {"A": [], "G": []}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 comma-separated fields, got {len(parts)}", lineno)
        tag = parts[0]
        if tag not in streams:
            raise ParseError(f"unknown sensor tag {tag!r}", lineno)
        try:
            values = [float(p) for p in parts[1:]]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", lineno)
        streams[tag].append(values)
    if not streams["A"] or not streams["G"]:
        raise ValidationError("recording needs both accelerometer (A) and gyroscope (G) samples")
    accel = np.array(streams["A"])
    gyro = np.array(streams["G"])
    t0 = min(accel[0, 0], gyro[0, 0])
    accel[:, 0] -= t0
    gyro[:, 0] -= t0
    return Recording(subject, session, accel, gyro)


def load_recording(path) -> Recording:
    with open(path, encoding="utf-8") as fh:
        return parse_recording(fh.read())


def save_recording(rec: Recording, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_recording(rec))


# -- resampling ----------------------------------------------------------------

def uniform_grid(t_start: float, t_end: float, rate_hz: float) -> np.ndarray:
    n = int(math.floor((t_end - t_start) * rate_hz + 1e-9)) + 1
    return t_start + np.arange(n) / rate_hz


def resample_uniform(stream, rate_hz: float = 200.0, t_start=None, t_end=None) -> UniformSignal:
    """Cubic-spline resample an ``(n, 4)`` ``t,x,y,z`` stream onto a ``rate_hz`` grid.

    The grid spans ``[t_start, t_end]``, defaulting to the stream's own first
    and last timestamps.  The spline interpolates every input sample exactly.
    """
    stream = np.asarray(stream, dtype=float)
    if stream.ndim != 2 or stream.shape[1] != 4:
        raise ValidationError("stream must be an (n, 4) array of t, x, y, z")
    if len(stream) < 4:
        raise InsufficientDataError(f"cubic spline needs at least 4 samples, got {len(stream)}")
    t = stream[:, 0]
    t_start = t[0] if t_start is None else t_start
    t_end = t[-1] if t_end is None else t_end
    if t_start < t[0] - 1e-12 or t_end > t[-1] + 1e-12 or t_end <= t_start:
        raise ValidationError("resampling interval must lie inside the stream's time span")
    grid = uniform_grid(t_start, t_end, rate_hz)
    spline = CubicSpline(t, stream[:, 1:], axis=0)
    return UniformSignal(rate_hz, spline(grid).T, float(t_start))


def align_streams(rec: Recording, rate_hz: float = 200.0):
    """Resample accel and gyro onto one shared grid (their common time span)."""
    t_start = max(rec.accel[0, 0], rec.gyro[0, 0])
    t_end = min(rec.accel[-1, 0], rec.gyro[-1, 0])
    if t_end - t_start < 1.0:
        raise InsufficientDataError("accelerometer and gyroscope overlap for less than 1 s")
    return (resample_uniform(rec.accel, rate_hz, t_start, t_end),
            resample_uniform(rec.gyro, rate_hz, t_start, t_end))


# -- filtering -----------------------------------------------------------------

def default_numtaps(rate_hz: float) -> int:
    """101 taps at 200 Hz, scaled with the sampling rate (always odd)."""
    return 2 * int(round(0.25 * rate_hz)) + 1


def design_lowpass(cutoff_hz: float, rate_hz: float, numtaps=None) -> np.ndarray:
    """Hamming-windowed sinc low-pass taps with unit DC gain."""
    if not 0 < cutoff_hz < rate_hz / 2:
        raise ParameterError(f"cutoff {cutoff_hz} Hz must lie in (0, Nyquist={rate_hz / 2} Hz)")
    numtaps = default_numtaps(rate_hz) if numtaps is None else int(numtaps)
    if numtaps < 3 or numtaps % 2 == 0:
        raise ParameterError("numtaps must be odd and >= 3")
    return signal.firwin(numtaps, cutoff_hz, window="hamming", fs=rate_hz)


def fir_zero_phase(x, taps) -> np.ndarray:
    """Apply symmetric FIR ``taps`` along the last axis with delay compensation.

    The input is extended by reflection so the output has the input's length
    and no edge transient from zero padding.
    """
    x = np.asarray(x, dtype=float)
    half = len(taps) // 2
    pad = [(0, 0)] * (x.ndim - 1) + [(half, half)]
    xp = np.pad(x, pad, mode="reflect")
    flat = xp.reshape(-1, xp.shape[-1])
    out = np.array([np.convolve(row, taps, mode="valid") for row in flat])
    return out.reshape(x.shape)


def lowpass_fir(sig: UniformSignal, cutoff_hz: float = 40.0, numtaps=None) -> UniformSignal:
    taps = design_lowpass(cutoff_hz, sig.rate_hz, numtaps)
    return UniformSignal(sig.rate_hz, fir_zero_phase(sig.data, taps), sig.t0)


# -- spectra -------------------------------------------------------------------

def welch_psd(sig: UniformSignal, window_s: float = 1.0, overlap: float = 0.5) -> Spectrum:
    """Per-channel Welch PSD (Hann windows), power in dB re 1 unit^2/Hz."""
    nperseg = int(round(window_s * sig.rate_hz))
    if nperseg < 2 or not 0 <= overlap < 1:
        raise ParameterError("window must cover >= 2 samples and overlap must be in [0, 1)")
    if len(sig) < nperseg:
        raise InsufficientDataError(f"signal has {len(sig)} samples, shorter than one {nperseg}-sample window")
    freqs, psd = signal.welch(sig.data, fs=sig.rate_hz, window="hann", nperseg=nperseg,
                              noverlap=int(round(overlap * nperseg)), axis=-1)
    return Spectrum(freqs, 10.0 * np.log10(np.maximum(psd, 1e-300)))
