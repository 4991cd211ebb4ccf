"""Deterministic synthetic walks with ground truth, plus a brute-force OSVM oracle.

A subject is a handful of harmonic signatures in a body frame (x forward,
y lateral, z up).  Walks evaluate them on a jittered ~150 Hz clock, add
Gaussian noise in the body frame and rotate everything into the phone frame.
Because noise is added before the rotation, the same walk under two
rotations differs by exactly that rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ValidationError
from .ingest import Recording

GRAVITY = 9.81
NOMINAL_RATE_HZ = 150.0
N_HARMONICS = 3


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    seed: int
    cycle_period_s: float
    accel_amp: np.ndarray    # (3 axes, 3 harmonics), body frame
    accel_phase: np.ndarray
    gyro_amp: np.ndarray
    gyro_phase: np.ndarray
    impact_depth: float      # heel-strike dip in vertical acceleration, m/s^2
    impact_width_s: float
    gravity: float = GRAVITY
    noise_std: float = 0.3
    gyro_noise_std: float = 0.05
    amp_jitter: float = 0.06     # relative, per cycle
    phase_jitter: float = 0.08   # rad, per cycle
    period_jitter: float = 0.02  # relative, per cycle

    def __eq__(self, other):
        if not isinstance(other, SubjectProfile):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__)

    def __hash__(self):
        return hash((self.subject_id, self.seed))


@dataclass
class GroundTruth:
    subject_id: str
    cycle_start_times: np.ndarray
    device_rotation: np.ndarray


def generate_subject(seed: int, subject_id=None) -> SubjectProfile:
    """Pseudorandom subject; identical for identical seeds."""
    rng = np.random.default_rng([20170612, int(seed)])
    period = rng.uniform(0.9, 1.4)

    acc_amp = np.empty((3, N_HARMONICS))
    acc_ph = np.empty((3, N_HARMONICS))
    # forward: rich and skewed so the heading sign is well defined
    acc_amp[0] = [rng.uniform(0.8, 1.6), rng.uniform(0.6, 1.4), rng.uniform(0.2, 0.6)]
    p1 = rng.uniform(-np.pi, np.pi)
    offset = rng.uniform(-1.0, 1.0) + (np.pi if rng.random() < 0.5 else 0.0)
    acc_ph[0] = [p1, 2 * p1 + offset, rng.uniform(-np.pi, np.pi)]
    # lateral: weaker than forward and in quadrature with it, so that body-x is
    # the principal horizontal axis of every stride
    acc_amp[1] = rng.uniform(0.1, 0.35, N_HARMONICS)
    acc_ph[1] = acc_ph[0] + np.where(rng.random(N_HARMONICS) < 0.5, -0.5, 0.5) * np.pi
    # vertical: one dominant trough per stride at phase 0
    a1 = rng.uniform(1.5, 2.3)
    acc_amp[2] = [a1, a1 * rng.uniform(0.08, 0.18), a1 * rng.uniform(0.03, 0.08)]
    acc_ph[2] = rng.uniform(-0.35, 0.35, N_HARMONICS)

    gyro_amp = rng.uniform(0.3, 1.5, (3, N_HARMONICS)) * np.array([1.0, 0.6, 0.3])
    gyro_ph = rng.uniform(-np.pi, np.pi, (3, N_HARMONICS))
    return SubjectProfile(
        subject_id=subject_id or f"s{int(seed):03d}", seed=int(seed), cycle_period_s=float(period),
        accel_amp=acc_amp, accel_phase=acc_ph, gyro_amp=gyro_amp, gyro_phase=gyro_ph,
        impact_depth=float(rng.uniform(3.0, 4.0)), impact_width_s=float(rng.uniform(0.015, 0.03)),
    )


def random_rotation(rng) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def _check_rotation(r):
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.allclose(r @ r.T, np.eye(3), atol=1e-9) \
            or not np.isclose(np.linalg.det(r), 1.0, atol=1e-9):
        raise ValidationError("rotation must be a 3x3 orthonormal matrix with det +1")
    return r


def _jittered_clock(rng, duration_s, rate, jitter):
    n = int(np.floor(duration_s * rate)) + 1
    dt = 1.0 / rate
    t = np.arange(n) * dt
    if jitter:
        t[1:] += rng.uniform(-jitter, jitter, n - 1) * dt
    t = np.round(t, 6)
    return t[t <= duration_s]


class _Gait:
    """Cycle timing and smoothly varying per-cycle signature perturbations."""

    def __init__(self, profile, duration_s, rng):
        p = profile
        n_cycles = int(np.ceil(duration_s / (p.cycle_period_s * (1 - 3 * p.period_jitter)))) + 3
        periods = p.cycle_period_s * (1 + p.period_jitter * rng.standard_normal(n_cycles))
        first = -rng.uniform(0.0, periods[0])
        self.bounds = first + np.concatenate([[0.0], np.cumsum(periods)])
        self.periods = periods
        shape = (n_cycles, 2, 3, N_HARMONICS)
        self.amp_scale = 1 + p.amp_jitter * rng.standard_normal(shape)
        self.phase_shift = p.phase_jitter * rng.standard_normal(shape)
        self.profile = p

    def phase(self, t):
        k = np.searchsorted(self.bounds, t, side="right") - 1
        return k + (t - self.bounds[k]) / self.periods[k]

    def _smooth(self, values, theta):
        # per-cycle values pinned at cycle centres, linear in phase between them
        centres = np.arange(values.shape[0]) + 0.5
        flat = values.reshape(values.shape[0], -1)
        out = np.stack([np.interp(theta, centres, flat[:, j]) for j in range(flat.shape[1])], axis=-1)
        return out.reshape(theta.shape + values.shape[1:])

    def body(self, t, sensor):
        """Noise-free body-frame signal, shape (3, len(t)); sensor 0=accel, 1=gyro."""
        p = self.profile
        theta = self.phase(t)
        scale = self._smooth(self.amp_scale[:, sensor], theta)
        shift = self._smooth(self.phase_shift[:, sensor], theta)
        amp = (p.accel_amp, p.gyro_amp)[sensor]
        ph = (p.accel_phase, p.gyro_phase)[sensor]
        h = np.arange(1, N_HARMONICS + 1)
        arg = 2 * np.pi * theta[:, None, None] * h + ph + shift  # (n, 3, H)
        wave = np.sum(amp * scale * np.cos(arg), axis=-1).T       # (3, n)
        if sensor == 0:
            wave[2] = -wave[2]
            k = np.clip(np.floor(theta).astype(int), 0, len(self.periods) - 1)
            period = self.periods[k]
            dt = (theta - np.round(theta)) * period
            # zero-mean over a stride so gravity stays the per-cycle mean
            dip_mean = p.impact_depth * p.impact_width_s * np.sqrt(2 * np.pi) / period
            wave[2] += dip_mean - p.impact_depth * np.exp(-0.5 * (dt / p.impact_width_s) ** 2)
            wave[2] += p.gravity
        return wave


def generate_walk(profile: SubjectProfile, duration_s: float, rotation=None, timing_jitter: float = 0.2,
                  session_seed: int = 0, session_id=None, noise_std=None, rate_hz: float = NOMINAL_RATE_HZ):
    """Synthesize one walk; returns ``(Recording, GroundTruth)``."""
    if duration_s < 5.0:
        raise ValidationError("synthetic walks must last at least 5 s")
    rot = np.eye(3) if rotation is None else _check_rotation(rotation)
    rng = np.random.default_rng([profile.seed, 7, int(session_seed)])
    gait = _Gait(profile, duration_s, rng)
    accel_noise = profile.noise_std if noise_std is None else noise_std
    gyro_noise = profile.gyro_noise_std if noise_std is None or profile.noise_std == 0 \
        else profile.gyro_noise_std * noise_std / profile.noise_std
    streams = []
    for sensor, sd in ((0, accel_noise), (1, gyro_noise)):
        t = _jittered_clock(rng, duration_s, rate_hz, timing_jitter)
        body = gait.body(t, sensor)
        if sd:
            body = body + sd * rng.standard_normal(body.shape)
        streams.append(np.column_stack([t, (rot @ body).T]))
    starts = gait.bounds[(gait.bounds >= 0) & (gait.bounds <= duration_s)]
    rec = Recording(profile.subject_id, session_id or f"w{int(session_seed)}", streams[0], streams[1])
    return rec, GroundTruth(profile.subject_id, starts, rot)


def brute_force_osvm(train, nu: float, gamma_rbf: float, tol: float = 1e-8, max_iter: int = 2_000_000):
    """Solve the one-class SVM dual by projected gradient descent (test oracle).

    Minimises ``0.5 a^T Q a`` over ``{0 <= a <= 1/(nu l), sum(a) = 1}``;
    projection onto that capped simplex is done by bisection on the shift.
    """
    from .osvm import OsvmModel, offset_from_gradient

    s = np.asarray(train, dtype=float)
    ell = len(s)
    c = 1.0 / (nu * ell)
    d2 = np.sum((s[:, None, :] - s[None, :, :]) ** 2, axis=-1)
    q = np.exp(-gamma_rbf * d2)

    def proj(v):
        lo, hi = v.min() - c, v.max()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.clip(v - mid, 0, c).sum() > 1:
                lo = mid
            else:
                hi = mid
        return np.clip(v - 0.5 * (lo + hi), 0, c)

    step = 1.0 / max(np.linalg.eigvalsh(q)[-1], 1e-12)
    a = proj(np.full(ell, 1.0 / ell))
    for _ in range(max_iter):
        a_new = proj(a - step * (q @ a))
        if np.max(np.abs(a_new - a)) < tol * 1e-3:
            a = a_new
            break
        a = a_new
    g = q @ a
    b = offset_from_gradient(a, g, c)
    keep = a > 1e-12
    return OsvmModel(s[keep], a[keep], b, gamma_rbf, nu, pca=None)
