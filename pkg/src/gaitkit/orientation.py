"""Per-cycle orientation-invariant frame (xi forward, psi lateral, zeta up).

zeta is the mean gravity direction of the cycle, xi the principal direction of
the gravity-flattened acceleration and psi = zeta x xi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cycles import GaitCycle
from .errors import DegenerateCycleError, HeadingDegenerateError, ValidationError

EIG_TIE_RATIO = 1e-6
SKEW_TIE = 1e-9


@dataclass
class Frame:
    zeta: np.ndarray
    xi: np.ndarray
    psi: np.ndarray

    def matrix(self) -> np.ndarray:
        """Rows xi, psi, zeta: maps phone-frame vectors to (xi, psi, zeta)."""
        return np.vstack([self.xi, self.psi, self.zeta])


@dataclass
class OrientedCycle:
    a_xi: np.ndarray
    a_psi: np.ndarray
    a_zeta: np.ndarray
    g_xi: np.ndarray
    g_psi: np.ndarray
    g_zeta: np.ndarray
    frame: Frame
    gravity: np.ndarray

    @property
    def accel(self) -> np.ndarray:
        return np.vstack([self.a_xi, self.a_psi, self.a_zeta])

    @property
    def gyro(self) -> np.ndarray:
        return np.vstack([self.g_xi, self.g_psi, self.g_zeta])

    def __len__(self):
        return len(self.a_zeta)


def estimate_gravity(cycle: GaitCycle) -> np.ndarray:
    return cycle.accel.mean(axis=1)


def vertical_versor(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    norm = np.linalg.norm(rho)
    if norm <= 1e-6:
        raise DegenerateCycleError(f"gravity estimate too small ({norm:.3g}) to define a vertical axis")
    return rho / norm


def project(m, v) -> np.ndarray:
    """Component of each column of the ``3 x n`` matrix ``m`` along ``v``."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if m.ndim != 2 or m.shape[0] != v.shape[0]:
        raise ValidationError(f"cannot project {m.shape} matrix on a {v.shape} vector")
    return m.T @ v


def flatten(a, zeta, a_zeta) -> np.ndarray:
    """Remove the zeta component: ``A - zeta a_zeta^T``."""
    return np.asarray(a, dtype=float) - np.outer(zeta, a_zeta)


def _skewness(x):
    xc = x - x.mean()
    m2 = np.mean(xc * xc)
    if m2 == 0.0:
        return 0.0
    return float(np.mean(xc ** 3) / m2 ** 1.5)


def pca_heading(a_f) -> np.ndarray:
    """Unit eigenvector of the flattened-acceleration covariance with largest eigenvalue.

    Sign convention: the projection of the data on the returned axis has
    non-negative skewness; a (numerically) symmetric projection falls back to
    making the first non-zero component positive.
    """
    a_f = np.asarray(a_f, dtype=float)
    if a_f.ndim != 2 or a_f.shape[0] != 3 or a_f.shape[1] < 3:
        raise ValidationError("pca_heading needs a 3 x n matrix with n >= 3")
    centred = a_f - a_f.mean(axis=1, keepdims=True)
    sigma = centred @ centred.T / (a_f.shape[1] - 1)
    sigma = 0.5 * (sigma + sigma.T)
    evals, evecs = np.linalg.eigh(sigma)
    top, second = evals[2], evals[1]
    if top <= 0 or top < (1.0 + EIG_TIE_RATIO) * second:
        raise HeadingDegenerateError("flattened acceleration is isotropic; heading undefined")
    v = evecs[:, 2] / np.linalg.norm(evecs[:, 2])
    skew = _skewness(a_f.T @ v)
    if abs(skew) > SKEW_TIE:
        return v if skew > 0 else -v
    first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
    return v if first > 0 else -v


def transform_cycle(cycle: GaitCycle) -> OrientedCycle:
    rho = estimate_gravity(cycle)
    zeta = vertical_versor(rho)
    a_zeta = project(cycle.accel, zeta)
    xi = pca_heading(flatten(cycle.accel, zeta, a_zeta))
    # remove the tiny zeta leak eigh can leave, then renormalise
    xi = xi - np.dot(xi, zeta) * zeta
    xi /= np.linalg.norm(xi)
    psi = np.cross(zeta, xi)
    frame = Frame(zeta, xi, psi)
    return OrientedCycle(
        a_xi=project(cycle.accel, xi), a_psi=project(cycle.accel, psi), a_zeta=a_zeta,
        g_xi=project(cycle.gyro, xi), g_psi=project(cycle.gyro, psi), g_zeta=project(cycle.gyro, zeta),
        frame=frame, gravity=rho,
    )
