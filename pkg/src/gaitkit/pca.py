"""PCA feature selection for the one-class stage.

Counter-intuitively the *lowest*-variance directions of the CNN features are
the default: they describe what stays stable across one person's cycles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ParameterError, ValidationError

DISTINCT_RTOL = 1e-10


@dataclass(eq=False)
class PcaTransform:
    mean: np.ndarray                  # (F,)
    basis: np.ndarray                 # (S, F), orthonormal rows
    component_variances: np.ndarray   # (S,)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        self.component_variances = np.asarray(self.component_variances, dtype=float)
        s, f = self.basis.shape
        if self.mean.shape != (f,) or self.component_variances.shape != (s,) or s > f:
            raise ValidationError(f"inconsistent PCA shapes: mean {self.mean.shape}, basis {self.basis.shape}, "
                                  f"variances {self.component_variances.shape}")

    @property
    def S(self) -> int:
        return self.basis.shape[0]

    @property
    def F(self) -> int:
        return self.basis.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PcaTransform):
            return NotImplemented
        return (np.array_equal(self.mean, other.mean) and np.array_equal(self.basis, other.basis)
                and np.array_equal(self.component_variances, other.component_variances))


def _canonical_sign(v):
    k = int(np.argmax(np.abs(v)))
    return v if v[k] > 0 else -v


def fit_pca(features, S: int = 20, mode: str = "lowest") -> PcaTransform:
    """Fit the projection on an ``(n, F)`` feature matrix.

    Keeps the ``S`` components with the smallest (``mode="lowest"``) or largest
    eigenvalues of the sample covariance, ordered from that end.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValidationError("features must be an (n, F) matrix")
    n, f = x.shape
    if mode not in ("lowest", "highest"):
        raise ParameterError("mode must be 'lowest' or 'highest'")
    if not 1 <= S <= f:
        raise ParameterError(f"S={S} must lie in [1, F={f}]")
    if n < f + 1:
        raise InsufficientDataError(f"PCA on {f} features needs at least {f + 1} samples, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)   # ascending
    # null directions carry no information and have no well-defined basis
    live = np.flatnonzero(evals > DISTINCT_RTOL * max(evals[-1], 0.0))
    if live.size < S:
        raise ValidationError(f"covariance is rank deficient: {live.size} non-null components, need {S}")
    keep = live[:S] if mode == "lowest" else live[::-1][:S]
    basis = np.vstack([_canonical_sign(evecs[:, k]) for k in keep])
    return PcaTransform(mean, basis, np.clip(evals[keep], 0.0, None))


def apply(pca: PcaTransform, f) -> np.ndarray:
    """``basis @ (f - mean)``; ``f`` may be one vector or an ``(n, F)`` stack."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != pca.F:
        raise ValidationError(f"feature dimension {f.shape[-1]} does not match PCA input {pca.F}")
    return (f - pca.mean) @ pca.basis.T
