"""nu one-class SVM with an RBF kernel, solved in the dual by SMO.

Dual problem solved here::

    min  0.5 a^T Q a    s.t.  0 <= a_i <= 1/(nu l),  sum(a) = 1,

with ``Q_ij = exp(-gamma |s_i - s_j|^2)``.  The score of a vector is
``h(s) = sum_j a_j k(s_j, s) - b``, positive inside the learned boundary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import textio
from .errors import ConvergenceError, FormatError, InsufficientDataError, ParameterError, ValidationError
from .pca import PcaTransform, apply as pca_apply

log = logging.getLogger(__name__)

ALPHA_EPS = 1e-12
TAU = 1e-12
MAX_UPDATES = 1_000_000
MIN_TRAIN = 10
DIGITS = 17  # profiles must score bit-identically after a reload


@dataclass(eq=False)
class OsvmModel:
    support_vectors: np.ndarray   # (n_sv, S), already in PCA space
    alphas: np.ndarray
    b: float
    gamma_rbf: float
    nu: float
    pca: PcaTransform | None = None

    def __post_init__(self):
        self.support_vectors = np.atleast_2d(np.asarray(self.support_vectors, dtype=float))
        self.alphas = np.asarray(self.alphas, dtype=float).ravel()
        self.b = float(self.b)
        if len(self.alphas) != len(self.support_vectors):
            raise ValidationError("one alpha per support vector required")
        if np.any(self.alphas <= 0):
            raise ValidationError("support-vector coefficients must be positive")
        if not 0 < self.nu < 1 and self.nu != 1.0:
            raise ValidationError("nu must lie in (0, 1]")
        if self.gamma_rbf < 0:
            raise ValidationError("gamma_rbf must be non-negative")
        if self.pca is not None and self.pca.S != self.support_vectors.shape[1]:
            raise ValidationError("PCA output dimension differs from support-vector dimension")

    def __eq__(self, other):
        if not isinstance(other, OsvmModel):
            return NotImplemented
        return (np.array_equal(self.support_vectors, other.support_vectors)
                and np.array_equal(self.alphas, other.alphas) and self.b == other.b
                and self.gamma_rbf == other.gamma_rbf and self.nu == other.nu and self.pca == other.pca)

    @property
    def n_sv(self) -> int:
        return len(self.alphas)


def rbf_kernel(s, s_prime, gamma_rbf: float) -> float:
    d = np.asarray(s, dtype=float) - np.asarray(s_prime, dtype=float)
    return float(np.exp(-gamma_rbf * np.dot(d, d)))


def kernel_matrix(x, y, gamma_rbf: float) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    return np.exp(-gamma_rbf * cdist(x, y, "sqeuclidean"))


def offset_from_gradient(a, g, c, eps: float = ALPHA_EPS) -> float:
    """Offset ``b`` from the dual gradient ``g = Q a``.

    At the optimum every free (margin) support vector has the same ``g``; the
    solver only equalises them to within its tolerance, so the smallest of
    them is taken and margin vectors score ``h >= 0`` instead of a roundoff
    coin flip.  Without free vectors, the midpoint of the KKT-feasible interval.
    """
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    free = (a > eps) & (a < c - eps)
    if free.any():
        return float(g[free].min())
    at_c = a >= c - eps
    at_0 = a <= eps
    hi = g[at_0].min() if at_0.any() else g.max()
    lo = g[at_c].max() if at_c.any() else g.min()
    return float(0.5 * (lo + hi))


def _smo(q, c, tol, max_updates):
    ell = len(q)
    a = np.full(ell, 1.0 / ell)
    g = q @ a
    diag = np.diag(q)
    for it in range(max_updates + 1):
        up = a < c - ALPHA_EPS      # may still grow
        low = a > ALPHA_EPS         # may still shrink
        gu = np.where(up, g, np.inf)
        gl = np.where(low, g, -np.inf)
        i = int(np.argmin(gu))
        j = int(np.argmax(gl))
        viol = gl[j] - gu[i]
        if viol <= tol or i == j:
            return a, g, it, max(viol, 0.0)
        if it == max_updates:
            break
        curv = max(diag[i] + diag[j] - 2.0 * q[i, j], TAU)
        delta = min(viol / curv, c - a[i], a[j])
        a[i] += delta
        a[j] -= delta
        g += delta * (q[:, i] - q[:, j])
    raise ConvergenceError(f"SMO did not converge after {max_updates} updates (KKT violation {viol:.3g})", viol)


def train_osvm(train, nu: float = 0.02, gamma_rbf: float = 0.3, tol: float = 1e-8,
               max_updates: int = MAX_UPDATES, pca: PcaTransform | None = None) -> OsvmModel:
    """Fit the boundary to ``train`` (``l x S``, already PCA-projected), ``l >= 10``."""
    s = np.atleast_2d(np.asarray(train, dtype=float))
    if len(s) < MIN_TRAIN:
        raise InsufficientDataError(f"one-class training needs at least {MIN_TRAIN} vectors, got {len(s)}")
    return solve_dual(s, nu, gamma_rbf, tol, max_updates, pca)


def solve_dual(train, nu: float, gamma_rbf: float, tol: float = 1e-8, max_updates: int = MAX_UPDATES,
               pca: PcaTransform | None = None) -> OsvmModel:
    """SMO solve of the dual for any training-set size (no minimum-size guard)."""
    s = np.atleast_2d(np.asarray(train, dtype=float))
    ell = len(s)
    if not 0 < nu <= 1:
        raise ParameterError("nu must lie in (0, 1]")
    if gamma_rbf < 0:
        raise ParameterError("gamma_rbf must be non-negative")
    if ell < 1 or not np.all(np.isfinite(s)):
        raise ValidationError("training vectors must be a non-empty finite matrix")
    c = 1.0 / (nu * ell)
    q = kernel_matrix(s, s, gamma_rbf)
    a, g, n_updates, viol = _smo(q, c, tol, max_updates)
    log.debug("SMO: %d updates, final violation %.3g", n_updates, viol)
    keep = a > ALPHA_EPS
    # b from the expansion exactly as score() will evaluate it
    model = OsvmModel(s[keep], a[keep], 0.0, gamma_rbf, nu, pca)
    g_exact = decision_values(model, s)
    model.b = offset_from_gradient(a, g_exact, c)
    return model


def decision_values(model: OsvmModel, s) -> np.ndarray:
    """``sum_j a_j k(s_j, s)`` for each row of ``s`` (no offset)."""
    return kernel_matrix(s, model.support_vectors, model.gamma_rbf) @ model.alphas


def score(model: OsvmModel, s):
    """``h(s)``; a vector gives a float, an ``(n, S)`` stack gives an array."""
    s = np.asarray(s, dtype=float)
    h = decision_values(model, np.atleast_2d(s)) - model.b
    return float(h[0]) if s.ndim == 1 else h


def decide(model: OsvmModel, s):
    h = score(model, s)
    return np.where(np.asarray(h) >= 0, 1, -1) if np.ndim(h) else (1 if h >= 0 else -1)


def score_features(model: OsvmModel, f):
    """Score raw CNN features: PCA projection first when the model has one."""
    f = np.asarray(f, dtype=float)
    return score(model, pca_apply(model.pca, f) if model.pca is not None else f)


# -- persistence ----------------------------------------------------------------

def to_container(model: OsvmModel, kind: str = "osvm") -> textio.Container:
    c = textio.Container(kind, digits=DIGITS)
    c.records["osvm"] = {"gamma": float(model.gamma_rbf), "nu": float(model.nu), "b": float(model.b),
                         "n_sv": str(model.n_sv), "dim": str(model.support_vectors.shape[1])}
    add_arrays(c, model)
    return c


def add_arrays(c: textio.Container, model: OsvmModel, prefix: str = ""):
    c.arrays[prefix + "support_vectors"] = model.support_vectors
    c.arrays[prefix + "alphas"] = model.alphas
    if model.pca is not None:
        c.records["pca"] = {"S": str(model.pca.S), "F": str(model.pca.F)}
        c.arrays[prefix + "pca_mean"] = model.pca.mean
        c.arrays[prefix + "pca_basis"] = model.pca.basis
        c.arrays[prefix + "pca_variances"] = model.pca.component_variances


def from_container(c: textio.Container, prefix: str = "") -> OsvmModel:
    rec = c.record("osvm")
    try:
        gamma, nu, b = float(rec["gamma"]), float(rec["nu"]), float(rec["b"])
        n_sv, dim = int(rec["n_sv"]), int(rec["dim"])
    except (KeyError, ValueError):
        raise FormatError("osvm record needs gamma, nu, b, n_sv and dim") from None
    pca = None
    if "pca" in c.records:
        try:
            s_dim, f_dim = int(c.records["pca"]["S"]), int(c.records["pca"]["F"])
        except (KeyError, ValueError):
            raise FormatError("pca record needs S and F") from None
        pca = PcaTransform(c.array(prefix + "pca_mean", (f_dim,)), c.array(prefix + "pca_basis", (s_dim, f_dim)),
                           c.array(prefix + "pca_variances", (s_dim,)))
    try:
        return OsvmModel(c.array(prefix + "support_vectors", (n_sv, dim)), c.array(prefix + "alphas", (n_sv,)),
                         b, gamma, nu, pca)
    except ValidationError as exc:
        raise FormatError(f"invalid one-class model: {exc}") from None


def dumps_osvm(model: OsvmModel) -> str:
    return textio.dumps(to_container(model))


def loads_osvm(text: str) -> OsvmModel:
    return from_container(textio.loads(text, "osvm"))
