"""Wald's sequential probability ratio test over per-cycle one-class scores.

H1: the walker is the enrolled user (scores follow p1); H0: an impostor (p0).
Each cycle adds ``log p1(o) / p0(o)`` to the running statistic until it leaves
the interval ``(A, B)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, ParameterError, UsageError, ValidationError

PENDING, ACCEPT_H1, ACCEPT_H0 = "pending", "accept_H1", "accept_H0"
LOG_RATIO_CLAMP = 30.0
MIN_SCORES = 30
LOG_FLOOR = -745.0   # log of the smallest positive double, for vanishing KDE densities


@dataclass(eq=False)
class ScoreModel:
    """Density of one class's scores: ``gaussian`` (mu, sigma) or ``kde`` (samples, bandwidth)."""

    family: str
    mu: float = 0.0
    sigma: float = 1.0
    samples: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bandwidth: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).ravel()
        if self.family == "gaussian":
            if not self.sigma > 0 or not np.isfinite(self.mu):
                raise ValidationError("gaussian score model needs finite mu and sigma > 0")
        elif self.family == "kde":
            if self.samples.size == 0 or not self.bandwidth > 0:
                raise ValidationError("kde score model needs samples and a positive bandwidth")
        else:
            raise ValidationError(f"unknown score family {self.family!r}")

    def __eq__(self, other):
        if not isinstance(other, ScoreModel):
            return NotImplemented
        return (self.family == other.family and self.mu == other.mu and self.sigma == other.sigma
                and np.array_equal(self.samples, other.samples) and self.bandwidth == other.bandwidth)

    def logpdf(self, o):
        o = np.asarray(o, dtype=float)
        if self.family == "gaussian":
            return stats.norm.logpdf(o, self.mu, self.sigma)
        z = (o[..., None] - self.samples) / self.bandwidth
        lp = stats.norm.logpdf(z)
        out = np.logaddexp.reduce(lp, axis=-1) - np.log(self.samples.size * self.bandwidth)
        return np.maximum(out, LOG_FLOOR)

    def pdf(self, o):
        return np.exp(self.logpdf(o))


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(x.std(ddof=1), iqr / 1.34) if iqr > 0 else x.std(ddof=1)
    return float(0.9 * spread * len(x) ** -0.2)


def fit_score_model(scores, family: str = "gaussian", label: str = "class") -> ScoreModel:
    x = np.asarray(scores, dtype=float).ravel()
    if x.size < MIN_SCORES:
        raise InsufficientDataError(f"{label}: need at least {MIN_SCORES} scores, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{label}: scores contain non-finite values")
    if np.ptp(x) == 0:
        raise ValidationError(f"{label}: all scores identical, density is degenerate")
    if family == "gaussian":
        return ScoreModel("gaussian", mu=float(x.mean()), sigma=float(x.std()))
    if family == "kde":
        return ScoreModel("kde", samples=np.sort(x), bandwidth=silverman_bandwidth(x))
    raise ParameterError(f"unknown score family {family!r}")


def fit_score_models(pos_scores, neg_scores, family: str = "gaussian"):
    """Returns ``(p1, p0)``: target-class and impostor-class densities."""
    return (fit_score_model(pos_scores, family, "target scores"),
            fit_score_model(neg_scores, family, "impostor scores"))


def wald_thresholds(alpha_err: float, beta_err: float):
    """``A = log(beta / (1 - alpha))``, ``B = log((1 - beta) / alpha)``."""
    if not (0 < alpha_err < 1 and 0 < beta_err < 1) or alpha_err + beta_err > 1:
        raise ParameterError("alpha_err and beta_err must lie in (0, 1) with sum at most 1")
    return float(np.log(beta_err / (1 - alpha_err))), float(np.log((1 - beta_err) / alpha_err))


@dataclass(frozen=True)
class SprtConfig:
    alpha_err: float = 0.01
    beta_err: float = 0.01
    max_cycles: int = 30
    A: float = None
    B: float = None

    def __post_init__(self):
        a, b = wald_thresholds(self.alpha_err, self.beta_err)
        if self.A is None:
            object.__setattr__(self, "A", a)
        if self.B is None:
            object.__setattr__(self, "B", b)
        if self.max_cycles < 1:
            raise ParameterError("max_cycles must be >= 1")
        if self.A > self.B:
            raise ParameterError("threshold A must not exceed B")


@dataclass(frozen=True)
class SprtState:
    lambda_n: float = 0.0
    n: int = 0
    decision: str = PENDING


def log_ratio(o, p0: ScoreModel, p1: ScoreModel):
    return np.clip(p1.logpdf(o) - p0.logpdf(o), -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)


def sprt_step(state: SprtState, o: float, p0: ScoreModel, p1: ScoreModel, cfg: SprtConfig) -> SprtState:
    if state.decision != PENDING:
        raise UsageError(f"test already decided ({state.decision}); start a new state")
    lam = state.lambda_n + float(log_ratio(o, p0, p1))
    n = state.n + 1
    if lam >= cfg.B:
        decision = ACCEPT_H1
    elif lam <= cfg.A:
        decision = ACCEPT_H0
    elif n >= cfg.max_cycles:
        decision = ACCEPT_H1 if lam > 0 else ACCEPT_H0
    else:
        decision = PENDING
    return replace(state, lambda_n=lam, n=n, decision=decision)


@dataclass
class SprtResult:
    decision: str
    n_used: int
    trace: np.ndarray
    forced: bool = False   # decided by truncation or by running out of cycles


def run_sprt(scores, p0: ScoreModel, p1: ScoreModel, cfg: SprtConfig | None = None) -> SprtResult:
    """Fold :func:`sprt_step` over ``scores``.

    A stream that ends while the test is still pending is decided by the sign
    of the statistic, like a truncated test.
    """
    cfg = cfg or SprtConfig()
    state = SprtState()
    trace = []
    for o in scores:
        state = sprt_step(state, o, p0, p1, cfg)
        trace.append(state.lambda_n)
        if state.decision != PENDING:
            break
    if not trace:
        raise InsufficientDataError("no scores to test")
    forced = state.n >= cfg.max_cycles and cfg.A < state.lambda_n < cfg.B
    decision = state.decision
    if decision == PENDING:
        decision = ACCEPT_H1 if state.lambda_n > 0 else ACCEPT_H0
        forced = True
    return SprtResult(decision, state.n, np.array(trace), forced)


def run_sprt_batch(log_ratios, cfg: SprtConfig):
    """Vectorised run over an ``(n_trials, m)`` matrix of per-cycle log-ratios.

    Same rule as :func:`run_sprt`; returns ``(accept_h1, n_used)`` arrays.
    Used by the Monte Carlo evaluation.
    """
    lr = np.clip(np.asarray(log_ratios, dtype=float), -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
    m = min(lr.shape[1], cfg.max_cycles)
    lam = np.cumsum(lr[:, :m], axis=1)
    crossed = (lam >= cfg.B) | (lam <= cfg.A)
    hit = crossed.any(axis=1)
    first = np.where(hit, np.argmax(crossed, axis=1), m - 1)
    final = lam[np.arange(len(lam)), first]
    accept = np.where(hit, final >= cfg.B, final > 0)
    return accept, first + 1
