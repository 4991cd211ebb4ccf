"""Enrollment of a target user and sequential authentication of new walks.

An authentication profile holds everything needed after the shared CNN:
the PCA projection and one-class boundary for the target, the two score
densities and the sequential-test thresholds.  The CNN itself is referenced by
its content hash, not embedded, because it is shared by every profile.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import textio
from .cnn import CnnModel, dumps_cnn, extract_features
from .errors import FormatError, InsufficientDataError, ValidationError
from .osvm import DIGITS, OsvmModel, add_arrays, from_container, score_features, train_osvm
from .pca import apply as pca_apply, fit_pca
from .pipeline import PipelineConfig, preprocess_recording
from .sprt import ScoreModel, SprtConfig, SprtResult, fit_score_model, run_sprt

MIN_ENROLL = 10
PIPELINE_KEYS = ("rate_hz", "fir_cutoff", "cycle_cutoff", "phi_th", "template_alpha", "n", "use_gyro")


def cnn_fingerprint(model: CnnModel) -> str:
    return hashlib.sha256(dumps_cnn(model).encode()).hexdigest()


@dataclass(eq=False)
class AuthProfile:
    subject: str
    osvm: OsvmModel
    p1: ScoreModel
    p0: ScoreModel
    sprt: SprtConfig
    cnn_sha256: str
    pipeline: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, AuthProfile):
            return NotImplemented
        return (self.subject == other.subject and self.osvm == other.osvm and self.p1 == other.p1
                and self.p0 == other.p0 and self.sprt == other.sprt and self.cnn_sha256 == other.cnn_sha256
                and self.pipeline == other.pipeline)

    def pipeline_config(self, base: PipelineConfig | None = None) -> PipelineConfig:
        return (base or PipelineConfig()).replace(**self.pipeline)


def _features(cycles, cnn):
    return extract_features(list(cycles), cnn)


def enroll(target_cycles, cnn: CnnModel, bank_cycles, cfg: PipelineConfig | None = None,
           subject=None) -> AuthProfile:
    """Fit PCA + one-class SVM on the target and both score densities.

    A seeded ``score_holdout`` share of the target cycles is kept out of the
    boundary fit and scored to model genuine scores (p1); scores of the bank
    cycles (other people) model impostor scores (p0).
    """
    cfg = cfg or PipelineConfig()
    target_cycles = list(target_cycles)
    bank_cycles = list(bank_cycles)
    n = len(target_cycles)
    if n < MIN_ENROLL:
        raise InsufficientDataError(f"enrollment needs at least {MIN_ENROLL} target cycles, got {n}")
    rng = np.random.default_rng([cfg.seed, 3])
    order = rng.permutation(n)[:cfg.enroll_max_cycles]
    n_use = len(order)
    n_hold = max(30, int(np.ceil(cfg.score_holdout * n_use)))
    n_fit = n_use - n_hold
    need_fit = max(MIN_ENROLL, cnn.arch.features + 1)
    if n_fit < need_fit:
        raise InsufficientDataError(
            f"enrollment needs at least {need_fit + 30} target cycles ({need_fit} for the boundary, "
            f"30 held out for the score model), got {n_use}")
    if len(bank_cycles) < 30:
        raise InsufficientDataError(f"score bank needs at least 30 impostor cycles, got {len(bank_cycles)}")
    rows = {c.rows.shape[0] for c in target_cycles + bank_cycles}
    if rows != {cnn.arch.input_rows}:
        raise ValidationError(f"cycle rows {sorted(rows)} do not match the CNN input ({cnn.arch.input_rows})")

    f_all = _features([target_cycles[i] for i in order], cnn)
    f_fit, f_hold = f_all[:n_fit], f_all[n_fit:]
    pca = fit_pca(f_fit, cfg.pca_components, cfg.pca_mode)
    model = train_osvm(pca_apply(pca, f_fit), cfg.nu, cfg.gamma_rbf, pca=pca)
    pos = score_features(model, f_hold)
    neg = score_features(model, _features(bank_cycles, cnn))
    p1 = fit_score_model(pos, cfg.score_family, "target held-out scores")
    p0 = fit_score_model(neg, cfg.score_family, "score bank")
    sprt = SprtConfig(cfg.alpha_err, cfg.beta_err, cfg.max_cycles)
    subject = subject or str(target_cycles[0].subject)
    pipeline = {k: getattr(cfg, k) for k in PIPELINE_KEYS}
    return AuthProfile(subject, model, p1, p0, sprt, cnn_fingerprint(cnn), pipeline)


def authenticate_cycles(cycles, cnn: CnnModel, profile: AuthProfile) -> tuple:
    """Score cycles in order and run the sequential test; returns ``(SprtResult, scores)``."""
    cycles = list(cycles)
    if not cycles:
        raise InsufficientDataError("no walking cycles to authenticate")
    scores = score_features(profile.osvm, _features(cycles, cnn))
    return run_sprt(scores, profile.p0, profile.p1, profile.sprt), scores


def authenticate_recording(rec, cnn: CnnModel, profile: AuthProfile) -> tuple:
    check_cnn(cnn, profile)
    res = preprocess_recording(rec, profile.pipeline_config())
    if res.error:
        raise InsufficientDataError(f"recording {rec.session_id}: {res.error}")
    if not res.cycles:
        raise InsufficientDataError(f"recording {rec.session_id}: no usable walking cycles")
    return authenticate_cycles(res.cycles, cnn, profile)


def check_cnn(cnn: CnnModel, profile: AuthProfile):
    if cnn_fingerprint(cnn) != profile.cnn_sha256:
        raise ValidationError("CNN model does not match the one the profile was enrolled with")


# -- persistence ----------------------------------------------------------------

def _score_record(m: ScoreModel) -> dict:
    rec = {"family": m.family}
    if m.family == "gaussian":
        rec.update(mu=float(m.mu), sigma=float(m.sigma))
    else:
        rec.update(bandwidth=float(m.bandwidth), n=str(m.samples.size))
    return rec


def _score_model(c: textio.Container, name: str) -> ScoreModel:
    rec = c.record(name)
    try:
        if rec.get("family") == "gaussian":
            return ScoreModel("gaussian", mu=float(rec["mu"]), sigma=float(rec["sigma"]))
        if rec.get("family") == "kde":
            samples = c.array(f"{name}_samples", (int(rec["n"]),))
            return ScoreModel("kde", samples=samples, bandwidth=float(rec["bandwidth"]))
    except (KeyError, ValueError):
        raise FormatError(f"score model {name!r} is incomplete") from None
    except ValidationError as exc:
        raise FormatError(f"score model {name!r}: {exc}") from None
    raise FormatError(f"score model {name!r} has unknown family {rec.get('family')!r}")


def dumps_profile(p: AuthProfile) -> str:
    c = textio.Container("auth", {"subject": p.subject}, digits=DIGITS)
    c.records["cnn"] = {"sha256": p.cnn_sha256}
    c.records["pipeline"] = {k: (str(v) if not isinstance(v, float) else v) for k, v in p.pipeline.items()}
    c.records["sprt"] = {"alpha_err": float(p.sprt.alpha_err), "beta_err": float(p.sprt.beta_err),
                         "max_cycles": str(p.sprt.max_cycles), "A": float(p.sprt.A), "B": float(p.sprt.B)}
    c.records["p1"] = _score_record(p.p1)
    c.records["p0"] = _score_record(p.p0)
    m = p.osvm
    c.records["osvm"] = {"gamma": float(m.gamma_rbf), "nu": float(m.nu), "b": float(m.b),
                         "n_sv": str(m.n_sv), "dim": str(m.support_vectors.shape[1])}
    for name, sm in (("p1", p.p1), ("p0", p.p0)):
        if sm.family == "kde":
            c.arrays[f"{name}_samples"] = sm.samples
    add_arrays(c, m)
    return textio.dumps(c)


def loads_profile(text: str) -> AuthProfile:
    c = textio.loads(text, "auth")
    if "subject" not in c.header:
        raise FormatError("line 1: auth profile header needs subject=")
    try:
        sha = c.record("cnn")["sha256"]
        s = c.record("sprt")
        sprt = SprtConfig(float(s["alpha_err"]), float(s["beta_err"]), int(s["max_cycles"]),
                          float(s["A"]), float(s["B"]))
    except (KeyError, ValueError):
        raise FormatError("auth profile needs complete cnn and sprt records") from None
    except ValidationError as exc:
        raise FormatError(f"invalid sprt record: {exc}") from None
    base = PipelineConfig()
    pipeline = {}
    for k, raw in c.records.get("pipeline", {}).items():
        if k not in PIPELINE_KEYS:
            raise FormatError(f"unknown pipeline key {k!r} in auth profile")
        kind = type(getattr(base, k))
        pipeline[k] = (raw == "True") if kind is bool else kind(raw)
    return AuthProfile(c.header["subject"], from_container(c), _score_model(c, "p1"), _score_model(c, "p0"),
                       sprt, sha, pipeline)


def save_profile(p: AuthProfile, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_profile(p))


def load_profile(path) -> AuthProfile:
    with open(path, encoding="utf-8") as fh:
        return loads_profile(fh.read())


__all__ = ["AuthProfile", "SprtResult", "enroll", "authenticate_cycles", "authenticate_recording",
           "dumps_profile", "loads_profile", "save_profile", "load_profile", "cnn_fingerprint"]
