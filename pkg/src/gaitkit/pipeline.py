"""Configuration and the recording -> cycle-matrix preprocessing chain."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .cycles import locate_cycles
from .errors import GaitkitError, ParameterError, ParseError
from .ingest import Recording, align_streams, lowpass_fir
from .normalize import assemble_input
from .orientation import transform_cycle


@dataclass
class PipelineConfig:
    """Every tunable of the toolkit; defaults are the published constants where one exists."""

    rate_hz: float = 200.0
    fir_cutoff: float = 40.0
    cycle_cutoff: float = 3.0
    phi_th: float = 0.3
    template_alpha: float = 0.9
    n: int = 200
    use_gyro: bool = True
    # CNN architecture and training
    q1: int = 20
    q2: int = 40
    features: int = 40
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 20
    n_train: int = 40
    n_test: int = 100
    val_fraction: float = 0.2
    # one-class SVM and feature selection
    nu: float = 0.02
    gamma_rbf: float = 0.3
    pca_components: int = 20
    pca_mode: str = "lowest"
    enroll_max_cycles: int = 1000
    score_holdout: float = 0.25
    # sequential test
    alpha_err: float = 0.01
    beta_err: float = 0.01
    max_cycles: int = 30
    score_family: str = "gaussian"
    seed: int = 0
    jobs: int = 1

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name, raw, kind):
    if kind is bool:
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"config key {name!r}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ParameterError(f"config key {name!r}: cannot parse {raw!r} as {kind.__name__}") from None


_TYPES = {f.name: {"float": float, "int": int, "bool": bool, "str": str}[f.type]
          for f in dataclasses.fields(PipelineConfig)}


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ParseError(f"expected key=value, got {line!r}", lineno)
        if key not in _TYPES:
            raise ParseError(f"unknown config key {key!r}", lineno)
        values[key] = _coerce(key, raw.strip(), _TYPES[key])
    return apply_overrides(base or PipelineConfig(), values)


def apply_overrides(cfg: PipelineConfig, values: dict) -> PipelineConfig:
    clean = {}
    for k, v in values.items():
        if v is None:
            continue
        if k not in _TYPES:
            raise ParameterError(f"unknown config key {k!r}")
        clean[k] = _coerce(k, v, _TYPES[k]) if isinstance(v, str) and _TYPES[k] is not str else v
    cfg = cfg.replace(**clean)
    validate_config(cfg)
    return cfg


def validate_config(cfg: PipelineConfig):
    if cfg.pca_mode not in ("lowest", "highest"):
        raise ParameterError("pca_mode must be 'lowest' or 'highest'")
    if cfg.score_family not in ("gaussian", "kde"):
        raise ParameterError("score_family must be 'gaussian' or 'kde'")
    if not 0 < cfg.nu < 1:
        raise ParameterError("nu must lie in (0, 1)")
    if cfg.patience < 1 or cfg.batch_size < 1 or cfg.max_epochs < 1:
        raise ParameterError("patience, batch_size and max_epochs must be >= 1")


def dumps_config(cfg: PipelineConfig) -> str:
    return "".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))


@dataclass
class PreprocessResult:
    subject: str
    session: str
    cycles: list = field(default_factory=list)   # CycleMatrix
    minima: list = field(default_factory=list)
    phi: object = None
    dropped: list = field(default_factory=list)  # (start, end, reason)
    error: str | None = None


def preprocess_recording(rec: Recording, cfg: PipelineConfig | None = None) -> PreprocessResult:
    """Ingest -> cycles -> orientation transform -> fixed-size standardised matrices.

    Recording-level failures (too short, no gait) are reported in ``error``
    rather than raised; per-cycle failures become drop reasons.
    """
    cfg = cfg or PipelineConfig()
    res = PreprocessResult(rec.subject_id, rec.session_id)
    try:
        accel, gyro = align_streams(rec, cfg.rate_hz)
        accel = lowpass_fir(accel, cfg.fir_cutoff)
        gyro = lowpass_fir(gyro, cfg.fir_cutoff)
        seg = locate_cycles(accel, gyro, cfg.phi_th, cfg.template_alpha, cfg.cycle_cutoff)
    except GaitkitError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    res.minima, res.phi, res.dropped = seg.minima, seg.phi, list(seg.dropped)
    for cyc in seg.cycles:
        try:
            oc = transform_cycle(cyc)
            res.cycles.append(assemble_input(oc, cfg.n, cfg.use_gyro, rec.subject_id, rec.session_id))
        except GaitkitError as exc:
            res.dropped.append((cyc.start_index, cyc.end_index, f"{type(exc).__name__}: {exc}"))
    return res
