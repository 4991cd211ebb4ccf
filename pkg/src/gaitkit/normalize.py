"""Fixed-size, standardised cycle matrices and the cycle dataset file."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateCycleError, FormatError, InsufficientDataError, ValidationError
from .orientation import OrientedCycle
from .textio import fmt, parse_header

N_DEFAULT = 200
ROW_NAMES = ("a_xi", "a_psi", "a_zeta", "a_mag", "g_xi", "g_psi", "g_zeta", "g_mag")
ACCEL_ROWS = ROW_NAMES[:4]


@dataclass
class CycleMatrix:
    """Network input for one cycle: 8 (or 4 without gyro) z-scored rows of N samples."""

    rows: np.ndarray
    subject: str | None = None
    session: str | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[0] not in (4, 8):
            raise ValidationError(f"cycle matrix must have 4 or 8 rows, got shape {self.rows.shape}")

    @property
    def n(self) -> int:
        return self.rows.shape[1]


def magnitudes(oc: OrientedCycle):
    return np.sqrt(np.sum(oc.accel ** 2, axis=0)), np.sqrt(np.sum(oc.gyro ** 2, axis=0))


def resample_cycle(v, n: int = N_DEFAULT) -> np.ndarray:
    """Cubic-spline resample onto ``n`` points spanning the same index range."""
    v = np.asarray(v, dtype=float)
    if len(v) < 4:
        raise InsufficientDataError(f"need at least 4 samples to resample a cycle, got {len(v)}")
    x = np.arange(len(v), dtype=float)
    grid = np.linspace(0.0, len(v) - 1.0, n)
    out = CubicSpline(x, v)(grid)
    out[0], out[-1] = v[0], v[-1]
    return out


def zscore(v) -> np.ndarray:
    """Zero mean, unit population variance."""
    v = np.asarray(v, dtype=float)
    var = v.var()
    if var <= 1e-12:
        raise DegenerateCycleError("cannot standardise a (near) constant row")
    return (v - v.mean()) / np.sqrt(var)


def assemble_input(oc: OrientedCycle, n: int = N_DEFAULT, use_gyro: bool = True,
                   subject=None, session=None) -> CycleMatrix:
    a_mag, g_mag = magnitudes(oc)
    rows = [oc.a_xi, oc.a_psi, oc.a_zeta, a_mag]
    if use_gyro:
        rows += [oc.g_xi, oc.g_psi, oc.g_zeta, g_mag]
    return CycleMatrix(np.vstack([zscore(resample_cycle(r, n)) for r in rows]), subject, session)


# -- dataset file --------------------------------------------------------------

def dumps_dataset(cycles, n_rows=None, n=None) -> str:
    cycles = list(cycles)
    if n_rows is None or n is None:
        if not cycles:
            raise ValidationError("empty dataset needs explicit rows and n")
        n_rows, n = cycles[0].rows.shape
    lines = [f"#gaitkit-cyc v1 rows={n_rows} n={n}"]
    for c in cycles:
        if c.rows.shape != (n_rows, n):
            raise ValidationError(f"cycle shape {c.rows.shape} differs from dataset shape {(n_rows, n)}")
        lines.append(f"cycle subject={c.subject} session={c.session}")
        lines.extend(" ".join(fmt(x) for x in row) for row in c.rows)
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> list:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty cycle dataset")
    header = parse_header(lines[0], "cyc")
    try:
        n_rows, n = int(header["rows"]), int(header["n"])
    except (KeyError, ValueError):
        raise FormatError("line 1: cycle dataset header needs rows=<4|8> n=<int>") from None
    if n_rows not in (4, 8) or n < 4:
        raise FormatError(f"line 1: unsupported dataset shape rows={n_rows} n={n}")
    out = []
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        tokens = lines[i].split()
        if tokens[0] != "cycle":
            raise FormatError(f"line {i + 1}: expected a 'cycle' record")
        fields = dict(t.partition("=")[::2] for t in tokens[1:])
        if "subject" not in fields or "session" not in fields:
            raise FormatError(f"line {i + 1}: cycle record needs subject= and session=")
        block = lines[i + 1:i + 1 + n_rows]
        if len(block) != n_rows:
            raise FormatError(f"line {i + 1}: truncated cycle record")
        try:
            rows = np.array([np.array(b.split(), dtype=float) for b in block])
        except ValueError:
            raise FormatError(f"line {i + 2}: malformed cycle values") from None
        if rows.shape != (n_rows, n):
            raise FormatError(f"line {i + 2}: cycle rows do not match header shape ({n_rows}, {n})")
        out.append(CycleMatrix(rows, fields["subject"], fields["session"]))
        i += 1 + n_rows
    return out


def save_dataset(cycles, path, n_rows=None, n=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_dataset(cycles, n_rows, n))


def load_dataset(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return loads_dataset(fh.read())
