"""Self-describing text containers used by every persisted artifact.

Layout::

    #gaitkit-<kind> v1 key=value ...
    <record-name> key=value key=value
    array <name> <d0>,<d1>,...
    <row 0 values>
    ...

Arrays are written row-major as ``shape[0]`` lines of space separated values
with 9 significant digits by default (17 reproduces a float exactly).
Writing is deterministic, so a load/dump cycle is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

VERSION = "v1"


def fmt(x: float, digits: int = 9) -> str:
    return "%.*g" % (digits, x)


def quantize(a, digits: int = 9):
    """Round values to what a text round trip through ``fmt`` reproduces."""
    a = np.asarray(a, dtype=float)
    flat = np.array([float(fmt(v, digits)) for v in a.ravel()], dtype=float)
    return flat.reshape(a.shape)


def _check_token(s: str, what: str) -> str:
    s = str(s)
    if not s or any(c.isspace() for c in s) or "=" in s:
        raise FormatError(f"{what} {s!r} must be a non-empty token without spaces or '='")
    return s


def _fields(items: dict, digits: int = 9) -> str:
    parts = []
    for k, v in items.items():
        if isinstance(v, (float, np.floating)):
            v = fmt(v, digits)
        parts.append(f"{_check_token(k, 'key')}={_check_token(v, 'value')}")
    return " ".join(parts)


def _parse_fields(tokens, lineno):
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise FormatError(f"line {lineno}: expected key=value, got {tok!r}")
        out[key] = value
    return out


@dataclass
class Container:
    kind: str
    header: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)
    digits: int = 9

    def record(self, name):
        try:
            return self.records[name]
        except KeyError:
            raise FormatError(f"gaitkit-{self.kind}: missing record {name!r}") from None

    def array(self, name, shape=None):
        try:
            a = self.arrays[name]
        except KeyError:
            raise FormatError(f"gaitkit-{self.kind}: missing array {name!r}") from None
        if shape is not None and a.shape != tuple(shape):
            raise FormatError(f"array {name!r} has shape {a.shape}, expected {tuple(shape)}")
        return a


def dumps(c: Container) -> str:
    head = f"#gaitkit-{c.kind} {VERSION}"
    if c.header:
        head += " " + _fields(c.header, c.digits)
    lines = [head]
    for name, items in c.records.items():
        lines.append(f"{_check_token(name, 'record')} {_fields(items, c.digits)}".rstrip())
    for name, a in c.arrays.items():
        a = np.asarray(a, dtype=float)
        shape = a.shape if a.ndim else (1,)
        lines.append(f"array {_check_token(name, 'array')} {','.join(str(d) for d in shape)}")
        rows = a.reshape(shape[0], -1) if shape[0] else np.zeros((0, 0))
        for row in rows:
            lines.append(" ".join(fmt(v, c.digits) for v in row))
    return "\n".join(lines) + "\n"


def parse_header(line: str, kind: str) -> dict:
    """Validate a magic line and return its key=value fields."""
    tokens = line.split()
    magic = f"#gaitkit-{kind}"
    if not tokens or tokens[0] != magic:
        raise FormatError(f"line 1: expected header starting with {magic!r}")
    if len(tokens) < 2 or tokens[1] != VERSION:
        got = tokens[1] if len(tokens) > 1 else "<none>"
        raise FormatError(f"line 1: unsupported {magic} version {got!r} (expected {VERSION})")
    return _parse_fields(tokens[2:], 1)


def loads(text: str, kind: str) -> Container:
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"empty gaitkit-{kind} file")
    c = Container(kind, parse_header(lines[0], kind))
    i = 1
    while i < len(lines):
        lineno = i + 1
        tokens = lines[i].split()
        i += 1
        if not tokens:
            continue
        if tokens[0] != "array":
            c.records[tokens[0]] = _parse_fields(tokens[1:], lineno)
            continue
        if len(tokens) != 3:
            raise FormatError(f"line {lineno}: malformed array declaration")
        try:
            shape = tuple(int(d) for d in tokens[2].split(","))
        except ValueError:
            raise FormatError(f"line {lineno}: bad array shape {tokens[2]!r}") from None
        n_rows = shape[0]
        if i + n_rows > len(lines):
            raise FormatError(f"line {lineno}: array {tokens[1]!r} truncated")
        try:
            rows = [np.array(lines[i + r].split(), dtype=float) for r in range(n_rows)]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-numeric value in array {tokens[1]!r}") from exc
        i += n_rows
        flat = np.concatenate(rows) if rows else np.zeros(0)
        if flat.size != int(np.prod(shape)):
            raise FormatError(f"line {lineno}: array {tokens[1]!r} has {flat.size} values, shape {shape}")
        c.arrays[tokens[1]] = flat.reshape(shape)
    return c
