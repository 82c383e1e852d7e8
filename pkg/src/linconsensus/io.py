"""Text matrix files, edge lists and JSON simulation configs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import InputError
from .switched import SwitchingSignal


class ParseError(InputError):
    """Malformed input file; carries the 1-based line and column."""

    def __init__(self, path, line: int, column: int | None, message: str):
        self.path = str(path)
        self.line = line
        self.column = column
        where = f"{self.path}:{line}" + (f":{column}" if column is not None else "")
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class MatrixFile:
    """Square ``nm x nm`` matrix with its block shape ``(n, m)``."""

    A: np.ndarray
    n: int
    m: int


def _content_lines(text: str):
    """Yield ``(line_number, [(column, token), ...])`` for non-comment, non-blank lines."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = []
        col = 0
        for tok in raw.split():
            col = raw.index(tok, col)
            tokens.append((col + 1, tok))
            col += len(tok)
        yield lineno, tokens


def _parse_real(path, lineno: int, col: int, tok: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(path, lineno, col, f"cannot parse {tok!r} as a real number") from None
    if not math.isfinite(v):
        raise ParseError(path, lineno, col, f"non-finite value {tok!r}")
    return v


def parse_matrix_text(text: str, path="<string>") -> MatrixFile:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError(path, 1, None, "empty matrix file; expected header 'n m'")
    lineno, header = lines[0]
    if len(header) != 2:
        raise ParseError(path, lineno, None, f"header must be two integers 'n m', got {len(header)} tokens")
    dims = []
    for col, tok in header:
        try:
            dims.append(int(tok))
        except ValueError:
            raise ParseError(path, lineno, col, f"cannot parse {tok!r} as an integer") from None
    n, m = dims
    if n < 1 or m < 1:
        raise ParseError(path, lineno, None, f"dimensions must be positive, got n={n}, m={m}")
    k = n * m
    rows = lines[1:]
    if len(rows) != k:
        at = rows[k][0] if len(rows) > k else (rows[-1][0] if rows else lineno)
        raise ParseError(path, at, None, f"expected {k} matrix rows, found {len(rows)}")
    A = np.empty((k, k))
    for r, (ln, toks) in enumerate(rows):
        if len(toks) != k:
            raise ParseError(path, ln, None, f"expected {k} entries, found {len(toks)}")
        for c, (col, tok) in enumerate(toks):
            A[r, c] = _parse_real(path, ln, col, tok)
    return MatrixFile(A=A, n=n, m=m)


def read_matrix(path) -> MatrixFile:
    path = Path(path)
    return parse_matrix_text(path.read_text(), path)


def format_matrix(A, n: int, m: int, comment: str | None = None) -> str:
    """Serialize with 17 significant digits so reading back is bit-identical."""
    A = np.asarray(A, dtype=float)
    out = []
    if comment:
        out.extend(f"# {line}" for line in comment.splitlines())
    out.append(f"{n} {m}")
    for row in A:
        out.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(out) + "\n"


def write_matrix(path, A, n: int, m: int, comment: str | None = None) -> None:
    Path(path).write_text(format_matrix(A, n, m, comment))


def parse_edge_list(text: str, path="<string>") -> list[tuple[int, int]]:
    """1-based ``u v`` lines converted to 0-based pairs; ``#`` lines are comments."""
    edges = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, toks in _content_lines(text):
        if len(toks) != 2:
            raise ParseError(path, lineno, None, f"edge line needs two vertex indices, got {len(toks)} tokens")
        ends = []
        for col, tok in toks:
            try:
                v = int(tok)
            except ValueError:
                raise ParseError(path, lineno, col, f"cannot parse {tok!r} as a vertex index") from None
            if v < 1:
                raise ParseError(path, lineno, col, f"vertex indices are 1-based, got {v}")
            ends.append(v - 1)
        u, v = ends
        if u == v:
            raise ParseError(path, lineno, None, f"self-loop at vertex {u + 1}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ParseError(path, lineno, None, f"duplicate edge {key[0] + 1}-{key[1] + 1} (first on line {seen[key]})")
        seen[key] = lineno
        edges.append((u, v))
    if not edges:
        raise ParseError(path, 1, None, "edge list is empty")
    return edges


def load_schema(name: str) -> dict[str, Any]:
    """JSON schema shipped with the package (``verdict``, ``chi``, ``audit``, ``simulation-config``)."""
    text = resources.files("linconsensus").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(instance: Any, schema_name: str) -> None:
    jsonschema.validate(instance, load_schema(schema_name))


@dataclass
class SimulationConfig:
    subsystems: list[MatrixFile]
    F: np.ndarray | None
    signal: SwitchingSignal
    x0: np.ndarray
    sample_dt: float


def _matrix_rows(value, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise InputError(f"{what} must be a 2-D array of finite numbers")
    return arr


def load_simulation_config(path) -> SimulationConfig:
    """Read and schema-validate a config; relative paths resolve against its directory.

    ``F`` may be omitted, in which case the caller uses the plain average
    ``(1/n)[I ... I]``. Subsystem indices in explicit schedules are 0-based.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.colno, f"invalid JSON: {exc.msg}") from None
    try:
        validate(doc, "simulation-config")
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{path}: config invalid at {loc}: {exc.message}") from None
    base = path.parent
    subs = [read_matrix(base / p) for p in doc["subsystems"]]
    n, m = subs[0].n, subs[0].m
    for p, s in zip(doc["subsystems"], subs):
        if (s.n, s.m) != (n, m):
            raise InputError(f"{p}: block shape {(s.n, s.m)} differs from {(n, m)}")

    F = None
    if "F" in doc:
        spec = doc["F"]
        if isinstance(spec, dict):
            # plain whitespace table without a header, '#' comments allowed
            try:
                F = np.atleast_2d(np.loadtxt(base / spec["file"], comments="#", ndmin=2))
            except ValueError as exc:
                raise InputError(f"{spec['file']}: {exc}") from None
            F = _matrix_rows(F, "F")
        else:
            F = _matrix_rows(spec, "F")
        if F.shape != (m, n * m):
            raise InputError(f"F must be {m} x {n * m}, got {F.shape[0]} x {F.shape[1]}")

    sched = doc["schedule"]
    if "segments" in sched:
        signal = SwitchingSignal(tuple((seg["duration"], seg["subsystem"]) for seg in sched["segments"]))
    else:
        rnd = sched["random"]
        signal = SwitchingSignal.random(
            len(subs),
            total_time=float(rnd.get("total_time", 20.0)),
            seed=rnd["seed"],
            dwell=(float(rnd.get("dwell_min", 0.1)), float(rnd.get("dwell_max", 2.0))),
        )
    for _, s in signal.segments:
        if s >= len(subs):
            raise InputError(f"schedule selects subsystem {s}; only {len(subs)} listed (indices are 0-based)")

    x0_spec = doc["x0"]
    if isinstance(x0_spec, dict):
        x0 = np.random.default_rng(x0_spec["random"]["seed"]).standard_normal(n * m)
    else:
        x0 = np.asarray(x0_spec, dtype=float)
        if x0.shape != (n * m,):
            raise InputError(f"x0 must have {n * m} entries, got {x0.size}")
    return SimulationConfig(subsystems=subs, F=F, signal=signal, x0=x0,
                            sample_dt=float(doc.get("sample_dt", 0.01)))
