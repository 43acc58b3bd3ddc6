"""Operation traces: text format, seeded generation and replay.

Text grammar (one op per line after a three-line header)::

    #DATN-TRACE v1
    n=<int> d=<int> a=<float>
    Q=<path> K=<path> V=<path>
    UK <i> <j> <delta>
    UV <i> <j> <delta>
    Q <i> <j>
    RC

Real literals are written with ``repr(float)``, the shortest decimal string that
reads back to the same double, so parse and serialize round-trip bit for bit.
Matrix paths are resolved relative to the trace file.

Generation uses ``numpy.random.default_rng(seed)`` (PCG64) and draws, in order:
Q, K, V, then per op its kind, indices and delta. Q and K entries are uniform in
``[-value_scale, value_scale]``; V entries uniform in ``[1, 2]``. K deltas that would
push a logit beyond ``MAX_LOGIT`` are redrawn, and V deltas that would drop an entry
below ``V_FLOOR`` have their sign flipped, so every answer stays well away from 0
and exp never overflows.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .linalg import NonFiniteError, read_matrix, write_matrix
from .static import attention
from .structure import DynamicAttention

MAGIC = "#DATN-TRACE v1"
KINDS = ("UK", "UV", "Q", "RC")
MAX_LOGIT = 30.0
V_FLOOR = 0.5
MAX_ATTEMPTS = 100


class TraceParseError(ValueError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ReplayError(RuntimeError):
    def __init__(self, op_index, cause):
        self.op_index = op_index
        super().__init__(f"op {op_index}: {cause}")


@dataclass(frozen=True)
class TraceOp:
    kind: str
    i: int = 0
    j: int = 0
    delta: float | None = None

    def to_line(self) -> str:
        if self.kind == "RC":
            return "RC"
        if self.kind == "Q":
            return f"Q {self.i} {self.j}"
        return f"{self.kind} {self.i} {self.j} {self.delta!r}"


@dataclass
class Trace:
    n: int
    d: int
    a: float
    ops: list = field(default_factory=list)
    matrix_refs: tuple = ("Q.datn", "K.datn", "V.datn")
    # Q, K, V held in memory (e.g. straight from ``generate``); not part of the text
    matrices: tuple | None = field(default=None, compare=False, repr=False)

    def num_queries(self) -> int:
        return sum(op.kind == "Q" for op in self.ops)


def serialize(trace: Trace) -> str:
    q, k, v = trace.matrix_refs
    lines = [MAGIC, f"n={trace.n} d={trace.d} a={float(trace.a)!r}", f"Q={q} K={k} V={v}"]
    lines += [op.to_line() for op in trace.ops]
    return "\n".join(lines) + "\n"


def _parse_real(tok, lineno):
    try:
        x = float(tok)
    except ValueError:
        raise TraceParseError(lineno, f"invalid real literal {tok!r}") from None
    if not math.isfinite(x):
        raise TraceParseError(lineno, f"non-finite literal {tok!r}")
    return x


def _parse_int(tok, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise TraceParseError(lineno, f"invalid {what} {tok!r}") from None


def _parse_fields(line, lineno, keys):
    parts = line.split()
    out = {}
    for part in parts:
        key, sep, val = part.partition("=")
        if not sep or key not in keys or key in out:
            raise TraceParseError(lineno, f"unexpected header field {part!r}")
        out[key] = val
    missing = [k for k in keys if k not in out]
    if missing:
        raise TraceParseError(lineno, f"missing header field(s) {', '.join(missing)}")
    return out


def parse(text: str) -> Trace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != MAGIC:
        raise TraceParseError(1, f"expected {MAGIC!r}")
    if len(lines) < 3:
        raise TraceParseError(len(lines) + 1, "truncated header")
    dims = _parse_fields(lines[1], 2, ("n", "d", "a"))
    n = _parse_int(dims["n"], 2, "n")
    d = _parse_int(dims["d"], 2, "d")
    a = _parse_real(dims["a"], 2)
    if n < 1 or d < 1:
        raise TraceParseError(2, f"dimensions must be positive, got n={n} d={d}")
    if not (0 < a <= 1):
        raise TraceParseError(2, f"a must lie in (0, 1], got {a!r}")
    refs = _parse_fields(lines[2], 3, ("Q", "K", "V"))

    ops = []
    for lineno, line in enumerate(lines[3:], start=4):
        toks = line.split()
        if not toks:
            continue
        kind = toks[0]
        if kind == "RC":
            if len(toks) != 1:
                raise TraceParseError(lineno, "RC takes no arguments")
            ops.append(TraceOp("RC"))
            continue
        if kind not in ("UK", "UV", "Q"):
            raise TraceParseError(lineno, f"unknown op {kind!r}")
        want = 3 if kind == "Q" else 4
        if len(toks) != want:
            raise TraceParseError(lineno, f"{kind} expects {want - 1} arguments, got {len(toks) - 1}")
        i = _parse_int(toks[1], lineno, "row index")
        j = _parse_int(toks[2], lineno, "column index")
        if not (0 <= i < n and 0 <= j < d):
            raise TraceParseError(lineno, f"index ({i}, {j}) out of range for n={n} d={d}")
        delta = None if kind == "Q" else _parse_real(toks[3], lineno)
        ops.append(TraceOp(kind, i, j, delta))
    return Trace(n, d, a, ops, (refs["Q"], refs["K"], refs["V"]))


def load(path) -> Trace:
    """Parse a trace file and load the matrices it references."""
    with open(path) as fh:
        trace = parse(fh.read())
    base = os.path.dirname(os.path.abspath(path))
    mats = tuple(read_matrix(os.path.join(base, ref)) for ref in trace.matrix_refs)
    for name, m in zip("QKV", mats):
        if m.shape != (trace.n, trace.d):
            raise ValueError(f"{name} matrix has shape {m.shape}, header declares {trace.n}x{trace.d}")
    trace.matrices = mats
    return trace


def save(trace: Trace, path) -> None:
    """Write the trace text and, if attached, its matrices next to it."""
    base = os.path.dirname(os.path.abspath(path))
    if trace.matrices is not None:
        for ref, m in zip(trace.matrix_refs, trace.matrices):
            write_matrix(os.path.join(base, ref), m)
    with open(path, "w") as fh:
        fh.write(serialize(trace))


def generate(n, d, a, num_ops, mix=(0.4, 0.3, 0.3), value_scale=0.5, seed=0,
             matrix_ext=".datn") -> Trace:
    """Seeded random trace. ``mix`` gives the probabilities of UK, UV and Q ops."""
    if n < 1 or d < 1:
        raise ValueError(f"dimensions must be positive, got n={n} d={d}")
    if not (0 < a <= 1):
        raise ValueError(f"a must lie in (0, 1], got {a!r}")
    if num_ops < 0:
        raise ValueError("num_ops must be non-negative")
    mix = np.asarray(mix, dtype=np.float64)
    if mix.shape != (3,) or (mix < 0).any() or abs(mix.sum() - 1) > 1e-9:
        raise ValueError(f"mix must be three non-negative probabilities summing to 1, got {mix.tolist()}")
    if not value_scale > 0:
        raise ValueError("value_scale must be positive")

    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        Q = rng.uniform(-value_scale, value_scale, (n, d))
        K = rng.uniform(-value_scale, value_scale, (n, d))
        M = Q @ K.T
        if np.abs(M).max() <= MAX_LOGIT:
            break
    else:
        raise ValueError(f"value_scale={value_scale!r} too large: no instance with |QK^T| <= {MAX_LOGIT}")
    V = rng.uniform(1.0, 2.0, (n, d))
    Vlog = V.copy()

    p = mix / mix.sum()
    ops = []
    for _ in range(num_ops):
        kind = ("UK", "UV", "Q")[int(rng.choice(3, p=p))]
        i, j = int(rng.integers(n)), int(rng.integers(d))
        if kind == "Q":
            ops.append(TraceOp("Q", i, j))
            continue
        if kind == "UK":
            for _ in range(MAX_ATTEMPTS):
                delta = float(rng.uniform(-value_scale, value_scale))
                col = M[:, i] + delta * Q[:, j]
                if np.abs(col).max() <= MAX_LOGIT:
                    break
            else:
                raise ValueError("could not draw a K delta that keeps logits bounded")
            M[:, i] = col
        else:
            delta = float(rng.uniform(-value_scale, value_scale))
            if Vlog[i, j] + delta < V_FLOOR:
                delta = -delta
            Vlog[i, j] += delta
        ops.append(TraceOp(kind, i, j, delta))

    refs = tuple(f"{name}{matrix_ext}" for name in "QKV")
    return Trace(n, d, float(a), ops, refs, matrices=(Q, K, V))


def _matrices(trace, base_dir=None):
    if trace.matrices is not None:
        return trace.matrices
    base = base_dir or "."
    return tuple(read_matrix(os.path.join(base, ref)) for ref in trace.matrix_refs)


def replay(trace: Trace, engine="dynattn", base_dir=None, structure=None, **structure_kwargs) -> list:
    """Run every op and return the query answers in order.

    ``engine="oracle"`` recomputes the full attention from scratch for each query;
    ``engine="dynattn"`` drives a :class:`DynamicAttention` (pass ``structure`` to
    reuse one you want to inspect afterwards).
    """
    Q, K, V = _matrices(trace, base_dir)
    answers = []
    if engine == "oracle":
        K, V = K.copy(), V.copy()
        for t, op in enumerate(trace.ops):
            if op.kind == "UK":
                K[op.i, op.j] += op.delta
            elif op.kind == "UV":
                V[op.i, op.j] += op.delta
            elif op.kind == "Q":
                try:
                    answers.append(float(attention(Q, K, V)[op.i, op.j]))
                except NonFiniteError as exc:
                    raise ReplayError(t, exc) from exc
        return answers
    if engine != "dynattn":
        raise ValueError(f"unknown engine {engine!r}")

    try:
        ds = structure or DynamicAttention(Q, K, V, a=trace.a, **structure_kwargs)
    except NonFiniteError as exc:
        raise ReplayError(-1, exc) from exc
    for t, op in enumerate(trace.ops):
        try:
            if op.kind == "UK":
                ds.update_k(op.i, op.j, op.delta)
            elif op.kind == "UV":
                ds.update_v(op.i, op.j, op.delta)
            elif op.kind == "Q":
                answers.append(ds.query(op.i, op.j))
            else:
                ds.recompute()
        except NonFiniteError as exc:
            raise ReplayError(t, exc) from exc
    return answers


def format_answers(answers) -> str:
    return "".join(f"{float(x)!r}\n" for x in answers)


def parse_answers(text) -> list:
    return [float(line) for line in text.split("\n") if line.strip()]
