"""Hinted matrix-vector reductions onto the attention structure, checked by brute force.

Two constructions map a boolean instance ``(M, P, V)`` onto attention inputs so
that querying the dynamic structure recovers the boolean product ``M P V``:

* unnormalized (``oamv``): ``Q = M``, ``K = 0``, ``V = V``; the updates then set
  ``K^T = P``. Entry ``(j, i)`` of ``(exp(Q K^T) - 1) V`` is positive exactly when
  ``(M P V)[j, i] = 1``.
* normalized (``odamv``): ``Q = [[M, 1-M], [0, 0]]``, ``V = [[V, 0], [0, 0]]`` (all
  blocks n x n), ``K = 0`` and then ``K^T = blockdiag(P, P)`` for diagonal ``P``.
  Every one of the first n rows of ``Q`` has exactly n ones, so the row sums of
  ``exp(Q K^T)`` are known in closed form and can be divided back out.

A positive entry is a sum of terms each at least ``e - 1``, so "positive" is
tested as ``> eps`` with a small ``eps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .linalg import ShapeError
from .structure import DynamicAttention

MAX_N = 64
DEFAULT_EPS = 1e-9
MODES = ("oamv", "odamv")


def as_bool_matrix(x, name="matrix") -> np.ndarray:
    m = np.asarray(x)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return np.ascontiguousarray(m, dtype=np.uint8)


def bool_matmul(X, Y) -> np.ndarray:
    """Boolean-semiring product: ``out[i, j] = OR_k (X[i, k] AND Y[k, j])``."""
    X, Y = as_bool_matrix(X, "X"), as_bool_matrix(Y, "Y")
    if X.shape[1] != Y.shape[0]:
        raise ShapeError(f"cannot multiply {X.shape[0]}x{X.shape[1]} by {Y.shape[0]}x{Y.shape[1]}")
    return kernels.bool_matmul(X, Y)


def nnz_cap(n: int, tau: float) -> int:
    """``ceil(n**tau)``, the number of non-zeros a hint matrix may carry."""
    return max(1, math.ceil(n ** tau - 1e-9))


@dataclass
class HintedInstance:
    M: np.ndarray
    V: np.ndarray
    P: np.ndarray
    tau: float
    query_index: int = 0

    def __post_init__(self):
        self.M = as_bool_matrix(self.M, "M")
        self.V = as_bool_matrix(self.V, "V")
        self.P = as_bool_matrix(self.P, "P")
        n = self.M.shape[0]
        for name, m in (("M", self.M), ("V", self.V), ("P", self.P)):
            if m.shape != (n, n):
                raise ShapeError(f"{name} must be {n}x{n}, got {m.shape}")
        if not (0 < self.tau <= 1):
            raise ValueError(f"tau must lie in (0, 1], got {self.tau!r}")
        cap = nnz_cap(n, self.tau)
        if int(self.P.sum()) > cap:
            raise ValueError(f"P has {int(self.P.sum())} non-zeros, more than ceil(n^tau) = {cap}")

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def expected(self) -> np.ndarray:
        return bool_matmul(self.M, bool_matmul(self.P, self.V))


# -- unnormalized reduction -------------------------------------------------

def build_oamv(M, V):
    """Initial attention inputs ``(Q, K, V)`` for the unnormalized reduction."""
    M, V = as_bool_matrix(M, "M"), as_bool_matrix(V, "V")
    n = M.shape[0]
    if M.shape != (n, n) or V.shape != (n, n):
        raise ShapeError(f"M and V must be square and equal-sized, got {M.shape}, {V.shape}")
    return M.astype(np.float64), np.zeros((n, n)), V.astype(np.float64)


def recover_oamv(raw, values, eps=DEFAULT_EPS) -> np.ndarray:
    """Boolean ``M P V`` from ``raw = exp(Q K^T) V``; ``values`` is the attention V."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    raw = np.asarray(raw, dtype=np.float64)
    baseline = np.asarray(values, dtype=np.float64).sum(axis=0)  # (1 1^T V)[j, i] = column sum i
    return (raw - baseline[None, :] > eps).astype(np.uint8)


# -- normalized reduction ---------------------------------------------------

def build_odamv(M, V, P):
    """Attention inputs for the normalized reduction plus the closed-form row sums.

    Returns ``(Q, K, V, diag)`` with all matrices ``2n x 2n``. ``diag`` holds the row
    sums of ``exp(Q K^T)`` once ``K^T = blockdiag(P, P)`` has been applied. With
    ``m = nnz(P)``, a row ``j < n`` gets ``e + 1`` from each of the m hinted columns
    (one of ``M[j,k]``, ``1 - M[j,k]`` is 1) and ``1 + 1`` from every other column
    pair, giving ``m (e + 1) + 2 (n - m)``; the zero rows below sum to ``2n``.
    """
    M, V, P = as_bool_matrix(M, "M"), as_bool_matrix(V, "V"), as_bool_matrix(P, "P")
    n = M.shape[0]
    if not (M.shape == V.shape == P.shape == (n, n)):
        raise ShapeError(f"M, V, P must all be {n}x{n}")
    if np.count_nonzero(P - np.diag(np.diag(P))):
        raise ValueError("P must be diagonal")
    m = int(P.sum())
    if m < 1:
        raise ValueError("P must have at least one non-zero entry")
    Q = np.zeros((2 * n, 2 * n))
    Q[:n, :n] = M
    Q[:n, n:] = 1 - M
    Vt = np.zeros((2 * n, 2 * n))
    Vt[:n, :n] = V
    diag = np.empty(2 * n)
    diag[:n] = m * (math.e + 1) + 2 * (n - m)
    diag[n:] = 2 * n
    return Q, np.zeros((2 * n, 2 * n)), Vt, diag


def recover_odamv(normalized, diag, values, eps=DEFAULT_EPS) -> np.ndarray:
    """Boolean ``M P V`` (n x n) from ``normalized = D^-1 exp(Q K^T) V``.

    ``values`` is the ``2n x 2n`` attention V; only the leading n x n block of
    ``normalized`` is read, so either the full output or just that block works.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    diag = np.asarray(diag, dtype=np.float64)
    if (diag <= 0).any():
        raise ValueError("diagonal entries must be positive")
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0] // 2
    normalized = np.asarray(normalized, dtype=np.float64)
    colsum = values.sum(axis=0)[:n]
    return (normalized[:n, :n] - colsum[None, :] / diag[:n, None] > eps).astype(np.uint8)


# -- routing through the dynamic structure ---------------------------------

def solve_oamv(inst: HintedInstance, a=0.5, eps=DEFAULT_EPS) -> np.ndarray:
    Q, K, Vt = build_oamv(inst.M, inst.V)
    ds = DynamicAttention(Q, K, Vt, a=a)
    # K^T = P  <=>  K[k, j] = P[j, k]
    for j, k in zip(*np.nonzero(inst.P)):
        ds.update_k(int(k), int(j), 1.0)
    n = inst.n
    raw = np.array([[ds.query_unnormalized(r, c) for c in range(n)] for r in range(n)])
    return recover_oamv(raw, Vt, eps)


def solve_odamv(inst: HintedInstance, a=0.5, eps=DEFAULT_EPS, check_diag=True) -> np.ndarray:
    Q, K, Vt, diag = build_odamv(inst.M, inst.V, inst.P)
    ds = DynamicAttention(Q, K, Vt, a=a)
    n = inst.n
    for k in np.flatnonzero(np.diag(inst.P)):
        ds.update_k(int(k), int(k), 1.0)
        ds.update_k(int(k) + n, int(k) + n, 1.0)
    if check_diag:
        np.testing.assert_allclose(ds.s, diag, rtol=1e-12)
    normalized = np.array([[ds.query(r, c) for c in range(n)] for r in range(n)])
    return recover_odamv(normalized, diag, Vt, eps)


def random_instance(rng, n, tau, mode) -> HintedInstance:
    M = rng.integers(0, 2, (n, n))
    V = rng.integers(0, 2, (n, n))
    cap = nnz_cap(n, tau)
    P = np.zeros((n, n), dtype=np.uint8)
    if mode == "oamv":
        k = int(rng.integers(0, cap + 1))
        P.ravel()[rng.choice(n * n, size=k, replace=False)] = 1
    else:
        k = int(rng.integers(1, min(cap, n) + 1))
        idx = rng.choice(n, size=k, replace=False)
        P[idx, idx] = 1
    return HintedInstance(M, V, P, tau, int(rng.integers(0, n)))


@dataclass
class ReductionReport:
    mode: str
    n: int
    tau: float
    cases: int = 0
    passed: int = 0
    records: list = field(default_factory=list)
    counterexample: HintedInstance | None = None

    @property
    def failed(self) -> int:
        return self.cases - self.passed

    def summary(self) -> str:
        return (f"summary mode={self.mode} n={self.n} tau={self.tau!r} cases={self.cases} "
                f"passed={self.passed} failed={self.failed}")


def run_instance(inst: HintedInstance, mode: str, a=0.5, eps=DEFAULT_EPS) -> int:
    """Number of mismatching entries between the recovered and brute-force products."""
    if mode == "oamv":
        got = solve_oamv(inst, a, eps)
    elif mode == "odamv":
        got = solve_odamv(inst, a, eps)
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return int(np.count_nonzero(got != inst.expected()))


def check_reduction(n, tau, seed, cases, mode, a=0.5, eps=DEFAULT_EPS) -> ReductionReport:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not (1 <= n <= MAX_N):
        raise ValueError(f"n must lie in [1, {MAX_N}], got {n}")
    if not (0 < tau <= 1):
        raise ValueError(f"tau must lie in (0, 1], got {tau!r}")
    if cases < 1:
        raise ValueError("cases must be at least 1")
    rng = np.random.default_rng(seed)
    report = ReductionReport(mode, n, tau)
    for k in range(cases):
        inst = random_instance(rng, n, tau, mode)
        bad = run_instance(inst, mode, a, eps)
        report.cases += 1
        if bad == 0:
            report.passed += 1
        elif report.counterexample is None:
            report.counterexample = inst
        result = "pass" if bad == 0 else "fail"
        report.records.append(f"case={k} mode={mode} n={n} tau={tau!r} result={result} mismatches={bad}")
    return report
