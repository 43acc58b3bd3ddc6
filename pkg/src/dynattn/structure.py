"""Lazy dynamic maintenance of ``D^-1 exp(Q K^T) V`` under single-entry updates.

K updates are applied eagerly to the logits ``M``, the attention matrix ``A`` and
its row sums ``s``, and the resulting change to ``C = A V`` is logged as a rank-1
term. V updates are logged as 1-sparse terms and not applied. A point query
combines the epoch snapshot of ``C`` with both logs, so it costs time linear in
the number of pending deltas. Once either log reaches the threshold ``T`` the
logs are folded into the snapshots with two stacked products.

Invariant between public calls (up to rounding)::

    C_snapshot + sum_t a_t b_t^T == A @ V_snapshot
    A @ V_logical == C_snapshot + sum_t a_t b_t^T + A @ dV

where ``dV`` is the sum of the pending 1-sparse V deltas. The second term is what
lets queries stay exact when K and V updates interleave in one epoch.

Concurrency: single writer. ``query`` never mutates and may run concurrently with
other queries, but not with ``update_k``, ``update_v`` or ``recompute``. No
locking is done here.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .linalg import NonFiniteError, ShapeError, as_matrix, exp_elementwise, write_datn1

DEFAULT_RTOL = 1e-10


def threshold_for(n: int, a: float) -> int:
    """``max(1, floor(n**a))``, robust to ``n**a`` landing a hair below an integer."""
    if not (0.0 < a <= 1.0):
        raise ValueError(f"exponent a must lie in (0, 1], got {a!r}")
    return max(1, int(math.floor(n ** a + 1e-9)))


@dataclass(frozen=True)
class CDelta:
    """Pending rank-1 change ``a b^T`` to ``C``."""

    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class VDelta:
    """Pending 1-sparse change ``delta * e_row e_col^T`` to ``V``."""

    row: int
    col: int
    delta: float


class InstrumentationDisabled(RuntimeError):
    pass


class DynamicAttention:
    """Maintains ``B = D^-1 exp(Q K^T) V`` for point queries under K/V entry updates.

    Parameters
    ----------
    Q, K, V : array_like, shape (n, d)
    a : float, optional
        Threshold exponent in (0, 1]; the recompute threshold is ``max(1, floor(n**a))``.
        Ignored when ``threshold`` is given. Defaults to 0.5.
    threshold : int, optional
        Explicit recompute threshold (>= 1).
    rtol : float
        Tolerance used by :meth:`check_invariants`.
    instrument : bool
        Keep arithmetic-operation counters (see :meth:`op_counters`).
    """

    def __init__(self, Q, K, V, a=None, threshold=None, rtol=DEFAULT_RTOL, instrument=False):
        Q, K, V = as_matrix(Q, "Q"), as_matrix(K, "K"), as_matrix(V, "V")
        if not (Q.shape == K.shape == V.shape):
            raise ShapeError(f"Q, K, V must share a shape, got {Q.shape}, {K.shape}, {V.shape}")
        for name, m in (("Q", Q), ("K", K), ("V", V)):
            if not np.isfinite(m).all():
                raise NonFiniteError(np.argwhere(~np.isfinite(m))[0], f"{name} contains non-finite entries")
        n, d = Q.shape
        if threshold is not None:
            if int(threshold) != threshold or threshold < 1:
                raise ValueError(f"threshold must be a positive integer, got {threshold!r}")
            T = int(threshold)
        else:
            T = threshold_for(n, 0.5 if a is None else a)
        if not rtol > 0:
            raise ValueError(f"rtol must be positive, got {rtol!r}")

        self.n, self.d, self.threshold, self.rtol = n, d, T, float(rtol)
        self.a = a
        self.Q = Q.copy()
        self.K = K.copy()
        self.V = V.copy()  # snapshot as of the last recompute
        self.M = self.Q @ self.K.T
        self.A = exp_elementwise(self.M)
        self.s = self.A.sum(axis=1)
        self.C = self.A @ self.V
        self.B = self.C / self.s[:, None]

        # delta logs, preallocated to capacity T
        self._ca = np.zeros((n, T))  # column t holds a_t
        self._cb = np.zeros((T, d))  # row t holds b_t
        self._vr = np.zeros(T, dtype=np.int64)
        self._vc = np.zeros(T, dtype=np.int64)
        self._vd = np.zeros(T)
        self.ct_k = 0
        self.ct_v = 0

        self._scratch = np.empty((3, n))
        self._counts = np.zeros(2, dtype=np.int64) if instrument else None
        self.recomputes = 0

    # -- public operations --------------------------------------------------

    def update_k(self, i: int, j: int, delta: float) -> None:
        """``K[i, j] += delta``; rescales column ``i`` of A and logs the change to C."""
        self._check_index(i, j)
        delta = float(delta)
        if not math.isfinite(delta):
            raise ValueError(f"delta must be finite, got {delta!r}")
        new_m, new_a, d_a = self._scratch
        ok = kernels.k_column(self.Q, self.M, self.A, i, j, delta, new_m, new_a, d_a, self._counts)
        if not ok:
            bad = int(np.flatnonzero(~(np.isfinite(new_a) & np.isfinite(d_a)))[0])
            raise NonFiniteError((bad, i), f"update_k({i}, {j}, {delta!r}) overflows A at ({bad}, {i})")

        self.K[i, j] += delta
        self.M[:, i] = new_m
        self.A[:, i] = new_a
        self.s += d_a
        t = self.ct_k
        self._ca[:, t] = d_a
        self._cb[t, :] = self.V[i, :]
        self.ct_k = t + 1
        if self._counts is not None:
            self._counts[1] += self.n + 1
        if self.ct_k >= self.threshold:
            self.recompute()

    def update_v(self, i: int, j: int, delta: float) -> None:
        """Log ``V[i, j] += delta``; the V snapshot itself changes only at recompute."""
        self._check_index(i, j)
        delta = float(delta)
        if not math.isfinite(delta):
            raise ValueError(f"delta must be finite, got {delta!r}")
        t = self.ct_v
        self._vr[t], self._vc[t], self._vd[t] = i, j, delta
        self.ct_v = t + 1
        if self.ct_v >= self.threshold:
            self.recompute()

    def query(self, i: int, j: int) -> float:
        """``(D^-1 A V)[i, j]`` for the current A and the logically current V."""
        self._check_index(i, j)
        return kernels.query_entry(self.C, self.s, self._ca, self._cb, self.ct_k, self.A,
                                   self._vr, self._vc, self._vd, self.ct_v, i, j, True, self._counts)

    def query_unnormalized(self, i: int, j: int) -> float:
        """``(A V)[i, j]`` without the row normalization."""
        self._check_index(i, j)
        return kernels.query_entry(self.C, self.s, self._ca, self._cb, self.ct_k, self.A,
                                   self._vr, self._vc, self._vd, self.ct_v, i, j, False, self._counts)

    def recompute(self) -> None:
        """Fold both delta logs into the snapshots and refresh ``s`` and ``B``."""
        kc, kv = self.ct_k, self.ct_v
        n, d = self.n, self.d
        if kv:
            rows, cols, deltas = self._vr[:kv], self._vc[:kv], self._vd[:kv]
            np.add.at(self.V, (rows, cols), deltas)
        if kc:
            self.C += self._ca[:, :kc] @ self._cb[:kc, :]
        if kv:
            dv2 = np.zeros((kv, d))
            dv2[np.arange(kv), cols] = deltas
            self.C += self.A[:, rows] @ dv2
        if kc or kv:
            self.s = self.A.sum(axis=1)
            self.B = self.C / self.s[:, None]
        self.ct_k = self.ct_v = 0
        self.recomputes += 1
        if self._counts is not None and (kc or kv):
            # stacked products, row sums of A, and the n*d divisions for B
            self._counts[0] += n * d * (kc + kv) + n * d
            self._counts[1] += kv + n * d * (kc + kv) + n * n

    def op_counters(self) -> dict:
        if self._counts is None:
            raise InstrumentationDisabled("construct with instrument=True to count operations")
        return {"mults": int(self._counts[0]), "adds": int(self._counts[1])}

    # -- inspection ---------------------------------------------------------

    @property
    def list_c(self) -> list[CDelta]:
        return [CDelta(self._ca[:, t].copy(), self._cb[t].copy()) for t in range(self.ct_k)]

    @property
    def list_v(self) -> list[VDelta]:
        return [VDelta(int(self._vr[t]), int(self._vc[t]), float(self._vd[t])) for t in range(self.ct_v)]

    def logical_v(self) -> np.ndarray:
        """V with every pending delta applied."""
        v = self.V.copy()
        kv = self.ct_v
        np.add.at(v, (self._vr[:kv], self._vc[:kv]), self._vd[:kv])
        return v

    def state_arrays(self) -> dict:
        """Copies of every piece of state that a read-only operation must leave alone."""
        return {
            "Q": self.Q.copy(), "K": self.K.copy(), "V": self.V.copy(), "M": self.M.copy(),
            "A": self.A.copy(), "s": self.s.copy(), "C": self.C.copy(), "B": self.B.copy(),
            "ca": self._ca[:, :self.ct_k].copy(), "cb": self._cb[:self.ct_k].copy(),
            "vr": self._vr[:self.ct_v].copy(), "vc": self._vc[:self.ct_v].copy(),
            "vd": self._vd[:self.ct_v].copy(),
            "ct": np.array([self.ct_k, self.ct_v]),
        }

    def check_invariants(self, rtol=None) -> None:
        """Raise AssertionError if the maintained state has drifted beyond ``rtol``."""
        rtol = self.rtol if rtol is None else rtol
        assert 0 <= self.ct_k < self.threshold and 0 <= self.ct_v < self.threshold
        assert (self.s > 0).all(), "row sums must be positive"
        np.testing.assert_allclose(self.s, self.A.sum(axis=1), rtol=rtol)
        lhs = self.C + self._ca[:, :self.ct_k] @ self._cb[:self.ct_k]
        np.testing.assert_allclose(lhs, self.A @ self.V, rtol=rtol, atol=rtol * np.abs(self.A @ np.abs(self.V)).max())

    def export_snapshot(self, directory) -> None:
        """Write Q, K, V (epoch snapshot), B and s as DATN1 files plus ``manifest.json``."""
        os.makedirs(directory, exist_ok=True)
        for name, m in (("Q", self.Q), ("K", self.K), ("V", self.V), ("B", self.B), ("s", self.s[:, None])):
            write_datn1(os.path.join(directory, f"{name}.datn"), m)
        manifest = {"n": self.n, "d": self.d, "threshold": self.threshold,
                    "ct_K": self.ct_k, "ct_V": self.ct_v, "rtol": self.rtol}
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")

    def _check_index(self, i, j):
        if not (0 <= i < self.n and 0 <= j < self.d):
            raise IndexError(f"index ({i}, {j}) out of range for {self.n}x{self.d}")
