"""Exact, stateless attention: the reference every dynamic answer is checked against.

No max-subtraction is applied before the exponential. The dynamic structure keeps
raw ``exp(Q K^T)`` and its raw row sums, and the reference has to see the same
numbers; inputs that would overflow are rejected instead.
"""
from __future__ import annotations

import numpy as np

from .linalg import ShapeError, as_matrix, exp_elementwise, matmul, row_sums


def _check_qkv(Q, K, V):
    Q, K, V = as_matrix(Q, "Q"), as_matrix(K, "K"), as_matrix(V, "V")
    if not (Q.shape == K.shape == V.shape):
        raise ShapeError(f"Q, K, V must share a shape, got {Q.shape}, {K.shape}, {V.shape}")
    return Q, K, V


def attention_from_logits(M, V) -> np.ndarray:
    """``D^-1 exp(M) V`` for an explicit logits matrix ``M`` (n x n)."""
    M, V = as_matrix(M, "M"), as_matrix(V, "V")
    if M.shape[0] != M.shape[1] or M.shape[1] != V.shape[0]:
        raise ShapeError(f"logits {M.shape} incompatible with values {V.shape}")
    A = exp_elementwise(M)
    return matmul(A, V) / row_sums(A)[:, None]


def attention(Q, K, V) -> np.ndarray:
    """Row-normalized attention ``D^-1 exp(Q K^T) V`` with ``D = diag(exp(Q K^T) 1)``."""
    Q, K, V = _check_qkv(Q, K, V)
    return attention_from_logits(matmul(Q, K.T), V)


def unnormalized_attention(Q, K, V) -> np.ndarray:
    Q, K, V = _check_qkv(Q, K, V)
    return matmul(exp_elementwise(matmul(Q, K.T)), V)
