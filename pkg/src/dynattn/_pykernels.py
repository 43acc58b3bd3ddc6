"""Numpy implementations of the hot kernels; used when ``_ckernels`` is not built.

Signatures match ``_ckernels.pyx`` exactly. ``counts`` is either None or an
int64 array ``[mults, adds]`` that is incremented in place.
"""
import numpy as np


def query_entry(C, s, a_stack, b_stack, ct_k, A, v_row, v_col, v_delta, ct_v,
                i, j, normalize, counts):
    total = float(C[i, j])
    if ct_k:
        total += float(np.dot(a_stack[i, :ct_k], b_stack[:ct_k, j]))
    hit = 0
    if ct_v:
        mask = v_col[:ct_v] == j
        hit = int(np.count_nonzero(mask))
        if hit:
            total += float(np.dot(A[i, v_row[:ct_v][mask]], v_delta[:ct_v][mask]))
    if counts is not None:
        counts[0] += ct_k + hit + (1 if normalize else 0)
        counts[1] += ct_k + hit
    if normalize:
        return total / float(s[i])
    return total


def k_column(Q, M, A, i, j, delta, new_m, new_a, d_a, counts):
    """Stage the new column ``i`` of M and A into scratch; return False on overflow."""
    np.multiply(Q[:, j], delta, out=new_m)  # column increment of M
    with np.errstate(over="ignore", invalid="ignore"):
        np.expm1(new_m, out=d_a)
        np.multiply(A[:, i], d_a, out=d_a)
        np.add(A[:, i], d_a, out=new_a)
    np.add(M[:, i], new_m, out=new_m)
    if counts is not None:
        n = Q.shape[0]
        counts[0] += 3 * n
        counts[1] += 2 * n
    return bool(np.isfinite(new_a).all() and np.isfinite(d_a).all())


def bool_matmul(X, Y):
    # OR over k of (X[i,k] AND Y[k,j]), evaluated literally
    return np.logical_and(X[:, :, None], Y[None, :, :]).any(axis=1).astype(np.uint8)
