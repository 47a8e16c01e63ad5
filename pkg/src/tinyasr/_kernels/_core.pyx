# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled hot kernels: depthwise 1D convolution and the CTC recursions.

Contracts match ``tinyasr._kernels.pure`` exactly; see that module for the
reference semantics.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log1p

ctypedef fused real:
    float
    double


def dw_conv_fwd(real[:, :, ::1] x, real[:, ::1] w, Py_ssize_t stride):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2], K = w.shape[0]
    cdef Py_ssize_t pad = (K - 1) // 2
    cdef Py_ssize_t Tout = (T + 2 * pad - K) // stride + 1
    if real is float:
        out_np = np.zeros((B, Tout, C), dtype=np.float32)
    else:
        out_np = np.zeros((B, Tout, C), dtype=np.float64)
    cdef real[:, :, ::1] y = out_np
    cdef Py_ssize_t b, t, c, j, ti
    with nogil:
        for b in range(B):
            for t in range(Tout):
                for j in range(K):
                    ti = t * stride + j - pad
                    if 0 <= ti < T:
                        for c in range(C):
                            y[b, t, c] += x[b, ti, c] * w[j, c]
    return out_np


def dw_conv_bwd(real[:, :, ::1] x, real[:, ::1] w, Py_ssize_t stride, real[:, :, ::1] dy):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], C = x.shape[2], K = w.shape[0]
    cdef Py_ssize_t pad = (K - 1) // 2
    cdef Py_ssize_t Tout = dy.shape[1]
    if real is float:
        dx_np = np.zeros((B, T, C), dtype=np.float32)
        dw_np = np.zeros((K, C), dtype=np.float32)
    else:
        dx_np = np.zeros((B, T, C), dtype=np.float64)
        dw_np = np.zeros((K, C), dtype=np.float64)
    cdef real[:, :, ::1] dx = dx_np
    cdef real[:, ::1] dw = dw_np
    cdef Py_ssize_t b, t, c, j, ti
    with nogil:
        for b in range(B):
            for t in range(Tout):
                for j in range(K):
                    ti = t * stride + j - pad
                    if 0 <= ti < T:
                        for c in range(C):
                            dx[b, ti, c] += dy[b, t, c] * w[j, c]
                            dw[j, c] += dy[b, t, c] * x[b, ti, c]
    return dx_np, dw_np


cdef inline double _lae(double a, double b) nogil:
    cdef double hi, lo
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a >= b:
        hi = a; lo = b
    else:
        hi = b; lo = a
    return hi + log1p(exp(lo - hi))


def ctc_forward_backward(double[:, ::1] logp, cnp.int64_t[::1] targets, Py_ssize_t blank):
    cdef Py_ssize_t T = logp.shape[0], V = logp.shape[1], U = targets.shape[0]
    cdef Py_ssize_t S = 2 * U + 1

    # bounds are not checked inside the nogil loops, so reject bad ids here
    if not 0 <= blank < V:
        raise ValueError("blank index out of range")
    cdef Py_ssize_t u
    for u in range(U):
        if not 0 <= targets[u] < V or targets[u] == blank:
            raise ValueError("target ids must be non-blank classes")

    ext_np = np.full(S, blank, dtype=np.int64)
    ext_np[1::2] = np.asarray(targets)
    skip_np = np.zeros(S, dtype=np.uint8)
    skip_np[2:] = (ext_np[2:] != blank) & (ext_np[2:] != ext_np[:-2])
    cdef cnp.int64_t[::1] ext = ext_np
    cdef cnp.uint8_t[::1] skip_ok = skip_np

    alpha_np = np.full((T, S), -np.inf)
    beta_np = np.full((T, S), -np.inf)
    occ_np = np.full((T, V), -np.inf)
    cdef double[:, ::1] alpha = alpha_np
    cdef double[:, ::1] beta = beta_np
    cdef double[:, ::1] occ = occ_np

    cdef Py_ssize_t t, s
    cdef double acc, loglik
    with nogil:
        alpha[0, 0] = logp[0, ext[0]]
        if S > 1:
            alpha[0, 1] = logp[0, ext[1]]
        for t in range(1, T):
            for s in range(S):
                acc = alpha[t - 1, s]
                if s >= 1:
                    acc = _lae(acc, alpha[t - 1, s - 1])
                if s >= 2 and skip_ok[s]:
                    acc = _lae(acc, alpha[t - 1, s - 2])
                alpha[t, s] = acc + logp[t, ext[s]]

        loglik = alpha[T - 1, S - 1]
        if S > 1:
            loglik = _lae(loglik, alpha[T - 1, S - 2])

        beta[T - 1, S - 1] = 0.0
        if S > 1:
            beta[T - 1, S - 2] = 0.0
        for t in range(T - 2, -1, -1):
            for s in range(S):
                acc = logp[t + 1, ext[s]] + beta[t + 1, s]
                if s + 1 < S:
                    acc = _lae(acc, logp[t + 1, ext[s + 1]] + beta[t + 1, s + 1])
                if s + 2 < S and skip_ok[s + 2]:
                    acc = _lae(acc, logp[t + 1, ext[s + 2]] + beta[t + 1, s + 2])
                beta[t, s] = acc

        for t in range(T):
            for s in range(S):
                occ[t, ext[s]] = _lae(occ[t, ext[s]], alpha[t, s] + beta[t, s] - loglik)

    return float(loglik), np.exp(occ_np)
