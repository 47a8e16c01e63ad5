"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module ``_core``; used as the fallback when
the extension is not built (or when ``TINYASR_PURE=1``). Accumulation orders
match the compiled loops so the two backends agree to rounding noise.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def dw_conv_fwd(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Depthwise 1D convolution along time with symmetric zero padding.

    x: [B, T, C], w: [K, C] (K odd), returns [B, ceil(T/stride), C].
    """
    b, t, c = x.shape
    k = w.shape[0]
    pad = (k - 1) // 2
    t_out = (t + 2 * pad - k) // stride + 1
    xp = np.zeros((b, t + 2 * pad, c), dtype=x.dtype)
    xp[:, pad : pad + t] = x
    y = np.zeros((b, t_out, c), dtype=x.dtype)
    for j in range(k):
        y += xp[:, j : j + stride * t_out : stride] * w[j]
    return y


def dw_conv_bwd(x: np.ndarray, w: np.ndarray, stride: int, dy: np.ndarray):
    """Gradients of dw_conv_fwd: returns (dx [B,T,C], dw [K,C])."""
    b, t, c = x.shape
    k = w.shape[0]
    pad = (k - 1) // 2
    t_out = dy.shape[1]
    xp = np.zeros((b, t + 2 * pad, c), dtype=x.dtype)
    xp[:, pad : pad + t] = x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for j in range(k):
        sl = slice(j, j + stride * t_out, stride)
        dxp[:, sl] += dy * w[j]
        dw[j] = np.einsum("btc,btc->c", dy, xp[:, sl])
    return dxp[:, pad : pad + t], dw


def _extend(targets: np.ndarray, blank: int) -> np.ndarray:
    ext = np.full(2 * len(targets) + 1, blank, dtype=np.int64)
    ext[1::2] = targets
    return ext


def ctc_forward_backward(logp: np.ndarray, targets: np.ndarray, blank: int):
    """Log-space alpha/beta over the blank-interleaved target.

    logp: [T, V+1] float64 log-softmax rows; targets: [U] int64 < blank.
    Returns (loglik, occupancy [T, V+1]) where occupancy[t, k] is the
    posterior probability of emitting class k at frame t (rows sum to 1).
    """
    t_len, n_classes = logp.shape
    targets = np.asarray(targets, dtype=np.int64)
    if not 0 <= blank < n_classes:
        raise ValueError("blank index out of range")
    if targets.size and (
        targets.min() < 0 or targets.max() >= n_classes or (targets == blank).any()
    ):
        raise ValueError("target ids must be non-blank classes")
    ext = _extend(targets, blank)
    s_len = len(ext)
    # skip transition s-2 -> s allowed when the target is not blank and not a repeat
    skip_ok = np.zeros(s_len, dtype=bool)
    skip_ok[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    lp_ext = logp[:, ext]  # [T, S]
    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = lp_ext[0, 0]
    if s_len > 1:
        alpha[0, 1] = lp_ext[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        stay_or_step = prev.copy()
        stay_or_step[1:] = np.logaddexp(prev[1:], prev[:-1])
        merged = stay_or_step
        if s_len > 2:
            merged = merged.copy()
            merged[2:] = np.where(
                skip_ok[2:], np.logaddexp(stay_or_step[2:], prev[:-2]), stay_or_step[2:]
            )
        alpha[t] = merged + lp_ext[t]

    if s_len > 1:
        loglik = np.logaddexp(alpha[t_len - 1, s_len - 1], alpha[t_len - 1, s_len - 2])
    else:
        loglik = alpha[t_len - 1, s_len - 1]

    # beta excludes the emission at the current frame, so alpha + beta is the
    # joint log probability of passing through state s at frame t.
    beta = np.full((t_len, s_len), NEG_INF)
    beta[t_len - 1, s_len - 1] = 0.0
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = 0.0
    for t in range(t_len - 2, -1, -1):
        q = lp_ext[t + 1] + beta[t + 1]  # [S]
        merged = q.copy()
        merged[:-1] = np.logaddexp(q[:-1], q[1:])
        if s_len > 2:
            merged[:-2] = np.where(skip_ok[2:], np.logaddexp(merged[:-2], q[2:]), merged[:-2])
        beta[t] = merged

    joint = alpha + beta - loglik
    log_occ = np.full((t_len, n_classes), NEG_INF)
    rows = np.broadcast_to(np.arange(t_len)[:, None], joint.shape)
    cols = np.broadcast_to(ext[None, :], joint.shape)
    np.logaddexp.at(log_occ, (rows, cols), joint)
    return float(loglik), np.exp(log_occ)
