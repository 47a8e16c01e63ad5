"""CTC loss with analytic logit gradients, and greedy decoding.

The blank class is the last logit index (``alphabet.blank_id``). All
recursions run in log-space double precision; losses are batch means, so the
gradient of each instance is divided by the batch size.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .alphabet import Alphabet


class CtcError(ValueError):
    pass


def required_frames(target: np.ndarray) -> int:
    repeats = int(np.sum(target[1:] == target[:-1])) if len(target) > 1 else 0
    return len(target) + repeats


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def instance_loss(logprobs: np.ndarray, target, validate: bool = True):
    """Loss and logit gradient for one instance.

    logprobs: [T, V+1] log-softmax rows (blank last); target: ids < V.
    Returns (nll, dnll/dlogits [T, V+1]).
    """
    logprobs = np.asarray(logprobs, dtype=np.float64)
    target = np.asarray(target, dtype=np.int64)
    t_len, n_classes = logprobs.shape
    blank = n_classes - 1
    if validate:
        if not np.all(np.isfinite(logprobs)):
            raise CtcError("non-finite log-probabilities")
        row_sums = np.exp(logprobs).sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-6):
            raise CtcError("rows of exp(logprobs) must sum to 1")
        if target.size and (target.min() < 0 or target.max() >= blank):
            raise CtcError("target ids must lie below the blank index")
    need = required_frames(target)
    if t_len < need:
        raise CtcError(f"{t_len} frames cannot emit a target needing {need}")
    loglik, occupancy = _kernels.ctc_forward_backward(logprobs, target, blank)
    grad = np.exp(logprobs) - occupancy
    return -loglik, grad


def ctc_loss(
    logits: np.ndarray,
    logit_lens: np.ndarray,
    targets: list[np.ndarray] | list[list[int]],
):
    """Batch-mean CTC loss and gradient w.r.t. the raw logits.

    logits: [B, Tmax, V+1]; logit_lens: valid frames per instance; targets:
    per-instance label id sequences. Returns (loss, dloss/dlogits) with the
    gradient zero outside each instance's valid frames.
    """
    if not np.all(np.isfinite(logits)):
        raise CtcError("non-finite logits")
    batch = logits.shape[0]
    grad = np.zeros_like(logits)
    total = 0.0
    blank = logits.shape[2] - 1
    for b in range(batch):
        t_len = int(logit_lens[b])
        if not 0 < t_len <= logits.shape[1]:
            raise CtcError(f"instance {b}: length {t_len} outside [1, {logits.shape[1]}]")
        target = np.asarray(targets[b], dtype=np.int64)
        if target.size and (target.min() < 0 or target.max() >= blank):
            raise CtcError(f"instance {b}: target ids must lie below the blank index")
        lp = log_softmax(np.asarray(logits[b, :t_len], dtype=np.float64))
        try:
            nll, g = instance_loss(lp, target, validate=False)
        except CtcError as exc:
            raise CtcError(f"instance {b}: {exc}") from exc
        if not np.isfinite(nll):
            raise CtcError(f"instance {b}: non-finite loss")
        total += nll
        grad[b, :t_len] = (g / batch).astype(logits.dtype)
    return total / batch, grad


def collapse(ids, blank: int) -> list[int]:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for i in ids:
        i = int(i)
        if i != prev and i != blank:
            out.append(i)
        prev = i
    return out


def greedy_decode(logits: np.ndarray, length: int, alphabet: Alphabet) -> str:
    """Per-frame argmax (ties to the lowest index), collapsed and de-blanked."""
    if length > logits.shape[0]:
        raise CtcError("length exceeds available frames")
    path = np.argmax(logits[:length], axis=1)
    return alphabet.decode(collapse(path, alphabet.blank_id))
