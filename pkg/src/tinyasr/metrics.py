"""Word and character error rates over Levenshtein distance, plus the
corpus evaluation loop (greedy decoding, no language model)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ctc as ctc_mod
from .alphabet import Alphabet
from .frontend import FrontendConfig, extract_features, load_wav
from .model import Model, forward


@dataclass(frozen=True)
class EvalResult:
    wer: float
    cer: float
    n_utts: int
    ref_words: int
    ref_chars: int


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Minimum insertions + deletions + substitutions turning ``a`` into ``b``."""
    n, m = len(a), len(b)
    if n > m:
        a, b, n, m = b, a, m, n
    prev = list(range(n + 1))
    for i in range(1, m + 1):
        cur = [i] + [0] * n
        bi = b[i - 1]
        for j in range(1, n + 1):
            sub = prev[j - 1] + (a[j - 1] != bi)
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, sub)
        prev = cur
    return prev[n]


def wer(ref: str, hyp: str) -> float:
    ref_words = ref.split()
    if not ref_words:
        raise ValueError("empty reference")
    return edit_distance(ref_words, hyp.split()) / len(ref_words)


def cer(ref: str, hyp: str) -> float:
    if not ref:
        raise ValueError("empty reference")
    return edit_distance(ref, hyp) / len(ref)


def corpus_rates(pairs: Sequence[tuple[str, str]]) -> EvalResult:
    """Pooled corpus WER/CER: total edit distance over total reference length
    (not the mean of per-utterance rates)."""
    if not pairs:
        raise ValueError("no utterances to score")
    word_dist = char_dist = n_words = n_chars = 0
    for ref, hyp in pairs:
        rw = ref.split()
        if not rw or not ref:
            raise ValueError("empty reference")
        word_dist += edit_distance(rw, hyp.split())
        char_dist += edit_distance(ref, hyp)
        n_words += len(rw)
        n_chars += len(ref)
    return EvalResult(
        wer=word_dist / n_words,
        cer=char_dist / n_chars,
        n_utts=len(pairs),
        ref_words=n_words,
        ref_chars=n_chars,
    )


def transcribe_batch(
    model: Model,
    feats: np.ndarray,
    feat_lens: np.ndarray,
    alphabet: Alphabet,
) -> list[str]:
    logits, out_lens = forward(model, feats, feat_lens)
    return [
        ctc_mod.greedy_decode(logits[b], int(out_lens[b]), alphabet)
        for b in range(logits.shape[0])
    ]


def evaluate(
    model: Model,
    utterances,
    alphabet: Alphabet,
    fe_cfg: FrontendConfig | None = None,
    batch_size: int = 16,
) -> EvalResult:
    """Score a model on a manifest path or a list of utterances.

    The model must be in eval mode; no augmentation is applied. References
    are cleaned the same way training transcripts are, and per-utterance
    failures propagate with the audio path attached.
    """
    from .data import clean_transcript, read_manifest

    if model.mode != "eval":
        raise ValueError("evaluate requires the model in eval mode")
    if isinstance(utterances, (str, bytes)) or hasattr(utterances, "__fspath__"):
        utterances = read_manifest(utterances)
    fe_cfg = fe_cfg or FrontendConfig()
    pairs: list[tuple[str, str]] = []
    for start in range(0, len(utterances), batch_size):
        chunk = utterances[start : start + batch_size]
        feats_list = []
        for utt in chunk:
            try:
                wav = load_wav(utt.audio_filepath, expected_sample_rate=fe_cfg.sample_rate)
                feats_list.append(extract_features(wav, fe_cfg))
            except Exception as exc:
                raise RuntimeError(f"evaluation failed for {utt.audio_filepath}: {exc}") from exc
        t_max = max(f.data.shape[0] for f in feats_list)
        batch = np.zeros((len(chunk), t_max, fe_cfg.n_features), dtype=model.dtype)
        lens = np.empty(len(chunk), dtype=np.int64)
        for i, f in enumerate(feats_list):
            batch[i, : f.data.shape[0]] = f.data
            lens[i] = f.valid_len
        hyps = transcribe_batch(model, batch, lens, alphabet)
        pairs.extend(
            (clean_transcript(utt.text, alphabet), hyp) for utt, hyp in zip(chunk, hyps)
        )
    return corpus_rates(pairs)
