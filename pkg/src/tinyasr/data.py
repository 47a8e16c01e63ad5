"""Manifests, batching, and a synthetic tone-burst micro-corpus.

Manifests are JSON Lines with keys ``audio_filepath``, ``duration``, ``text``.
The synthetic corpus maps each letter to a fixed sine tone; accented letters
get a slightly higher pitch and a longer burst, words are separated by short
silent gaps mirrored as spaces in the transcript. It is small enough to train
on in minutes yet keeps every part of the pipeline honest: real audio files,
real feature extraction, variable lengths, and a diacritic structure that
survives round trips through the simplification map.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alphabet import Alphabet, strip_diacritics
from .augment import CutoutConfig, cutout
from .frontend import FeatureSequence, FrontendConfig, extract_features, load_wav, write_wav
from .rng import stream


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    audio_filepath: str
    duration: float
    text: str


def read_manifest(path) -> list[Utterance]:
    utts = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{ln}: invalid JSON ({e})") from None
            try:
                utt = Utterance(
                    audio_filepath=str(rec["audio_filepath"]),
                    duration=float(rec["duration"]),
                    text=str(rec["text"]).lower(),
                )
            except KeyError as e:
                raise DataError(f"{path}:{ln}: missing key {e.args[0]!r}") from None
            if not utt.text.strip():
                raise DataError(f"{path}:{ln}: empty transcript")
            if utt.duration <= 0:
                raise DataError(f"{path}:{ln}: duration must be positive")
            utts.append(utt)
    return utts


def write_manifest(path, utts: list[Utterance]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u in utts:
            rec = {"audio_filepath": u.audio_filepath, "duration": u.duration, "text": u.text}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def clean_transcript(text: str, alphabet: Alphabet) -> str:
    """Lowercase, turn non-letter junk into spaces, collapse runs.

    Letters the alphabet cannot express are an error, not something to drop
    silently; silent drops would corrupt the references used for scoring."""
    known = set(alphabet.symbols)
    out = []
    bad = set()
    for ch in unicodedata.normalize("NFC", text.lower()):
        if ch in known and ch != " ":
            out.append(ch)
        elif unicodedata.category(ch).startswith("L"):
            bad.add(ch)
        else:
            out.append(" ")
    if bad:
        listed = ", ".join(repr(c) for c in sorted(bad))
        raise DataError(f"letters outside the alphabet: {listed}")
    return " ".join("".join(out).split())


def simplify_manifest(in_path, out_path) -> None:
    """Rewrite a manifest with diacritics stripped from every transcript."""
    lines = []
    with open(in_path, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rec["text"] = strip_diacritics(str(rec["text"]))
            except (json.JSONDecodeError, KeyError) as e:
                raise DataError(f"{in_path}:{ln}: {e}") from None
            lines.append(json.dumps(rec, ensure_ascii=False))
    with open(out_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


@dataclass
class Sample:
    index: int  # stable position in the manifest, keys the cutout stream
    utt: Utterance
    feats: FeatureSequence
    labels: np.ndarray


def load_samples(utts: list[Utterance], alphabet: Alphabet,
                 fe_cfg: FrontendConfig | None = None) -> list[Sample]:
    fe_cfg = fe_cfg or FrontendConfig()
    samples = []
    for i, u in enumerate(utts):
        try:
            wav = load_wav(u.audio_filepath, expected_sample_rate=fe_cfg.sample_rate)
            feats = extract_features(wav, fe_cfg)
            text = clean_transcript(u.text, alphabet)
            labels = np.asarray(alphabet.encode(text), dtype=np.int64)
        except Exception as e:
            raise DataError(f"{u.audio_filepath}: {e}") from e
        samples.append(Sample(index=i, utt=u, feats=feats, labels=labels))
    return samples


@dataclass
class Batch:
    feats: np.ndarray  # [B, Tmax, F]
    feat_lens: np.ndarray  # [B]
    targets: list[np.ndarray]
    indices: list[int]


def make_batches(samples: list[Sample], batch_size: int, seed: int, epoch: int,
                 train: bool, cutout_cfg: CutoutConfig | None = None):
    """One epoch of padded batches. Training epochs are shuffled by a stream
    keyed on (seed, epoch) and may apply cutout keyed on (seed, epoch, sample);
    neither draw depends on batch size or iteration order. The final short
    batch is kept."""
    if batch_size < 1:
        raise DataError("batch_size must be positive")
    if not samples:
        raise DataError("no samples to batch")
    if train:
        order = stream(seed, "shuffle", epoch).permutation(len(samples))
    else:
        order = np.arange(len(samples))
    n_feat = samples[0].feats.data.shape[1]
    for start in range(0, len(samples), batch_size):
        chunk = [samples[int(i)] for i in order[start:start + batch_size]]
        seqs = []
        for s in chunk:
            fs = s.feats
            if train and cutout_cfg is not None:
                fs = cutout(fs, cutout_cfg, stream(seed, "cutout", epoch, s.index))
            seqs.append(fs)
        t_max = max(f.valid_len for f in seqs)
        feats = np.zeros((len(chunk), t_max, n_feat), dtype=np.float32)
        lens = np.zeros(len(chunk), dtype=np.int64)
        for b, fs in enumerate(seqs):
            feats[b, : fs.valid_len] = fs.data[: fs.valid_len]
            lens[b] = fs.valid_len
        yield Batch(
            feats=feats,
            feat_lens=lens,
            targets=[s.labels for s in chunk],
            indices=[s.index for s in chunk],
        )


# --- synthetic corpus -----------------------------------------------------

# Base letters chosen because each has a precomposed accented form, so the
# diacritic-stripping map is the real Unicode decomposition, not a lookup toy.
SYNTH_BASES = "acdeinor"
SYNTH_ACCENTS = {"a": "á", "c": "č", "d": "ď", "e": "é",
                 "i": "í", "n": "ň", "o": "ó", "r": "ř"}


@dataclass(frozen=True)
class SynthConfig:
    base_symbols: int = 8
    accented_variants: int = 4  # the first k bases also get an accented form
    tone_base_hz: float = 220.0
    tone_step_hz: float = 60.0  # ~1 mel band apart: confusable like real phones
    accent_shift_hz: float = 25.0  # extra pitch on the accented variant
    tone_offset_hz: float = 0.0  # shifts the whole language, used for the parent
    symbol_dur_ms: int = 60
    accent_dur_ms: int = 90  # 1.5x the plain burst
    gap_ms: int = 20
    amplitude: float = 0.3
    noise_std: float = 0.01
    sample_rate: int = 16000
    min_symbols: int = 3
    max_symbols: int = 12

    def __post_init__(self):
        if not 1 <= self.base_symbols <= len(SYNTH_BASES):
            raise DataError(f"base_symbols must be in [1, {len(SYNTH_BASES)}]")
        if not 0 <= self.accented_variants <= self.base_symbols:
            raise DataError("accented_variants must not exceed base_symbols")
        if min(self.tone_base_hz, self.tone_step_hz, self.symbol_dur_ms,
               self.accent_dur_ms, self.gap_ms, self.sample_rate) <= 0:
            raise DataError("tones, durations, and sample rate must be positive")
        if self.min_symbols < 1 or self.max_symbols < self.min_symbols:
            raise DataError("bad symbol count range")


def synth_symbols(cfg: SynthConfig) -> list[str]:
    bases = list(SYNTH_BASES[: cfg.base_symbols])
    return bases + [SYNTH_ACCENTS[b] for b in bases[: cfg.accented_variants]]


def symbol_tone(sym: str, cfg: SynthConfig) -> tuple[float, float]:
    """(frequency in Hz, duration in seconds) of a symbol's sine burst."""
    base = strip_diacritics(sym)
    i = SYNTH_BASES.index(base)
    freq = cfg.tone_base_hz + cfg.tone_offset_hz + i * cfg.tone_step_hz
    if sym != base:
        return freq + cfg.accent_shift_hz, cfg.accent_dur_ms / 1000.0
    return freq, cfg.symbol_dur_ms / 1000.0


def synth_utterance(symbols: list[str], cfg: SynthConfig, rng=None) -> np.ndarray:
    """Sine burst per symbol, 20 ms silence between symbols, optional noise."""
    sr = cfg.sample_rate
    gap = np.zeros(int(round(cfg.gap_ms * sr / 1000.0)), dtype=np.float64)
    pieces = []
    for k, sym in enumerate(symbols):
        if k:
            pieces.append(gap)
        freq, dur = symbol_tone(sym, cfg)
        n = int(round(dur * sr))
        t = np.arange(n) / sr
        burst = cfg.amplitude * np.sin(2.0 * np.pi * freq * t)
        ramp = min(n // 4, int(0.005 * sr))
        if ramp:
            env = np.ones(n)
            env[:ramp] = np.linspace(0.0, 1.0, ramp)
            env[-ramp:] = np.linspace(1.0, 0.0, ramp)
            burst = burst * env
        pieces.append(burst)
    audio = np.concatenate(pieces)
    if rng is not None and cfg.noise_std > 0:
        audio = audio + rng.normal(0.0, cfg.noise_std, size=audio.shape)
    return audio


def synth_corpus(cfg: SynthConfig, n_utts: int, seed: int, out_dir,
                 split: str = "train") -> str:
    """Generate ``n_utts`` wavs plus a manifest; returns the manifest path.

    Transcripts separate symbols with spaces, mirroring the silent gaps, so
    utterances have word structure and the space symbol gets trained. Every
    utterance is reproducible from (seed, split, index) alone."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    symbols = synth_symbols(cfg)
    utts = []
    for i in range(n_utts):
        rng = stream(seed, "synth", split, i)
        k = int(rng.integers(cfg.min_symbols, cfg.max_symbols + 1))
        picks = [symbols[int(j)] for j in rng.integers(0, len(symbols), size=k)]
        audio = synth_utterance(picks, cfg, rng)
        path = wav_dir / f"{split}_{i:04d}.wav"
        write_wav(path, audio, cfg.sample_rate)
        utts.append(
            Utterance(
                audio_filepath=str(path),
                duration=len(audio) / cfg.sample_rate,
                text=" ".join(picks),
            )
        )
    mpath = out_dir / f"{split}.jsonl"
    write_manifest(mpath, utts)
    return str(mpath)
