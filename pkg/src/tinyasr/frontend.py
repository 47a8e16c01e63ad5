"""PCM audio to framed spectral features.

The model consumes 64 log-mel features from 20 ms Hann windows hopped by
10 ms (an optional DCT-II turns them into cepstral coefficients).  Filters
are peak-normalized triangles on the HTK mel scale; per-feature z-score
normalization over the utterance is on by default.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np
import scipy.fft


class AudioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray  # float64 amplitudes in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        if self.samples.size == 0:
            raise AudioError("empty waveform")
        if self.sample_rate <= 0:
            raise AudioError("sample_rate must be positive")


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    data: np.ndarray  # [T, F]
    valid_len: int
    frame_shift: float = 0.010
    frame_len: float = 0.020


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    n_features: int = 64
    win_ms: float = 20.0
    hop_ms: float = 10.0
    mel_fmin: float = 0.0
    mel_fmax: float | None = None  # defaults to sample_rate / 2
    log_floor: float = 1e-10
    dct: bool = False
    normalize: bool = True
    preemphasis: float = 0.0  # 0.97 typical when enabled
    var_floor: float = 1e-8

    @property
    def win(self) -> int:
        return int(round(self.sample_rate * self.win_ms / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        n = 1
        while n < self.win:
            n *= 2
        return n

    @property
    def fmax(self) -> float:
        return self.sample_rate / 2.0 if self.mel_fmax is None else self.mel_fmax

    def __post_init__(self):
        if self.hop > self.win:
            raise AudioError("hop must not exceed window length")
        if self.n_features > self.n_fft // 2 + 1:
            raise AudioError("more mel features than spectrum bins")


def load_wav(path, expected_sample_rate: int | None = None) -> Waveform:
    """Read a RIFF/WAVE PCM-16 file; stereo is averaged to mono.

    No resampling: a rate different from ``expected_sample_rate`` is an error.
    """
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise AudioError(f"{path}: compressed WAV not supported")
            if w.getsampwidth() != 2:
                raise AudioError(f"{path}: only 16-bit PCM supported")
            n_channels = w.getnchannels()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise AudioError(f"{path}: malformed WAV ({exc})") from exc
    if expected_sample_rate is not None and rate != expected_sample_rate:
        raise AudioError(f"{path}: sample rate {rate} != expected {expected_sample_rate}")
    pcm = np.frombuffer(raw, dtype="<i2")
    if n_channels > 1:
        pcm = pcm.reshape(-1, n_channels).mean(axis=1)
    samples = pcm.astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate=rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """[n_features, n_fft//2+1] peak-normalized triangular filters."""
    n_bins = cfg.n_fft // 2 + 1
    freqs = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.fmax), cfg.n_features + 2))
    bank = np.zeros((cfg.n_features, n_bins))
    for i in range(cfg.n_features):
        left, center, right = edges[i], edges[i + 1], edges[i + 2]
        rising = (freqs - left) / (center - left)
        falling = (right - freqs) / (right - center)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def frame_count(n_samples: int, cfg: FrontendConfig) -> int:
    if n_samples < cfg.win:
        raise AudioError(f"utterance of {n_samples} samples shorter than one window ({cfg.win})")
    return (n_samples - cfg.win) // cfg.hop + 1


def extract_features(wav: Waveform, cfg: FrontendConfig) -> FeatureSequence:
    if wav.sample_rate != cfg.sample_rate:
        raise AudioError(f"waveform rate {wav.sample_rate} != config rate {cfg.sample_rate}")
    x = wav.samples
    if cfg.preemphasis:
        x = np.concatenate([x[:1], x[1:] - cfg.preemphasis * x[:-1]])
    t = frame_count(x.size, cfg)
    idx = np.arange(cfg.win)[None, :] + cfg.hop * np.arange(t)[:, None]
    frames = x[idx]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(cfg.win) / cfg.win)  # periodic Hann
    spectrum = np.abs(np.fft.rfft(frames * window, n=cfg.n_fft, axis=1))
    feats = np.log(spectrum @ mel_filterbank(cfg).T + cfg.log_floor)
    if cfg.dct:
        feats = scipy.fft.dct(feats, type=2, norm="ortho", axis=1)
    if cfg.normalize:
        mean = feats.mean(axis=0)
        var = feats.var(axis=0)
        alive = var >= cfg.var_floor
        feats = np.where(alive, (feats - mean) / np.sqrt(np.where(alive, var, 1.0)), 0.0)
    return FeatureSequence(
        data=feats,
        valid_len=t,
        frame_shift=cfg.hop_ms / 1000.0,
        frame_len=cfg.win_ms / 1000.0,
    )


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono PCM-16; float input is clipped to [-1, 1] and quantized."""
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())
