"""Log-mel filterbank features and the encoder/adapter frame-rate chain.

16 kHz PCM -> 80-bin log-mel at 100 Hz -> encoder (4x down, 25 Hz)
-> adapter (2x down, 12.5 Hz). The encoder and adapter are shape-checked
stubs; only the frame arithmetic is a contract.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError
from .framing import FORMAT_VERSION_F32, read_grid, write_grid

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 80
    fft_size: int = 512
    fmin: float = 0.0
    fmax: float | None = None  # Nyquist when None

    def __post_init__(self):
        if self.window_ms <= self.hop_ms:
            raise ConfigError("window must be longer than hop")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if self.fft_size & (self.fft_size - 1) or self.fft_size < self.window_samples:
            raise ConfigError("fft_size must be a power of two >= the window length")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000))

    @property
    def frame_rate(self) -> Fraction:
        return Fraction(self.sample_rate, self.hop_samples)

    @property
    def upper_hz(self) -> float:
        return self.fmax if self.fmax is not None else self.sample_rate / 2


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: MelConfig) -> np.ndarray:
    """n_mels + 2 frequencies (Hz): lower edge, centers, upper edge."""
    m = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.upper_hz), cfg.n_mels + 2)
    return mel_to_hz(m)


@lru_cache(maxsize=8)
def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular filters with unit peak, shape ``[n_mels, fft_size // 2 + 1]``."""
    edges = mel_band_edges(cfg)
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (mid - lo)
    down = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    fb.setflags(write=False)
    return fb


def num_frames(n_samples: int, cfg: MelConfig = MelConfig()) -> int:
    return -(-n_samples // cfg.hop_samples)


def _as_float(pcm) -> np.ndarray:
    x = np.asarray(pcm)
    if x.dtype == np.int16:
        return x.astype(np.float64) / 32768.0
    return x.astype(np.float64)


def mel_spectrogram(pcm, cfg: MelConfig = MelConfig(), sample_rate: int | None = None) -> np.ndarray:
    """Log-mel energies, shape ``[ceil(len / hop), n_mels]``.

    Frame ``t`` is centred on sample ``t * hop``; the signal is reflect-padded
    by half a window on the left and as far as needed on the right. int16
    input is scaled to [-1, 1); float input is used as is.
    """
    if sample_rate is not None and sample_rate != cfg.sample_rate:
        raise ConfigError(f"expected {cfg.sample_rate} Hz audio, got {sample_rate} Hz")
    x = _as_float(pcm)
    if x.ndim != 1:
        raise ShapeError("expected mono audio")
    n = num_frames(x.size, cfg)
    if n == 0:
        return np.zeros((0, cfg.n_mels))
    win, hop = cfg.window_samples, cfg.hop_samples
    left = win // 2
    right = (n - 1) * hop + win - left - x.size
    mode = "reflect" if x.size > 1 else "edge"
    padded = np.pad(x, (left, max(right, 0)), mode=mode)
    frames = np.lib.stride_tricks.sliding_window_view(padded, win)[::hop][:n]
    window = np.hanning(win + 1)[:-1]  # periodic Hann
    spec = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)) ** 2
    mel = spec @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, LOG_FLOOR))


@dataclass(frozen=True)
class FeatureChain:
    encoder_downsample: int = 4
    adapter_downsample: int = 2
    encoder_dim: int = 1024

    def rates(self, cfg: MelConfig = MelConfig()) -> tuple[Fraction, Fraction, Fraction]:
        mel = cfg.frame_rate
        enc = mel / self.encoder_downsample
        return mel, enc, enc / self.adapter_downsample


def chain_shapes(mel_frames: int, chain: FeatureChain = FeatureChain()) -> tuple[int, int]:
    if mel_frames < 0:
        raise ValueError("frame count must be >= 0")
    enc = mel_frames // chain.encoder_downsample
    return enc, enc // chain.adapter_downsample


class StubEncoder:
    """Shape stand-in for the transformer encoder.

    Averages non-overlapping groups of mel frames and zero-pads the feature
    axis to ``encoder_dim``. Trailing frames that do not fill a group are
    dropped, matching :func:`chain_shapes`.
    """

    def __init__(self, chain: FeatureChain = FeatureChain()):
        self.chain = chain

    def __call__(self, mel: np.ndarray) -> np.ndarray:
        k = self.chain.encoder_downsample
        t = mel.shape[0] // k
        pooled = mel[: t * k].reshape(t, k, mel.shape[1]).mean(axis=1)
        if pooled.shape[1] > self.chain.encoder_dim:
            raise ShapeError("mel bins exceed encoder_dim")
        out = np.zeros((t, self.chain.encoder_dim))
        out[:, : pooled.shape[1]] = pooled
        return out


class StubAdapter:
    def __init__(self, chain: FeatureChain = FeatureChain()):
        self.chain = chain

    def __call__(self, feats: np.ndarray) -> np.ndarray:
        k = self.chain.adapter_downsample
        t = feats.shape[0] // k
        return feats[: t * k].reshape(t, k, feats.shape[1]).mean(axis=1)


def encode_speech(pcm, cfg: MelConfig = MelConfig(), chain: FeatureChain = FeatureChain()) -> np.ndarray:
    """PCM to adapter-rate features through the stub encoder and adapter."""
    return StubAdapter(chain)(StubEncoder(chain)(mel_spectrogram(pcm, cfg)))


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a PCM16 mono WAV; returns (int16 samples, sample rate)."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 2:
            raise ConfigError("only 16-bit PCM WAV is supported")
        if w.getnchannels() != 1:
            raise ConfigError("only mono WAV is supported")
        rate = w.getframerate()
        data = w.readframes(w.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.int16), rate


def write_wav(path, pcm, sample_rate: int = 16000) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(np.asarray(pcm, dtype="<i2").tobytes())


def save_features(path, feats: np.ndarray) -> None:
    with open(path, "wb") as fp:
        write_grid(fp, feats, version=FORMAT_VERSION_F32)


def load_features(path) -> np.ndarray:
    with open(path, "rb") as fp:
        version, arr = read_grid(fp)
    if version != FORMAT_VERSION_F32:
        raise ShapeError("file holds token ids, not float features")
    return arr
