"""Framing, windowing, pre-emphasis and STFT magnitude analysis.

All operations are pure functions; waveforms and spectrograms are treated
as immutable after construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

DEFAULT_SAMPLE_RATE = 16000

_WINDOW_KINDS = ("hann", "rectangular")


@dataclass
class Waveform:
    """Mono sample sequence with its sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ContractError(f"waveform must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ContractError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ContractError("waveform contains NaN or Inf samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    """Analysis framing parameters.

    Defaults give 25 ms frames at a 5 ms hop for 16 kHz input.
    """

    frame_length: int = 400
    hop_length: int = 80
    fft_size: int = 1024
    window: str = "hann"
    preemphasis: float = 0.97

    def __post_init__(self):
        if not (0 < self.hop_length <= self.frame_length <= self.fft_size):
            raise ContractError(
                f"need 0 < hop <= frame_length <= fft_size, got "
                f"hop={self.hop_length} frame={self.frame_length} fft={self.fft_size}"
            )
        if self.fft_size & (self.fft_size - 1):
            raise ContractError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.window not in _WINDOW_KINDS:
            raise ContractError(f"unknown window kind: {self.window!r}")
        if not (0.0 <= self.preemphasis < 1.0):
            raise ContractError(f"preemphasis must be in [0, 1), got {self.preemphasis}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_values(self) -> np.ndarray:
        """Analysis window; the periodic Hann variant keeps exact overlap-add."""
        if self.window == "rectangular":
            return np.ones(self.frame_length)
        n = np.arange(self.frame_length)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.frame_length)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_length:
            return 0
        return (n_samples - self.frame_length) // self.hop_length + 1

    def frame_center(self, t: int) -> int:
        return t * self.hop_length + self.frame_length // 2


@dataclass
class Spectrogram:
    """One-sided STFT magnitudes, frames x (fft_size/2 + 1)."""

    magnitudes: np.ndarray
    config: FrameConfig

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if self.magnitudes.ndim != 2:
            raise ContractError("spectrogram must be a 2-D matrix")
        if self.magnitudes.shape[1] != self.config.n_bins:
            raise ContractError(
                f"expected {self.config.n_bins} bins, got {self.magnitudes.shape[1]}"
            )
        if self.magnitudes.size and (
            not np.all(np.isfinite(self.magnitudes)) or np.any(self.magnitudes < 0)
        ):
            raise ContractError("spectrogram entries must be finite and nonnegative")

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]


def preemphasize(x: Waveform, alpha: float) -> Waveform:
    """First-order difference filter y[n] = x[n] - alpha*x[n-1]."""
    if not (0.0 <= alpha < 1.0):
        raise ContractError(f"alpha must be in [0, 1), got {alpha}")
    s = x.samples
    y = np.empty_like(s)
    if s.size:
        y[0] = s[0]
        y[1:] = s[1:] - alpha * s[:-1]
    return Waveform(y, x.sample_rate)


def deemphasize(y: Waveform, alpha: float) -> Waveform:
    """Exact inverse of preemphasize: x[n] = y[n] + alpha*x[n-1]."""
    if not (0.0 <= alpha < 1.0):
        raise ContractError(f"alpha must be in [0, 1), got {alpha}")
    s = y.samples
    if alpha == 0.0 or not s.size:
        return Waveform(s.copy(), y.sample_rate)
    # scipy.signal.lfilter would do, but the recursion is two lines and this
    # module otherwise has no scipy dependency.
    x = np.empty_like(s)
    acc = 0.0
    for n in range(s.size):
        acc = s[n] + alpha * acc
        x[n] = acc
    return Waveform(x, y.sample_rate)


def frame_signal(x: Waveform, cfg: FrameConfig) -> np.ndarray:
    """Slice into overlapping frames: frame t covers [t*hop, t*hop + frame_length)."""
    n = cfg.n_frames(len(x))
    if n == 0:
        raise ContractError(
            f"input of {len(x)} samples is shorter than one frame ({cfg.frame_length})"
        )
    idx = np.arange(cfg.frame_length)[None, :] + cfg.hop_length * np.arange(n)[:, None]
    return x.samples[idx]


def stft_magnitude(x: Waveform, cfg: FrameConfig) -> Spectrogram:
    """Windowed, zero-padded one-sided DFT magnitude per frame."""
    frames = frame_signal(x, cfg) * cfg.window_values()[None, :]
    mags = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1))
    return Spectrogram(mags, cfg)


def frame_index_of_samples(n_samples: int, n_frames: int, cfg: FrameConfig) -> np.ndarray:
    """Nearest-frame-center index for every sample position.

    Sample n maps to the frame whose center is closest, clamped to the valid
    frame range; this single partition drives filter-coefficient switching,
    gain application and excitation level normalization.
    """
    if n_frames < 1:
        raise ContractError("need at least one frame")
    n = np.arange(n_samples)
    half = cfg.frame_length // 2
    t = (n - half + cfg.hop_length // 2) // cfg.hop_length
    return np.clip(t, 0, n_frames - 1).astype(np.intp)


def frame_spans(n_samples: int, n_frames: int, cfg: FrameConfig) -> list[tuple[int, int]]:
    """Half-open sample span governed by each frame under the center convention."""
    idx = frame_index_of_samples(n_samples, n_frames, cfg)
    spans = []
    for t in range(n_frames):
        where = np.flatnonzero(idx == t)
        if where.size:
            spans.append((int(where[0]), int(where[-1]) + 1))
        else:
            spans.append((n_samples, n_samples))
    return spans
