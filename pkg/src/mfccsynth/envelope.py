"""All-pole envelope fitting and time-varying inverse/synthesis filtering.

Fitting goes spectrum -> autocorrelation (IDFT of the symmetrized squared
magnitude) -> Levinson recursion. Filtering switches coefficients per
sample using the nearest-frame-center partition and carries filter state
across frame boundaries.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dsp import FrameConfig, Spectrogram, Waveform, frame_index_of_samples
from .errors import ContractError, FormatError, InvariantError
from .ioutil import atomic_write

DEFAULT_AR_ORDER = 30
SILENT_GAIN_FLOOR = 1e-8


@dataclass
class ArEnvelope:
    """Per-frame all-pole filters: coefficients (a[0] = 1) and gain."""

    coefficients: np.ndarray  # n_frames x (order + 1)
    gain: np.ndarray  # n_frames

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        self.gain = np.asarray(self.gain, dtype=np.float64)
        if self.coefficients.ndim != 2 or self.coefficients.shape[1] < 2:
            raise ContractError(
                f"coefficients must be (n_frames, order+1), got {self.coefficients.shape}"
            )
        if self.gain.shape != (self.coefficients.shape[0],):
            raise ContractError("need one gain per frame")
        if not np.all(np.isfinite(self.coefficients)):
            raise ContractError("coefficients contain NaN or Inf")
        if not np.all(self.coefficients[:, 0] == 1.0):
            raise ContractError("coefficients must be normalized to a[0] = 1")
        if not np.all(np.isfinite(self.gain)) or not np.all(self.gain > 0):
            raise ContractError("gains must be positive and finite")

    @property
    def n_frames(self) -> int:
        return self.coefficients.shape[0]

    @property
    def order(self) -> int:
        return self.coefficients.shape[1] - 1


def autocorrelation_from_spectrum(s_hat, fft_size: int, n_lags: int) -> np.ndarray:
    """Lags r[0..n_lags] of the signal whose magnitude spectrum is s_hat.

    The squared one-sided magnitudes are treated as a symmetric two-sided
    power spectrum and inverted with an IDFT. Accepts a single frame or a
    frames x bins matrix.
    """
    s = np.asarray(s_hat, dtype=np.float64)
    if s.shape[-1] != fft_size // 2 + 1:
        raise ContractError(
            f"expected {fft_size // 2 + 1} bins for fft_size {fft_size}, "
            f"got {s.shape[-1]}"
        )
    if s.size and (not np.all(np.isfinite(s)) or np.any(s < 0)):
        raise ContractError("spectrum must be nonnegative and finite")
    if n_lags >= fft_size // 2:
        raise ContractError(f"n_lags {n_lags} too large for fft_size {fft_size}")
    r = np.fft.irfft(s * s, n=fft_size, axis=-1)
    return r[..., : n_lags + 1]


def fit_allpole(r, order: int):
    """One AR frame from autocorrelation lags: (coefficients, gain).

    Degenerate frames (r[0] <= 0, as happens for all-zero spectra) fall
    back to a flat filter with a tiny gain instead of failing.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1:
        raise ContractError("fit_allpole takes a single lag vector")
    if r[0] <= 0.0:
        a = np.zeros(order + 1)
        a[0] = 1.0
        return a, SILENT_GAIN_FLOOR
    a, err = kernels.levinson(r, order)
    return a, float(np.sqrt(err))


def fit_envelope(spec: Spectrogram, order: int = DEFAULT_AR_ORDER,
                 gain_scale: float = 1.0) -> ArEnvelope:
    """Batch AR fit over a reconstructed magnitude spectrogram.

    gain_scale rescales every frame gain, which callers use to undo the
    analysis window's energy contribution so synthesis lands at the
    original signal level.
    """
    if gain_scale <= 0:
        raise ContractError(f"gain_scale must be positive, got {gain_scale}")
    lags = autocorrelation_from_spectrum(
        spec.magnitudes, spec.config.fft_size, order
    )
    n = lags.shape[0]
    coeffs = np.zeros((n, order + 1))
    coeffs[:, 0] = 1.0
    gain = np.full(n, SILENT_GAIN_FLOOR)
    live = lags[:, 0] > 0.0
    if np.any(live):
        a, err = kernels.levinson_batch(lags[live], order)
        coeffs[live] = a
        gain[live] = np.sqrt(err)
    return ArEnvelope(coeffs, gain * gain_scale)


def reflection_coefficients(coeffs: np.ndarray) -> np.ndarray:
    """Step-down recursion from polynomial rows to reflection coefficients.

    Every |k| < 1 iff the filter 1/A(z) is stable; used as the cheap
    stability test.
    """
    a = np.array(coeffs, dtype=np.float64, copy=True)
    if a.ndim == 1:
        a = a[None, :]
    order = a.shape[1] - 1
    refl = np.zeros((a.shape[0], order))
    for k in range(order, 0, -1):
        lam = a[:, k]
        refl[:, k - 1] = lam
        denom = 1.0 - lam * lam
        denom = np.where(np.abs(denom) < 1e-300, np.nan, denom)
        a[:, 1:k] = (a[:, 1:k] - lam[:, None] * a[:, k - 1:0:-1]) / denom[:, None]
    return refl


def _frame_map(n_samples: int, env: ArEnvelope, cfg: FrameConfig) -> np.ndarray:
    return frame_index_of_samples(n_samples, env.n_frames, cfg).astype(np.int64)


def inverse_filter(x: Waveform, env: ArEnvelope, cfg: FrameConfig) -> Waveform:
    """Whiten x: per sample, apply A(z) of the governing frame, divide by gain."""
    fos = _frame_map(len(x), env, cfg)
    e = kernels.inverse_filter(x.samples, env.coefficients, fos)
    e /= env.gain[fos]
    return Waveform(e, x.sample_rate)


def synthesis_filter(e: Waveform, env: ArEnvelope, cfg: FrameConfig) -> Waveform:
    """Scale excitation by per-frame gain and run it through 1/A(z)."""
    refl = reflection_coefficients(env.coefficients)
    if not np.all(np.abs(refl) < 1.0):
        bad = int(np.argmax(np.any(np.abs(refl) >= 1.0, axis=1)))
        raise InvariantError(f"unstable all-pole coefficients at frame {bad}")
    fos = _frame_map(len(e), env, cfg)
    scaled = e.samples * env.gain[fos]
    y = kernels.synthesis_filter(scaled, env.coefficients, fos)
    return Waveform(y, e.sample_rate)


# ---------------------------------------------------------------------------
# ARE1 container: magic, u32 frames, u32 order, then per frame float32 gain
# followed by order float32 coefficients a[1..p], little-endian.

_ARE1_MAGIC = b"ARE1"


def write_envelope(path: str, env: ArEnvelope) -> None:
    header = _ARE1_MAGIC + struct.pack("<II", env.n_frames, env.order)
    body = np.concatenate(
        [env.gain[:, None], env.coefficients[:, 1:]], axis=1
    ).astype("<f4").tobytes()
    atomic_write(path, header + body)


def read_envelope(path: str) -> ArEnvelope:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != _ARE1_MAGIC:
        raise FormatError(f"{path}: not an ARE1 file")
    frames, order = struct.unpack_from("<II", data, 4)
    need = 12 + frames * (order + 1) * 4
    if len(data) < need:
        raise FormatError(f"{path}: truncated ARE1 payload")
    flat = np.frombuffer(data[12:need], dtype="<f4").reshape(frames, order + 1)
    coeffs = np.ones((frames, order + 1))
    coeffs[:, 1:] = flat[:, 1:].astype(np.float64)
    return ArEnvelope(coeffs, flat[:, 0].astype(np.float64))
