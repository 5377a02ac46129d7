"""Mel filterbank and DCT construction, MFCC analysis and least-squares
spectral envelope reconstruction.

The forward transform per frame is c = D log(max(M s, floor)); the envelope
comes back through the pseudoinverses as max(M+ exp(D+ c), 0).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .dsp import FrameConfig, Spectrogram
from .errors import ContractError, FormatError
from .ioutil import atomic_write

DEFAULT_N_MELS = 24
DEFAULT_N_COEF = 20
DEFAULT_LOG_FLOOR = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class MelFilterbank:
    """Triangular unit-peak mel filters sampled on the one-sided FFT grid."""

    weights: np.ndarray  # n_mels x n_bins
    center_freqs: np.ndarray  # Hz, one per filter
    sample_rate: int

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


def build_mel_filterbank(
    n_mels: int,
    n_bins: int,
    sample_rate: int,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> MelFilterbank:
    """Triangles with vertices equally spaced on the mel scale, peak 1."""
    nyquist = sample_rate / 2.0
    if f_max is None:
        f_max = nyquist
    if not (0.0 <= f_min < f_max):
        raise ContractError(f"need 0 <= f_min < f_max, got [{f_min}, {f_max}]")
    if f_max > nyquist:
        raise ContractError(f"f_max {f_max} Hz exceeds Nyquist {nyquist} Hz")
    if n_mels < 2:
        raise ContractError(f"need at least 2 mel filters, got {n_mels}")

    vertices = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    fft_size = (n_bins - 1) * 2
    bin_freqs = np.arange(n_bins) * sample_rate / fft_size

    weights = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        left, center, right = vertices[i], vertices[i + 1], vertices[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        weights[i] = np.maximum(0.0, np.minimum(rising, falling))

    return MelFilterbank(weights, vertices[1:-1].copy(), sample_rate)


@dataclass
class DctBasis:
    """Truncated orthonormal type-II DCT; the pseudoinverse is the transpose."""

    forward: np.ndarray  # n_coef x n_mels
    pseudo_inverse: np.ndarray = field(init=False)

    def __post_init__(self):
        self.pseudo_inverse = self.forward.T.copy()

    @property
    def n_coef(self) -> int:
        return self.forward.shape[0]

    @property
    def n_mels(self) -> int:
        return self.forward.shape[1]


def build_dct_basis(n_coef: int, n_mels: int) -> DctBasis:
    if not (1 <= n_coef <= n_mels):
        raise ContractError(f"need 1 <= n_coef <= n_mels, got {n_coef} > {n_mels}")
    k = np.arange(n_coef)[:, None]
    m = np.arange(n_mels)[None, :]
    d = np.sqrt(2.0 / n_mels) * np.cos(np.pi * k * (2 * m + 1) / (2.0 * n_mels))
    d[0] *= np.sqrt(0.5)
    return DctBasis(d)


@dataclass
class MfccSequence:
    """Cepstral coefficient matrix, frames x n_coef, plus frame timing."""

    coefficients: np.ndarray
    sample_rate: int
    hop_length: int

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.ndim != 2:
            raise ContractError("coefficients must be a 2-D matrix")
        if self.coefficients.size and not np.all(np.isfinite(self.coefficients)):
            raise ContractError("MFCC matrix contains NaN or Inf")

    @property
    def n_frames(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_coef(self) -> int:
        return self.coefficients.shape[1]


def mfcc(
    spec: Spectrogram,
    mel: MelFilterbank,
    dct: DctBasis,
    floor_eps: float = DEFAULT_LOG_FLOOR,
) -> MfccSequence:
    """Per frame: c = D log(max(M s, floor_eps)), magnitude spectrum in."""
    if floor_eps <= 0:
        raise ContractError(f"floor_eps must be positive, got {floor_eps}")
    if mel.n_bins != spec.magnitudes.shape[1]:
        raise ContractError(
            f"filterbank has {mel.n_bins} bins but spectrogram has "
            f"{spec.magnitudes.shape[1]}"
        )
    if dct.n_mels != mel.n_mels:
        raise ContractError(
            f"DCT expects {dct.n_mels} mel channels, filterbank has {mel.n_mels}"
        )
    mel_energies = spec.magnitudes @ mel.weights.T
    coef = np.log(np.maximum(mel_energies, floor_eps)) @ dct.forward.T
    return MfccSequence(coef, mel.sample_rate, spec.config.hop_length)


def reconstruct_spectrum(
    c: MfccSequence,
    mel: MelFilterbank,
    dct: DctBasis,
    config: FrameConfig,
) -> Spectrogram:
    """Least-squares inverse of the MFCC map, negative bins floored to zero."""
    s_hat = np.maximum(reconstruct_spectrum_raw(c, mel, dct), 0.0)
    return Spectrogram(s_hat, config)


def reconstruct_spectrum_raw(
    c: MfccSequence, mel: MelFilterbank, dct: DctBasis
) -> np.ndarray:
    """Unfloored least-squares solution; rows may go slightly negative."""
    if c.n_coef != dct.n_coef:
        raise ContractError(f"expected {dct.n_coef} coefficients, got {c.n_coef}")
    mel_hat = np.exp(c.coefficients @ dct.pseudo_inverse.T)
    return mel_hat @ pseudo_inverse(mel.weights).T


def pseudo_inverse(matrix: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD with relative singular value cutoff."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ContractError(f"need a nonempty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix entries must be finite")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if rtol is None:
        rtol = max(a.shape) * np.finfo(np.float64).eps
    cutoff = rtol * (s[0] if s.size else 0.0)
    inv_s = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (vt.T * inv_s) @ u.T


# ---------------------------------------------------------------------------
# MFC1 container: magic, u32 frames, u32 n_coef, u32 sample_rate, u32 hop,
# then row-major float32 coefficients, all little-endian.

_MFC1_MAGIC = b"MFC1"


def write_mfcc(path: str, seq: MfccSequence) -> None:
    header = _MFC1_MAGIC + struct.pack(
        "<IIII", seq.n_frames, seq.n_coef, seq.sample_rate, seq.hop_length
    )
    payload = seq.coefficients.astype("<f4").tobytes()
    atomic_write(path, header + payload)


def read_mfcc(path: str) -> MfccSequence:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 20 or data[:4] != _MFC1_MAGIC:
        raise FormatError(f"{path}: not an MFC1 file")
    frames, n_coef, sample_rate, hop = struct.unpack_from("<IIII", data, 4)
    need = 20 + frames * n_coef * 4
    if len(data) < need:
        raise FormatError(f"{path}: truncated MFC1 payload")
    coef = np.frombuffer(data[20:need], dtype="<f4").reshape(frames, n_coef)
    return MfccSequence(coef.astype(np.float64), sample_rate, hop)


def write_mfcc_csv(path: str, seq: MfccSequence) -> None:
    """Debug export: one frame per line, comma-separated decimals."""
    lines = [",".join(f"{v:.9g}" for v in row) for row in seq.coefficients]
    atomic_write(path, ("\n".join(lines) + "\n").encode())
