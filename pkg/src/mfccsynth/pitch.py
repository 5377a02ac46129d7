"""Pitch tracking, pitch marks, the 256-class F0 codec, and the
recurrent pitch network runner.

The tracker is a frame-wise normalized autocorrelation over candidate
lags covering [f_min, f_max]. The chosen peak must clear a fixed
threshold and the frame must clear an energy gate; among near-tied
local maxima the smallest lag wins, which suppresses octave-down
errors on strongly periodic frames.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .dsp import FrameConfig, Waveform, frame_index_of_samples, frame_spans
from .errors import ContractError, FormatError
from .ioutil import atomic_write
from .neural.serialize import describe

DEFAULT_F_MIN = 50.0
DEFAULT_F_MAX = 500.0
DEFAULT_NACF_THRESHOLD = 0.55
DEFAULT_SILENCE_RMS = 1e-3  # -60 dBFS
OCTAVE_TIE_RATIO = 0.87
N_F0_CLASSES = 256

F0_MAGIC = b"F0T1"


@dataclass
class PitchTrack:
    """Per-frame fundamental frequency; unvoiced frames carry 0 Hz."""

    f0_hz: np.ndarray
    voiced: np.ndarray
    hop_length: int
    sample_rate: int

    def __post_init__(self):
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0_hz.ndim != 1 or self.f0_hz.shape != self.voiced.shape:
            raise ContractError(
                f"f0 and voicing shapes differ: {self.f0_hz.shape} vs "
                f"{self.voiced.shape}")
        if not np.all(np.isfinite(self.f0_hz)):
            raise ContractError("f0 track contains non-finite values")
        if np.any(self.f0_hz[~self.voiced] != 0.0):
            raise ContractError("unvoiced frames must carry f0 = 0")
        if np.any(self.f0_hz[self.voiced] <= 0.0):
            raise ContractError("voiced frames must carry f0 > 0")
        if self.hop_length < 1 or self.sample_rate < 1:
            raise ContractError("hop length and sample rate must be positive")

    @property
    def n_frames(self):
        return self.f0_hz.shape[0]


@dataclass
class PitchMarks:
    """Strictly increasing pulse instants with the local period at each."""

    positions: np.ndarray
    periods: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.periods = np.asarray(self.periods, dtype=np.float64)
        if self.positions.shape != self.periods.shape \
                or self.positions.ndim != 1:
            raise ContractError("positions and periods must be matching "
                                "1-D arrays")
        if self.positions.size and np.any(np.diff(self.positions) <= 0):
            raise ContractError("pitch marks must strictly increase")
        if np.any(self.periods <= 0):
            raise ContractError("mark periods must be positive")

    @property
    def count(self):
        return self.positions.shape[0]


def median_smooth(f0, voiced):
    """Length-3 median over each voiced run; run edges pass through."""
    f0 = np.asarray(f0, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    out = f0.copy()
    n = f0.shape[0]
    for i in range(1, n - 1):
        if voiced[i - 1] and voiced[i] and voiced[i + 1]:
            out[i] = np.median(f0[i - 1:i + 2])
    return out


def track_pitch(x, cfg, f_min=DEFAULT_F_MIN, f_max=DEFAULT_F_MAX,
                nacf_threshold=DEFAULT_NACF_THRESHOLD,
                silence_rms=DEFAULT_SILENCE_RMS):
    """Normalized-autocorrelation pitch track of a waveform.

    A frame is voiced when its RMS clears the silence gate and the
    winning autocorrelation peak exceeds nacf_threshold. The peak lag
    is refined by parabolic interpolation and the voiced track is
    median-smoothed (length 3) within runs.
    """
    if not isinstance(x, Waveform):
        raise ContractError("track_pitch expects a Waveform")
    if not 0 < f_min < f_max:
        raise ContractError(f"need 0 < f_min < f_max, got {f_min}, {f_max}")
    if f_max > x.sample_rate / 2:
        raise ContractError(f"f_max {f_max} exceeds the Nyquist frequency")
    lag_min = int(np.ceil(x.sample_rate / f_max))
    lag_max = int(np.floor(x.sample_rate / f_min))
    if lag_min < 1 or lag_min >= lag_max:
        raise ContractError(
            f"empty lag range [{lag_min}, {lag_max}] for "
            f"[{f_min}, {f_max}] Hz at {x.sample_rate} Hz")
    n_frames = cfg.n_frames(x.samples.shape[0])
    w = cfg.frame_length
    padded = np.concatenate([x.samples,
                             np.zeros(lag_max + w, dtype=np.float64)])
    energy = np.concatenate([[0.0], np.cumsum(padded * padded)])

    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        s = t * cfg.hop_length
        seg = padded[s:s + w]
        e0 = energy[s + w] - energy[s]
        if e0 <= 0 or np.sqrt(e0 / w) <= silence_rms:
            continue
        cc = np.correlate(padded[s:s + w + lag_max], seg, mode="valid")
        lags = np.arange(lag_min, lag_max + 1)
        e_lag = energy[s + lags + w] - energy[s + lags]
        with np.errstate(invalid="ignore", divide="ignore"):
            nacf = np.where(e_lag > 0,
                            cc[lag_min:lag_max + 1] / np.sqrt(e0 * e_lag),
                            0.0)
        best = float(np.max(nacf))
        if best <= nacf_threshold:
            continue
        interior = np.zeros(nacf.shape[0], dtype=bool)
        interior[1:-1] = (nacf[1:-1] >= nacf[:-2]) & (nacf[1:-1] >= nacf[2:])
        ties = np.flatnonzero(interior & (nacf >= OCTAVE_TIE_RATIO * best))
        pick = int(ties[0]) if ties.size else int(np.argmax(nacf))
        lag = float(lags[pick])
        if 0 < pick < nacf.shape[0] - 1:
            lo, mid, hi = nacf[pick - 1], nacf[pick], nacf[pick + 1]
            denom = lo - 2.0 * mid + hi
            if denom < 0:
                delta = 0.5 * (lo - hi) / denom
                lag += min(max(delta, -0.5), 0.5)
        voiced[t] = True
        f0[t] = min(max(x.sample_rate / lag, f_min), f_max)
    f0 = np.where(voiced, median_smooth(f0, voiced), 0.0)
    return PitchTrack(f0, voiced, cfg.hop_length, x.sample_rate)


def _voiced_runs(voiced):
    runs = []
    start = None
    for i, v in enumerate(voiced):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, voiced.shape[0] - 1))
    return runs


def place_pitch_marks(track, cfg, n_samples=None, residual=None):
    """Pulse instants for each voiced region.

    The grid accumulates t <- t + sample_rate/f0 from the start of each
    voiced run, reading f0 at the frame owning the current mark. When a
    residual waveform is supplied each mark is then moved to the
    residual maximum within a quarter period, which aligns marks with
    actual excitation peaks during analysis.
    """
    if residual is not None:
        if n_samples is not None and n_samples != residual.samples.shape[0]:
            raise ContractError(
                f"n_samples {n_samples} disagrees with residual length "
                f"{residual.samples.shape[0]}")
        n_samples = residual.samples.shape[0]
    elif n_samples is None:
        n_samples = track.n_frames * track.hop_length
    if track.hop_length != cfg.hop_length:
        raise ContractError(
            f"track hop {track.hop_length} does not match config hop "
            f"{cfg.hop_length}")
    spans = frame_spans(n_samples, track.n_frames, cfg)
    owner = frame_index_of_samples(n_samples, track.n_frames, cfg)

    positions = []
    periods = []
    for a, b in _voiced_runs(track.voiced):
        start, _ = spans[a]
        _, end = spans[b]
        t = float(start)
        while t < end:
            m = int(round(t))
            if m >= n_samples:
                break
            frame = int(owner[m]) if m < owner.shape[0] else b
            frame = min(max(frame, a), b)
            period = track.sample_rate / track.f0_hz[frame]
            positions.append(m)
            periods.append(period)
            t += period

    if residual is not None and positions:
        res = residual.samples
        for k, (m, period) in enumerate(zip(positions, periods)):
            half = int(round(period / 4.0))
            lo = max(0, m - half)
            hi = min(n_samples, m + half + 1)
            if hi > lo:
                positions[k] = lo + int(np.argmax(res[lo:hi]))

    keep_pos = []
    keep_per = []
    for m, period in zip(positions, periods):
        if keep_pos and m <= keep_pos[-1]:
            continue
        keep_pos.append(m)
        keep_per.append(period)
    return PitchMarks(np.array(keep_pos, dtype=np.int64),
                      np.array(keep_per, dtype=np.float64),
                      track.sample_rate)


def quantize_f0(track, f_min=DEFAULT_F_MIN, f_max=DEFAULT_F_MAX):
    """Track -> integer classes: 0 unvoiced, 1..255 spanning
    [f_min, f_max] on a uniform grid."""
    if f_max <= f_min:
        raise ContractError(f"need f_min < f_max, got {f_min}, {f_max}")
    f = np.clip(track.f0_hz, f_min, f_max)
    scaled = (f - f_min) / (f_max - f_min) * (N_F0_CLASSES - 2)
    classes = 1 + np.rint(scaled).astype(np.int64)
    return np.where(track.voiced, classes, 0)


def dequantize_f0(classes, hop_length, sample_rate,
                  f_min=DEFAULT_F_MIN, f_max=DEFAULT_F_MAX):
    """Integer classes -> PitchTrack at the bin centers."""
    classes = np.asarray(classes)
    if classes.ndim != 1:
        raise ContractError("classes must be a 1-D array")
    if np.any(classes < 0) or np.any(classes > N_F0_CLASSES - 1):
        raise ContractError(
            f"classes must lie in [0, {N_F0_CLASSES - 1}]")
    voiced = classes > 0
    f0 = np.where(
        voiced,
        f_min + (classes - 1) * (f_max - f_min) / (N_F0_CLASSES - 2),
        0.0)
    return PitchTrack(f0, voiced, hop_length, sample_rate)


def f0_metrics(ref, gen):
    """Voiced-frame RMSE and Pearson correlation plus the percentage of
    frames whose voicing decisions disagree. RMSE and correlation use
    only frames voiced in both tracks and are None when undefined."""
    if ref.n_frames != gen.n_frames:
        raise ContractError(
            f"track lengths differ: {ref.n_frames} vs {gen.n_frames}")
    if ref.n_frames == 0:
        raise ContractError("cannot compare empty tracks")
    vuv = 100.0 * float(np.mean(ref.voiced != gen.voiced))
    both = ref.voiced & gen.voiced
    out = {"rmse_hz": None, "corr": None, "vuv_error_pct": vuv,
           "n_both_voiced": int(both.sum())}
    if not np.any(both):
        return out
    a = ref.f0_hz[both]
    b = gen.f0_hz[both]
    out["rmse_hz"] = float(np.sqrt(np.mean((a - b) ** 2)))
    if a.size >= 2 and np.var(a) > 0 and np.var(b) > 0:
        out["corr"] = float(np.corrcoef(a, b)[0, 1])
    return out


_F0_NET_KINDS = ["standardize", "dense", "tanh", "dense", "tanh", "blstm",
                 "lstm", "dense", "softmax"]


def f0_net_forward(mfcc_seq, layers, f_min=DEFAULT_F_MIN,
                   f_max=DEFAULT_F_MAX):
    """Greedy decode of the pitch network over an utterance.

    The recurrent output layer is driven frame by frame; each step's
    input is the bidirectional features concatenated with a one-hot
    encoding of the previous step's predicted class (zeros at the first
    frame). Ties in the softmax argmax resolve to the lowest class.
    """
    kinds = [layer.kind for layer in layers]
    if kinds != _F0_NET_KINDS:
        raise FormatError(
            "pitch network topology mismatch\n"
            f"  expected: {' -> '.join(_F0_NET_KINDS)}\n"
            f"  found:    {describe(layers)}")
    std, dense1, tanh1, dense2, tanh2, blstm, lstm, head, softmax = layers
    n_classes = head.params["w"].shape[0]
    if n_classes != N_F0_CLASSES:
        raise FormatError(
            f"pitch network must emit {N_F0_CLASSES} classes, "
            f"found {n_classes}")
    if lstm.n_in != 2 * blstm.n_hidden + n_classes:
        raise FormatError(
            f"recurrent layer input width {lstm.n_in} does not equal "
            f"context {2 * blstm.n_hidden} + feedback {n_classes}")
    coef = np.asarray(mfcc_seq.coefficients, dtype=np.float64)
    if coef.ndim != 2:
        raise ContractError(f"coefficients must be 2-D, got {coef.shape}")
    n = coef.shape[0]
    if n == 0:
        raise ContractError("cannot run the pitch network on zero frames")

    h = std.forward(coef)
    h = tanh1.forward(dense1.forward(h))
    h = tanh2.forward(dense2.forward(h))
    ctx = blstm.forward(h[None, :, :])[0]

    classes = np.zeros(n, dtype=np.int64)
    onehot = np.zeros((1, n_classes))
    state = lstm.initial_state(1)
    for t in range(n):
        step_in = np.concatenate([ctx[t][None, :], onehot], axis=1)
        out, state, _ = lstm.step(step_in, state)
        probs = softmax.forward(head.forward(out))
        cls = int(np.argmax(probs[0]))
        classes[t] = cls
        onehot = np.zeros((1, n_classes))
        onehot[0, cls] = 1.0
    return dequantize_f0(classes, mfcc_seq.hop_length, mfcc_seq.sample_rate,
                         f_min=f_min, f_max=f_max)


def write_f0_track(path, track):
    """Binary track: magic, frame count, hop, sample rate, then one
    float32 f0 value per frame with 0 meaning unvoiced."""
    head = F0_MAGIC + struct.pack(
        "<III", track.n_frames, track.hop_length, track.sample_rate)
    atomic_write(path, head + track.f0_hz.astype("<f4").tobytes())


def read_f0_track(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != F0_MAGIC:
        raise FormatError(f"{path}: bad magic, not an f0 track file")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    n, hop, rate = struct.unpack("<III", blob[4:16])
    data = blob[16:]
    if len(data) != 4 * n:
        raise FormatError(
            f"{path}: expected {4 * n} data bytes, found {len(data)}")
    f0 = np.frombuffer(data, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(f0)) or np.any(f0 < 0):
        raise FormatError(f"{path}: f0 values must be finite and >= 0")
    return PitchTrack(f0, f0 > 0, hop, rate)


def write_f0_csv(path, track):
    lines = ["frame,f0_hz,voiced"]
    for i in range(track.n_frames):
        lines.append(f"{i},{track.f0_hz[i]:.9g},{int(track.voiced[i])}")
    atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))
