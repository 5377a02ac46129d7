"""Pitch-synchronous excitation generation.

Training material comes from the prediction residual: a two-period
segment around each pitch mark is Hann windowed and centered in a fixed
400-sample buffer. At synthesis time a pulse is produced per mark
(impulse, smooth model output, or generator output), the pulses are
summed centered on their marks, unvoiced stretches are filled with
white noise, and every frame is scaled to unit RMS so that all level
information flows through the envelope gain.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .cepstral import MfccSequence
from .dsp import FrameConfig, Waveform, frame_spans
from .errors import ContractError, FormatError
from .ioutil import atomic_write
from .neural.models import COND_DIM, CONTEXT_FRAMES, PULSE_LENGTH
from .pitch import PitchMarks, PitchTrack, place_pitch_marks

PULSE_MAGIC = b"PLS1"
CENTER = PULSE_LENGTH // 2


@dataclass
class Pulse:
    """One fixed-length excitation segment.

    mark and frame_index are -1 for records whose provenance is not
    known, e.g. after reading a dataset back from disk.
    """

    samples: np.ndarray
    mark: int = -1
    frame_index: int = -1
    period_samples: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.shape != (PULSE_LENGTH,):
            raise ContractError(
                f"pulse must hold {PULSE_LENGTH} samples, got shape "
                f"{self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ContractError("pulse contains NaN or Inf")
        if self.period_samples < 0:
            raise ContractError("period_samples must be >= 0")


@dataclass
class PulseDataset:
    """Pulses plus, once frames have been associated, one 22-value
    conditioning vector per pulse (20 cepstral coefficients, log F0,
    voicing flag)."""

    pulses: list
    conditioning: np.ndarray | None = None
    skipped_marks: int = 0
    dropped_frames: int = 0

    def __post_init__(self):
        if self.conditioning is not None:
            self.conditioning = np.asarray(self.conditioning,
                                           dtype=np.float64)
            expect = (len(self.pulses), COND_DIM)
            if self.conditioning.shape != expect:
                raise ContractError(
                    f"conditioning shape {self.conditioning.shape} does "
                    f"not match {expect}")
            if not np.all(np.isfinite(self.conditioning)):
                raise ContractError("conditioning contains NaN or Inf")

    @property
    def count(self) -> int:
        return len(self.pulses)

    def sample_matrix(self) -> np.ndarray:
        if not self.pulses:
            return np.zeros((0, PULSE_LENGTH))
        return np.stack([p.samples for p in self.pulses])


def _pulse_window(half_period: int) -> np.ndarray:
    # symmetric Hann of odd length: peak 1 at the mark, zero endpoints,
    # and shifts at one-period spacing sum to exactly 1
    return np.hanning(2 * half_period + 1)


def extract_pulses(residual: Waveform, marks: PitchMarks,
                   track: PitchTrack) -> PulseDataset:
    """Cut a windowed two-period segment around every pitch mark.

    Marks whose two-period window does not fit the 400-sample buffer
    (period of 200 samples or more, i.e. F0 below 80 Hz) are skipped
    and counted in skipped_marks. Segments running off the signal edge
    are zero-extended.
    """
    if marks.sample_rate != residual.sample_rate:
        raise ContractError("mark and residual sample rates differ")
    if marks.sample_rate != track.sample_rate:
        raise ContractError("mark and track sample rates differ")
    x = residual.samples
    n = x.shape[0]
    pulses = []
    skipped = 0
    for m, p in zip(marks.positions, marks.periods):
        half = max(1, int(round(p)))
        if 2 * half + 1 > PULSE_LENGTH:
            skipped += 1
            continue
        lo = int(m) - half
        hi = int(m) + half + 1
        seg = np.zeros(2 * half + 1)
        src_lo = max(0, lo)
        src_hi = min(n, hi)
        if src_lo < src_hi:
            seg[src_lo - lo:src_hi - lo] = x[src_lo:src_hi]
        seg *= _pulse_window(half)
        buf = np.zeros(PULSE_LENGTH)
        left = CENTER - half
        buf[left:left + 2 * half + 1] = seg
        pulses.append(Pulse(buf, mark=int(m), period_samples=float(p)))
    return PulseDataset(pulses, skipped_marks=skipped)


def conditioning_features(mfcc: MfccSequence,
                          track: PitchTrack) -> np.ndarray:
    """Per-frame conditioning matrix: coefficients, log F0, voicing.

    Unvoiced frames carry log-F0 0 and flag 0 so the matrix is defined
    everywhere; the dataset itself only ever includes voiced frames.
    """
    if mfcc.n_frames != track.n_frames:
        raise ContractError(
            f"{mfcc.n_frames} coefficient frames vs {track.n_frames} "
            f"pitch frames")
    if mfcc.n_coef != COND_DIM - 2:
        raise ContractError(
            f"conditioning needs {COND_DIM - 2} coefficients per frame, "
            f"got {mfcc.n_coef}")
    if mfcc.hop_length != track.hop_length:
        raise ContractError("coefficient and pitch hop lengths differ")
    lf0 = np.where(track.voiced, np.log(np.maximum(track.f0_hz, 1e-12)),
                   0.0)
    vuv = track.voiced.astype(np.float64)
    return np.column_stack([mfcc.coefficients, lf0, vuv])


def associate_frames(dataset: PulseDataset, track: PitchTrack,
                     mfcc: MfccSequence,
                     cfg: FrameConfig | None = None) -> PulseDataset:
    """Pair each voiced frame with the pulse at the nearest mark.

    Ties between two marks break toward the earlier one. A voiced frame
    with no mark within one local period has no usable pulse; it is
    dropped and counted in dropped_frames.
    """
    if cfg is None:
        cfg = FrameConfig()
    if cfg.hop_length != track.hop_length:
        raise ContractError("config hop does not match track hop")
    cond_all = conditioning_features(mfcc, track)
    mark_pos = np.array([p.mark for p in dataset.pulses], dtype=np.int64)
    if mark_pos.size and np.any(mark_pos < 0):
        raise ContractError("dataset pulses lack source marks")
    out = []
    rows = []
    dropped = 0
    for t in range(track.n_frames):
        if not track.voiced[t]:
            continue
        if mark_pos.size == 0:
            dropped += 1
            continue
        center = cfg.frame_center(t)
        j = int(np.searchsorted(mark_pos, center))
        # candidates are the marks flanking the center; <= prefers the
        # earlier mark on an exact tie
        if j == 0:
            best = 0
        elif j >= mark_pos.size:
            best = mark_pos.size - 1
        elif center - mark_pos[j - 1] <= mark_pos[j] - center:
            best = j - 1
        else:
            best = j
        period = track.sample_rate / track.f0_hz[t]
        if abs(center - mark_pos[best]) > period:
            dropped += 1
            continue
        src = dataset.pulses[best]
        out.append(Pulse(src.samples, mark=src.mark, frame_index=t,
                         period_samples=src.period_samples))
        rows.append(cond_all[t])
    cond = np.array(rows) if rows else np.zeros((0, COND_DIM))
    return PulseDataset(out, conditioning=cond,
                        skipped_marks=dataset.skipped_marks,
                        dropped_frames=dropped)


def _fill_unvoiced_and_normalize(x, track, cfg, rng, normalize=True):
    spans = frame_spans(x.shape[0], track.n_frames, cfg)
    for t, (s, e) in enumerate(spans):
        if not track.voiced[t]:
            x[s:e] = rng.standard_normal(e - s)
    if not normalize:
        return
    for s, e in spans:
        if e <= s:
            continue
        rms = np.sqrt(np.mean(np.square(x[s:e])))
        if rms > 0:
            x[s:e] /= rms


def impulse_excitation(track: PitchTrack, length: int,
                       cfg: FrameConfig | None = None,
                       rng: np.random.Generator | None = None) -> Waveform:
    """Unit impulses at the synthesis pitch marks, white noise in
    unvoiced stretches, each frame scaled to unit RMS."""
    if cfg is None:
        cfg = FrameConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    if length <= 0:
        raise ContractError("length must be positive")
    marks = place_pitch_marks(track, cfg, n_samples=length)
    x = np.zeros(length)
    x[marks.positions] = 1.0
    _fill_unvoiced_and_normalize(x, track, cfg, rng)
    return Waveform(x, track.sample_rate)


def overlap_add_pulses(pulses: np.ndarray, marks: PitchMarks,
                       track: PitchTrack, length: int,
                       cfg: FrameConfig | None = None,
                       rng: np.random.Generator | None = None,
                       normalize: bool = True) -> Waveform:
    """Sum one 400-sample pulse per mark, centered on each mark.

    Pulses whose span crosses a signal edge are truncated there.
    Unvoiced frames are filled with white noise afterward and, unless
    normalize is off (used by the reassembly identity check), every
    frame is scaled to unit RMS.
    """
    if cfg is None:
        cfg = FrameConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    pulses = np.asarray(pulses, dtype=np.float64)
    if pulses.shape != (marks.count, PULSE_LENGTH):
        raise ContractError(
            f"need {(marks.count, PULSE_LENGTH)} pulse matrix, got "
            f"{pulses.shape}")
    if not np.all(np.isfinite(pulses)):
        raise ContractError("pulse matrix contains NaN or Inf")
    if length <= 0:
        raise ContractError("length must be positive")
    x = np.zeros(length)
    for m, pulse in zip(marks.positions, pulses):
        lo = int(m) - CENTER
        dst_lo = max(0, lo)
        dst_hi = min(length, lo + PULSE_LENGTH)
        if dst_lo < dst_hi:
            x[dst_lo:dst_hi] += pulse[dst_lo - lo:dst_hi - lo]
    _fill_unvoiced_and_normalize(x, track, cfg, rng, normalize=normalize)
    return Waveform(x, track.sample_rate)


def pulse_model_forward(model, conditioning: np.ndarray,
                        frames: np.ndarray | None = None) -> np.ndarray:
    """Smooth pulse per requested frame from the recurrent pulse model.

    Each frame sees the conditioning window of up to 40 frames ending
    at itself, with fresh recurrent state per window. Frames sharing a
    window length run as one batch.
    """
    conditioning = np.asarray(conditioning, dtype=np.float64)
    if conditioning.ndim != 2 or conditioning.shape[1] != COND_DIM:
        raise ContractError(
            f"conditioning must be (frames, {COND_DIM}), got "
            f"{conditioning.shape}")
    n = conditioning.shape[0]
    if frames is None:
        frames = np.arange(n)
    frames = np.asarray(frames, dtype=np.int64)
    if frames.size and (frames.min() < 0 or frames.max() >= n):
        raise ContractError("frame index out of range")
    out = np.zeros((frames.size, PULSE_LENGTH))
    lengths = np.minimum(frames + 1, CONTEXT_FRAMES)
    for ln in np.unique(lengths):
        sel = np.nonzero(lengths == ln)[0]
        ctx = np.stack([conditioning[f - ln + 1:f + 1]
                        for f in frames[sel]])
        out[sel] = model.forward(ctx)
    return out


def gan_generator_forward(generator, xhat: np.ndarray,
                          z: np.ndarray) -> np.ndarray:
    """Refined pulses: smooth input plus the generator's residual."""
    xhat = np.asarray(xhat, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if xhat.ndim != 2 or xhat.shape[1] != PULSE_LENGTH:
        raise ContractError(
            f"pulse matrix must be (n, {PULSE_LENGTH}), got {xhat.shape}")
    if z.shape != xhat.shape:
        raise ContractError(
            f"noise shape {z.shape} does not match pulses {xhat.shape}")
    return generator.forward(z, xhat)


def write_pulse_dataset(path: str, dataset: PulseDataset) -> None:
    if dataset.conditioning is None:
        raise ContractError(
            "dataset has no conditioning; associate frames first")
    header = PULSE_MAGIC + struct.pack("<III", dataset.count,
                                       PULSE_LENGTH, COND_DIM)
    body = bytearray()
    for pulse, cond in zip(dataset.pulses, dataset.conditioning):
        body += pulse.samples.astype("<f4").tobytes()
        body += cond.astype("<f4").tobytes()
    atomic_write(path, header + bytes(body))


def read_pulse_dataset(path: str) -> PulseDataset:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != PULSE_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}")
    if len(blob) < 16:
        raise FormatError("truncated header")
    count, plen, cdim = struct.unpack("<III", blob[4:16])
    if plen != PULSE_LENGTH or cdim != COND_DIM:
        raise FormatError(
            f"unsupported record geometry ({plen}, {cdim})")
    rec = 4 * (PULSE_LENGTH + COND_DIM)
    if len(blob) != 16 + count * rec:
        raise FormatError(
            f"expected {16 + count * rec} bytes for {count} records, "
            f"file has {len(blob)}")
    pulses = []
    rows = np.zeros((count, COND_DIM))
    for i in range(count):
        at = 16 + i * rec
        vals = np.frombuffer(blob, dtype="<f4", count=PULSE_LENGTH,
                             offset=at).astype(np.float64)
        cond = np.frombuffer(blob, dtype="<f4", count=COND_DIM,
                             offset=at + 4 * PULSE_LENGTH)
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(cond))):
            raise FormatError(f"record {i} contains NaN or Inf")
        pulses.append(Pulse(vals))
        rows[i] = cond
    return PulseDataset(pulses, conditioning=rows)
