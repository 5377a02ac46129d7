"""Analysis and synthesis chains tying the modules together.

Analysis: pre-emphasis -> windowed STFT -> cepstral coefficients, plus
pitch tracking on the raw signal. Synthesis: envelope recovery from the
coefficients, excitation per the configured mode, per-frame all-pole
filtering, de-emphasis. All randomness flows from one generator per
utterance, derived by hashing the utterance name with the master seed.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .cepstral import (MfccSequence, build_dct_basis, build_mel_filterbank,
                       mfcc, reconstruct_spectrum)
from .config import PipelineConfig
from .dsp import (Waveform, deemphasize, frame_index_of_samples,
                  preemphasize, stft_magnitude)
from .envelope import (ArEnvelope, fit_envelope, inverse_filter,
                       synthesis_filter)
from .errors import ContractError
from .excitation import (PULSE_LENGTH, PulseDataset, associate_frames,
                         conditioning_features, extract_pulses,
                         gan_generator_forward, impulse_excitation,
                         overlap_add_pulses, pulse_model_forward)
from .pitch import PitchTrack, place_pitch_marks, track_pitch

# pulses occupy a 400-sample buffer, so the shortest period the pulse
# generators can honor is 200 samples; lower synthesis F0 is raised
SYNTHESIS_F0_FLOOR = 80.0


def utterance_seed(master_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def utterance_rng(cfg: PipelineConfig, name: str) -> np.random.Generator:
    return np.random.default_rng(utterance_seed(cfg.seed, name))


def _transforms(cfg: PipelineConfig):
    fc = cfg.frame_config()
    mel = build_mel_filterbank(cfg.n_mels, fc.n_bins, cfg.sample_rate,
                               f_min=cfg.mel_f_min, f_max=cfg.mel_f_max)
    dct = build_dct_basis(cfg.n_mfcc, cfg.n_mels)
    return fc, mel, dct


def synthesis_gain_scale(fc) -> float:
    # undo the analysis window's energy so unit-RMS excitation lands at
    # the original signal level
    w = fc.window_values()
    return 1.0 / np.sqrt(np.sum(np.square(w)))


def analyze(wave: Waveform, cfg: PipelineConfig):
    """Coefficient matrix and pitch track for one utterance."""
    if wave.sample_rate != cfg.sample_rate:
        raise ContractError(
            f"waveform sample rate {wave.sample_rate} does not match "
            f"configured {cfg.sample_rate}")
    fc, mel, dct = _transforms(cfg)
    spec = stft_magnitude(preemphasize(wave, cfg.preemphasis), fc)
    seq = mfcc(spec, mel, dct)
    track = track_pitch(wave, fc, f_min=cfg.f0_min, f_max=cfg.f0_max,
                        nacf_threshold=cfg.nacf_threshold,
                        silence_rms=cfg.silence_rms)
    return seq, track


def envelope_from_mfcc(seq: MfccSequence, cfg: PipelineConfig) -> ArEnvelope:
    fc, mel, dct = _transforms(cfg)
    spec_hat = reconstruct_spectrum(seq, mel, dct, fc)
    return fit_envelope(spec_hat, cfg.ar_order,
                        gain_scale=synthesis_gain_scale(fc))


def clamp_synthesis_f0(track: PitchTrack,
                       floor_hz: float = SYNTHESIS_F0_FLOOR) -> PitchTrack:
    f0 = np.where(track.voiced, np.maximum(track.f0_hz, floor_hz), 0.0)
    if np.array_equal(f0, track.f0_hz):
        return track
    return PitchTrack(f0, track.voiced, track.hop_length,
                      track.sample_rate)


def synthesize(seq: MfccSequence, track: PitchTrack, cfg: PipelineConfig,
               rng: np.random.Generator | None = None,
               pulse_model=None, generator=None,
               length: int | None = None) -> Waveform:
    """Waveform from coefficients plus pitch, excitation per cfg."""
    if seq.n_frames != track.n_frames:
        raise ContractError(
            f"{seq.n_frames} coefficient frames vs {track.n_frames} "
            f"pitch frames")
    if seq.hop_length != track.hop_length:
        raise ContractError("coefficient and pitch hop lengths differ")
    if seq.n_frames == 0:
        raise ContractError("nothing to synthesize: zero frames")
    if rng is None:
        rng = np.random.default_rng(0)
    fc = cfg.frame_config()
    if length is None:
        length = (seq.n_frames - 1) * fc.hop_length + fc.frame_length
    env = envelope_from_mfcc(seq, cfg)
    tr = clamp_synthesis_f0(track)
    if cfg.excitation == "impulse":
        exc = impulse_excitation(tr, length, fc, rng)
    else:
        if pulse_model is None:
            raise ContractError(
                f"excitation mode {cfg.excitation!r} needs a pulse model")
        marks = place_pitch_marks(tr, fc, n_samples=length)
        cond = conditioning_features(seq, tr)
        owners = frame_index_of_samples(length, tr.n_frames,
                                        fc)[marks.positions]
        pulses = pulse_model_forward(pulse_model, cond, frames=owners)
        if cfg.excitation == "gan":
            if generator is None:
                raise ContractError("excitation mode 'gan' needs a "
                                    "generator")
            z = rng.standard_normal((marks.count, PULSE_LENGTH))
            pulses = gan_generator_forward(generator, pulses, z)
        exc = overlap_add_pulses(pulses, marks, tr, length, fc, rng)
    y = synthesis_filter(exc, env, fc)
    return deemphasize(y, cfg.preemphasis)


def copy_synthesize(wave: Waveform, cfg: PipelineConfig,
                    rng: np.random.Generator | None = None,
                    pulse_model=None, generator=None):
    """Analyze and immediately resynthesize at the input length."""
    seq, track = analyze(wave, cfg)
    out = synthesize(seq, track, cfg, rng=rng, pulse_model=pulse_model,
                     generator=generator, length=len(wave))
    return out, seq, track


def residual_dataset(wave: Waveform, cfg: PipelineConfig) -> PulseDataset:
    """Frame-associated pulses from the inverse-filtered input."""
    seq, track = analyze(wave, cfg)
    env = envelope_from_mfcc(seq, cfg)
    fc = cfg.frame_config()
    residual = inverse_filter(preemphasize(wave, cfg.preemphasis), env, fc)
    marks = place_pitch_marks(track, fc, residual=residual)
    dataset = extract_pulses(residual, marks, track)
    return associate_frames(dataset, track, seq, fc)
