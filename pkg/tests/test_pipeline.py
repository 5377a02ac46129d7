import numpy as np
import pytest
from scipy.signal import lfilter

from mfccsynth.config import PipelineConfig
from mfccsynth.dsp import Waveform
from mfccsynth.envelope import fit_envelope
from mfccsynth.errors import ContractError
from mfccsynth.neural.models import Generator, PulseModel
from mfccsynth.pipeline import (analyze, clamp_synthesis_f0, copy_synthesize,
                                envelope_from_mfcc, residual_dataset,
                                synthesis_gain_scale, synthesize,
                                utterance_rng, utterance_seed)
from mfccsynth.pitch import PitchTrack

SR = 16000


def make_vowel(f0=120.0, formants=((660, 90), (1720, 110), (2410, 170)),
               seconds=1.0, amp=0.1):
    n = int(seconds * SR)
    exc = np.zeros(n)
    period = SR / f0
    t = 0.0
    while round(t) < n:
        exc[int(round(t))] = 1.0
        t += period
    y = exc
    for fc, bw in formants:
        r = np.exp(-np.pi * bw / SR)
        th = 2 * np.pi * fc / SR
        y = lfilter([1.0], [1.0, -2 * r * np.cos(th), r * r], y)
    y = y / np.sqrt(np.mean(y ** 2)) * amp
    return Waveform(y, SR)


@pytest.fixture(scope="module")
def vowel():
    return make_vowel()


@pytest.fixture(scope="module")
def cfg():
    return PipelineConfig()


def test_analyze_frame_accounting(vowel, cfg):
    seq, track = analyze(vowel, cfg)
    assert seq.n_frames == 196  # (16000 - 400) // 80 + 1
    assert track.n_frames == 196
    assert seq.n_coef == 20
    assert track.voiced.mean() > 0.95


def test_analyze_rejects_rate_mismatch(cfg):
    with pytest.raises(ContractError, match="sample rate"):
        analyze(Waveform(np.zeros(4000), 8000), cfg)


def test_copy_synthesis_preserves_pitch_and_level(vowel, cfg):
    out, seq, track = copy_synthesize(vowel, cfg,
                                      rng=utterance_rng(cfg, "v"))
    assert len(out) == len(vowel)
    seq2, track2 = analyze(out, cfg)
    both = track.voiced & track2.voiced
    assert both.sum() > 0.9 * track.voiced.sum()
    dev = np.abs(track.f0_hz - track2.f0_hz)[both]
    assert np.mean(dev <= 3.0) >= 0.95
    db = 20 * np.log10(np.sqrt(np.mean(out.samples ** 2))
                       / np.sqrt(np.mean(vowel.samples ** 2)))
    assert abs(db) <= 12.0


def test_synthesis_is_deterministic(vowel, cfg):
    seq, track = analyze(vowel, cfg)
    a = synthesize(seq, track, cfg, rng=np.random.default_rng(5))
    b = synthesize(seq, track, cfg, rng=np.random.default_rng(5))
    assert np.array_equal(a.samples, b.samples)


def test_default_synthesis_length(vowel, cfg):
    seq, track = analyze(vowel, cfg)
    out = synthesize(seq, track, cfg)
    assert len(out) == (seq.n_frames - 1) * 80 + 400


def test_utterance_seed_derivation():
    a = utterance_seed(0, "utt01")
    assert utterance_seed(0, "utt01") == a
    assert utterance_seed(0, "utt02") != a
    assert utterance_seed(1, "utt01") != a


def test_synthesize_rejects_mismatched_inputs(vowel, cfg):
    seq, track = analyze(vowel, cfg)
    short = PitchTrack(track.f0_hz[:-1], track.voiced[:-1],
                       track.hop_length, track.sample_rate)
    with pytest.raises(ContractError, match="frames"):
        synthesize(seq, short, cfg)


def test_unvoiced_synthesis_is_noise_like(cfg):
    rng = np.random.default_rng(2)
    noise = Waveform(0.05 * rng.standard_normal(SR), SR)
    out, _, track = copy_synthesize(noise, cfg,
                                    rng=utterance_rng(cfg, "n"))
    assert track.voiced.mean() < 0.1
    assert np.all(np.isfinite(out.samples))
    db = 20 * np.log10(np.sqrt(np.mean(out.samples ** 2))
                       / np.sqrt(np.mean(noise.samples ** 2)))
    assert abs(db) <= 12.0


def test_clamp_synthesis_f0():
    track = PitchTrack(np.array([60.0, 0.0, 100.0]),
                       np.array([True, False, True]), 80, SR)
    out = clamp_synthesis_f0(track)
    assert np.array_equal(out.f0_hz, [80.0, 0.0, 100.0])
    # already-clamped tracks come back unchanged by identity
    assert clamp_synthesis_f0(out) is out


def test_envelope_gain_scale_applied(vowel, cfg):
    seq, _ = analyze(vowel, cfg)
    env = envelope_from_mfcc(seq, cfg)
    scale = synthesis_gain_scale(cfg.frame_config())
    assert scale == pytest.approx(1.0 / np.sqrt(150.0))
    from mfccsynth.cepstral import (build_dct_basis, build_mel_filterbank,
                                    reconstruct_spectrum)
    fc = cfg.frame_config()
    mel = build_mel_filterbank(cfg.n_mels, fc.n_bins, SR,
                               f_min=cfg.mel_f_min, f_max=cfg.mel_f_max)
    dct = build_dct_basis(cfg.n_mfcc, cfg.n_mels)
    raw = fit_envelope(reconstruct_spectrum(seq, mel, dct, fc),
                       cfg.ar_order)
    assert np.allclose(env.gain, raw.gain * scale)
    assert np.array_equal(env.coefficients, raw.coefficients)


def test_residual_dataset_on_constant_pitch(vowel, cfg):
    ds = residual_dataset(vowel, cfg)
    assert ds.count > 150
    assert ds.conditioning.shape == (ds.count, 22)
    periods = np.array([p.period_samples for p in ds.pulses])
    assert np.all(np.abs(periods - SR / 120.0) < 2.0)
    assert np.all(ds.conditioning[:, 21] == 1.0)


def test_model_excitation_modes_run(vowel):
    seq, track = analyze(vowel, PipelineConfig())
    seq_s = type(seq)(seq.coefficients[:60], seq.sample_rate,
                      seq.hop_length)
    track_s = PitchTrack(track.f0_hz[:60], track.voiced[:60],
                         track.hop_length, track.sample_rate)
    pm = PulseModel(rng=np.random.default_rng(1))
    gen = Generator(rng=np.random.default_rng(2))
    dnn_cfg = PipelineConfig(excitation="dnn")
    a = synthesize(seq_s, track_s, dnn_cfg,
                   rng=np.random.default_rng(3), pulse_model=pm)
    b = synthesize(seq_s, track_s, dnn_cfg,
                   rng=np.random.default_rng(3), pulse_model=pm)
    assert np.array_equal(a.samples, b.samples)
    gan_cfg = PipelineConfig(excitation="gan")
    c = synthesize(seq_s, track_s, gan_cfg,
                   rng=np.random.default_rng(3), pulse_model=pm,
                   generator=gen)
    assert np.all(np.isfinite(c.samples))
    assert not np.array_equal(a.samples, c.samples)
    with pytest.raises(ContractError, match="pulse model"):
        synthesize(seq_s, track_s, dnn_cfg)
    with pytest.raises(ContractError, match="generator"):
        synthesize(seq_s, track_s, gan_cfg, pulse_model=pm)
