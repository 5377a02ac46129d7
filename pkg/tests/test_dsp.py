import numpy as np
import pytest

from mfccsynth.dsp import (
    FrameConfig,
    Waveform,
    deemphasize,
    frame_index_of_samples,
    frame_signal,
    frame_spans,
    preemphasize,
    stft_magnitude,
)
from mfccsynth.errors import ContractError


def test_preemphasis_impulse():
    y = preemphasize(Waveform(np.array([1.0, 0.0, 0.0])), 0.97)
    assert np.allclose(y.samples, [1.0, -0.97, 0.0], atol=1e-15)


def test_preemphasis_alpha_zero_is_identity():
    x = np.sin(np.arange(50) * 0.1)
    y = preemphasize(Waveform(x), 0.0)
    assert np.array_equal(y.samples, x)


def test_preemphasis_constant_steady_state():
    y = preemphasize(Waveform(np.ones(100)), 0.97)
    assert y.samples[0] == 1.0
    assert np.allclose(y.samples[1:], 0.03, atol=1e-12)


def test_deemphasis_inverts_preemphasis():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        x = rng.standard_normal(256)
        y = preemphasize(Waveform(x), 0.97)
        back = deemphasize(y, 0.97)
        worst = max(worst, np.max(np.abs(back.samples - x)))
    assert worst < 1e-9


def test_deemphasis_known_vector():
    x = deemphasize(Waveform(np.array([1.0, -0.97, 0.0])), 0.97)
    assert np.allclose(x.samples, [1.0, 0.0, 0.0], atol=1e-15)


def test_deemphasis_alpha_zero_is_identity():
    x = np.array([0.5, -0.25, 0.125])
    assert np.array_equal(deemphasize(Waveform(x), 0.0).samples, x)


def test_frame_indexing_matches_direct_slicing():
    rng = np.random.default_rng(3)
    x = Waveform(rng.standard_normal(4000))
    cfg = FrameConfig(frame_length=400, hop_length=80, fft_size=512)
    frames = frame_signal(x, cfg)
    assert frames.shape == (cfg.n_frames(4000), 400)
    for t in (0, 5, frames.shape[0] - 1):
        start = t * cfg.hop_length
        assert np.array_equal(frames[t], x.samples[start : start + 400])


def test_frame_signal_rejects_short_input():
    with pytest.raises(ContractError):
        frame_signal(Waveform(np.zeros(100)), FrameConfig())


def test_stft_of_zeros_is_zero():
    spec = stft_magnitude(Waveform(np.zeros(2000)), FrameConfig())
    assert spec.magnitudes.shape[1] == 513
    assert np.all(spec.magnitudes == 0.0)


def test_stft_sine_peaks_at_expected_bin():
    # 1 kHz at 16 kHz with a 1024-point transform lands exactly on bin 64
    n = np.arange(3000)
    x = Waveform(np.sin(2 * np.pi * 1000.0 * n / 16000.0))
    cfg = FrameConfig(frame_length=1024, hop_length=512, fft_size=1024,
                      window="rectangular")
    spec = stft_magnitude(x, cfg)
    assert np.all(np.argmax(spec.magnitudes, axis=1) == 64)

    # check one frame against a direct DFT sum
    frame = x.samples[:1024]
    k = np.arange(513)[:, None]
    oracle = np.abs(np.sum(frame[None, :] * np.exp(-2j * np.pi * k * n[None, :1024] / 1024.0), axis=1))
    assert np.max(np.abs(spec.magnitudes[0] - oracle)) < 1e-8


def test_stft_parseval_per_frame():
    rng = np.random.default_rng(11)
    x = Waveform(rng.standard_normal(2000))
    cfg = FrameConfig()
    spec = stft_magnitude(x, cfg)
    windowed = frame_signal(x, cfg) * cfg.window_values()[None, :]
    m = spec.magnitudes
    # two-sided energy from the one-sided magnitudes (real input)
    two_sided = m[:, 0] ** 2 + m[:, -1] ** 2 + 2.0 * np.sum(m[:, 1:-1] ** 2, axis=1)
    time_energy = cfg.fft_size * np.sum(windowed**2, axis=1)
    rel = np.abs(two_sided - time_energy) / time_energy
    assert np.max(rel) < 1e-10


def test_stft_sign_flip_invariance():
    rng = np.random.default_rng(13)
    x = rng.standard_normal(1500)
    cfg = FrameConfig()
    a = stft_magnitude(Waveform(x), cfg).magnitudes
    b = stft_magnitude(Waveform(-x), cfg).magnitudes
    assert np.allclose(a, b, atol=1e-12)


def test_hann_overlap_add_is_constant():
    cfg = FrameConfig(frame_length=400, hop_length=200, fft_size=512)
    w = cfg.window_values()
    total = np.zeros(400 + 200 * 20)
    for t in range(21):
        total[t * 200 : t * 200 + 400] += w
    interior = total[400:-400]
    assert np.max(np.abs(interior - interior[0])) < 1e-12


def test_frame_config_validation():
    with pytest.raises(ContractError):
        FrameConfig(frame_length=100, hop_length=200)
    with pytest.raises(ContractError):
        FrameConfig(fft_size=1000)
    with pytest.raises(ContractError):
        FrameConfig(window="hamming")
    with pytest.raises(ContractError):
        FrameConfig(preemphasis=1.0)


def test_frame_index_partition_is_monotone_and_complete():
    cfg = FrameConfig()
    n_samples = 4000
    n_frames = cfg.n_frames(n_samples)
    idx = frame_index_of_samples(n_samples, n_frames, cfg)
    assert idx.shape == (n_samples,)
    assert idx[0] == 0 and idx[-1] == n_frames - 1
    assert np.all(np.diff(idx) >= 0)
    # each frame center belongs to its own frame
    for t in range(n_frames):
        assert idx[cfg.frame_center(t)] == t


def test_frame_spans_tile_the_signal():
    cfg = FrameConfig()
    n_samples = 2000
    n_frames = cfg.n_frames(n_samples)
    spans = frame_spans(n_samples, n_frames, cfg)
    covered = sum(b - a for a, b in spans)
    assert covered == n_samples
    # spans are contiguous in order
    pos = 0
    for a, b in spans:
        if a == b:
            continue
        assert a == pos
        pos = b
    assert pos == n_samples


def test_waveform_rejects_nan():
    with pytest.raises(ContractError):
        Waveform(np.array([0.0, np.nan]))
