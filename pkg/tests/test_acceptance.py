"""End-to-end acceptance gates for the toolkit.

Each test covers one release criterion and prints a single summary line
on success, so `pytest tests/test_acceptance.py -s` reads as a
checklist. Tolerances are part of the contract; loosening them is a
behavior change, not a cleanup.
"""

import os
import time

import numpy as np
import scipy.linalg

from mfccsynth.cepstral import (MfccSequence, build_dct_basis,
                                build_mel_filterbank, mfcc, pseudo_inverse,
                                read_mfcc, reconstruct_spectrum,
                                reconstruct_spectrum_raw, write_mfcc)
from mfccsynth.cli import main
from mfccsynth.config import PipelineConfig
from mfccsynth.dsp import FrameConfig, Waveform
from mfccsynth.envelope import (autocorrelation_from_spectrum, read_envelope,
                                reflection_coefficients, write_envelope)
from mfccsynth.excitation import (extract_pulses, overlap_add_pulses,
                                  read_pulse_dataset, write_pulse_dataset,
                                  _pulse_window, gan_generator_forward)
from mfccsynth.kernels import levinson, levinson_batch
from mfccsynth.neural.models import PULSE_LENGTH, Generator
from mfccsynth.neural.train import train_gan
from mfccsynth.pipeline import analyze, copy_synthesize, utterance_rng
from mfccsynth.pitch import (PitchTrack, dequantize_f0, f0_metrics,
                             place_pitch_marks, quantize_f0, read_f0_track,
                             write_f0_track)
from mfccsynth.wavfile import read_wav, write_wav

from test_pipeline import make_vowel

SR = 16000

VOWELS = {
    "aa": (110.0, ((730, 90), (1090, 110), (2440, 170))),
    "iy": (132.0, ((270, 60), (2290, 100), (3010, 170))),
    "uw": (124.0, ((300, 60), (870, 100), (2240, 170))),
    "eh": (146.0, ((530, 90), (1840, 110), (2480, 170))),
    "ao": (180.0, ((570, 90), (840, 100), (2410, 170))),
}

# regression bound for re-analyzed coefficient distance (c1..c19 RMS)
# after impulse copy-synthesis. Calibrated once against the inversion
# oracle (analysis -> spectrum reconstruction -> re-analysis, no
# synthesis), which sits at 0.002 or less on the same utterances while
# the full chain measured 0.15 to 0.33; frozen with headroom.
COPY_SYNTH_MFCC_BOUND = 0.5
ORACLE_MFCC_BOUND = 0.05


def report(tag, detail):
    print(f"\n[{tag}] PASS: {detail}")


def default_transforms(cfg=None):
    if cfg is None:
        cfg = PipelineConfig()
    fc = cfg.frame_config()
    mel = build_mel_filterbank(cfg.n_mels, fc.n_bins, cfg.sample_rate,
                               f_min=cfg.mel_f_min, f_max=cfg.mel_f_max)
    dct = build_dct_basis(cfg.n_mfcc, cfg.n_mels)
    return fc, mel, dct


def test_01_matrix_identities():
    t0 = time.time()
    fc, mel, dct = default_transforms()
    d_dev = np.max(np.abs(dct.forward @ dct.pseudo_inverse - np.eye(20)))
    m_dev = np.max(np.abs(mel.weights @ pseudo_inverse(mel.weights)
                          - np.eye(24)))
    assert d_dev < 1e-12
    assert m_dev < 1e-8
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report("PRIMARY-1", f"matrix identities: DCT dev {d_dev:.2e} "
                        f"(< 1e-12), mel dev {m_dev:.2e} (< 1e-8), "
                        f"{elapsed:.2f}s")


def test_02_cepstral_round_trip():
    t0 = time.time()
    fc, mel, dct = default_transforms()
    rng = np.random.default_rng(7)
    c = rng.standard_normal((1000, 20)) * 0.3
    seq = MfccSequence(c, SR, 80)
    spec = reconstruct_spectrum(seq, mel, dct, fc)
    raw = reconstruct_spectrum_raw(seq, mel, dct)
    back = mfcc(spec, mel, dct).coefficients
    support = mel.weights.sum(axis=0) > 0
    clean = np.all(raw[:, support] >= 0.0, axis=1)
    floored_pct = 100.0 * (1.0 - clean.mean())
    assert clean.sum() > 500
    rel = (np.linalg.norm(back[clean] - c[clean], axis=1)
           / np.linalg.norm(c[clean], axis=1))
    worst = np.max(rel)
    assert worst < 1e-3
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report("PRIMARY-2", f"cepstral round trip: worst rel err {worst:.2e} "
                        f"(< 1e-3) on {clean.sum()}/1000 frames, flooring "
                        f"active on {floored_pct:.1f}%, {elapsed:.2f}s")


def _spectrum_of_allpole(a, gain, n_bins=513, fft_size=1024):
    w = np.exp(-2j * np.pi * np.arange(fft_size)[:, None]
               * np.arange(len(a))[None, :] / fft_size)
    h = gain / np.abs(w @ a)
    return h[:n_bins]


def test_03_ar_fitting():
    t0 = time.time()
    # analytic recovery of known low-order filters
    for a_true in (np.array([1.0, -0.8]), np.array([1.0, -1.2, 0.72])):
        s = _spectrum_of_allpole(a_true, 2.0)
        r = autocorrelation_from_spectrum(s[None, :], 1024,
                                          len(a_true) - 1)[0]
        a, err = levinson(r, len(a_true) - 1)
        assert np.max(np.abs(a - a_true)) < 1e-3
        assert abs(np.sqrt(err) - 2.0) < 1e-2
    # parity with a direct Toeplitz solve at the production order
    rng = np.random.default_rng(11)
    smooth = np.fft.irfft(np.fft.rfft(
        rng.standard_normal((1000, 64)), axis=1)[:, :5], 64, axis=1)
    spectra = np.exp(smooth * 1.5)
    up = np.repeat(spectra, 9, axis=1)[:, :513]
    r_all = autocorrelation_from_spectrum(up, 1024, 30)
    rc = r_all[0].copy()
    rc[0] *= 1.0 + 1e-6  # the recursion inflates lag 0 the same way
    direct = scipy.linalg.solve_toeplitz(
        (rc[:30], rc[:30]), -rc[1:31])
    a0, _ = levinson(r_all[0], 30)
    lev_dev = np.max(np.abs(a0[1:] - direct))
    assert lev_dev < 1e-8
    # stability across the batch
    coeffs, err = levinson_batch(r_all, 30)
    refl = reflection_coefficients(coeffs)
    stable = np.all(np.abs(refl) < 1.0, axis=1)
    assert stable.all()
    for row in coeffs[::100]:
        assert np.max(np.abs(np.roots(row))) < 1.0
    assert np.all(err > 0)
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report("PRIMARY-3", f"AR fitting: analytic recovery < 1e-3, Levinson "
                        f"vs Toeplitz dev {lev_dev:.2e} (< 1e-8), "
                        f"1000/1000 stable, {elapsed:.2f}s")


def test_04_gradient_suite(capsys):
    t0 = time.time()
    code = main(["gradcheck"])
    out = capsys.readouterr().out
    elapsed = time.time() - t0
    assert code == 0
    assert "FAIL" not in out
    summary = [ln for ln in out.splitlines() if "checks passed" in ln]
    assert summary
    assert elapsed < 300.0
    report("PRIMARY-4", f"gradient suite: {summary[0].strip()}, "
                        f"{elapsed:.1f}s")


def _band_masks():
    freqs = np.fft.rfftfreq(PULSE_LENGTH, 1.0 / SR)
    hb = freqs >= 4000.0
    return hb, ~hb


def _band_ratio_db(pulses):
    hb, lb = _band_masks()
    mag2 = np.abs(np.fft.rfft(pulses, axis=1)) ** 2
    ratio = mag2[:, hb].sum(axis=1) / mag2[:, lb].sum(axis=1)
    return 10.0 * np.log10(np.mean(ratio))


def _toy_pulse_set(n, rng):
    """Fixed smooth pulse plus a high-band component the smoothing
    removes: a deterministic 4-8 kHz burst 8.5 dB under the low band
    and per-pulse high-band noise another 8.5 dB down. The burst
    carries most of the high-band energy, so the target band ratio is
    a stable property of the distribution rather than of one noise
    draw."""
    freqs = np.fft.rfftfreq(PULSE_LENGTH, 1.0 / SR)
    hb, lb = _band_masks()
    win = np.hanning(PULSE_LENGTH)
    base = np.zeros(PULSE_LENGTH)
    base[200] = 1.0
    smooth = np.fft.irfft(np.fft.rfft(base) * (freqs <= 3000.0),
                          PULSE_LENGTH) * win
    smooth = smooth / np.abs(smooth).max() * 0.8
    lb_energy = np.sum(np.abs(np.fft.rfft(smooth)) ** 2 * lb)
    burst = np.fft.irfft(np.fft.rfft(base) * hb, PULSE_LENGTH) * win
    e = np.sum(np.abs(np.fft.rfft(burst)) ** 2 * hb)
    burst *= np.sqrt(lb_energy / e * 10 ** (-8.5 / 10.0))
    noise = rng.standard_normal((n, PULSE_LENGTH))
    nf = np.fft.rfft(noise, axis=1)
    nf[:, lb] = 0.0
    hb_noise = np.fft.irfft(nf, PULSE_LENGTH, axis=1) * win
    e = np.mean(np.sum(np.abs(np.fft.rfft(hb_noise, axis=1)) ** 2 * hb,
                       axis=1))
    hb_noise *= np.sqrt(lb_energy / e * 10 ** (-17.0 / 10.0))
    return smooth[None, :] + burst[None, :] + hb_noise, smooth


def test_05_toy_residual_gan(tmp_path):
    """Adversarial training must restore the high band the smoothing
    removed. Generator quality is not monotone over a GAN run, so the
    protocol is ordinary early stopping: checkpoint every epoch,
    select the one whose band ratio on held-out noise comes closest
    to the real data, then grade the selected generator on a second,
    disjoint noise draw."""
    t0 = time.time()
    rng = np.random.default_rng(0)
    real, smooth = _toy_pulse_set(2048, rng)
    xhat = np.tile(smooth, (2048, 1))
    real_db = _band_ratio_db(real)
    xhat_db = _band_ratio_db(xhat)
    assert real_db - xhat_db > 6.0
    epochs = 10
    result = train_gan(real, xhat, epochs=epochs, batch_size=64,
                       lr=3e-5, seed=0, checkpoint_dir=str(tmp_path))
    assert result.epochs_run == epochs
    for row in result.history:
        assert np.isfinite([row["loss_d"], row["loss_g_adv"],
                            row["loss_g_peek"]]).all()
    z_sel = np.random.default_rng(7).standard_normal((256, PULSE_LENGTH))
    x_sel = np.tile(smooth, (256, 1))
    best, best_gap = None, np.inf
    for e in range(1, epochs + 1):
        g = Generator.load(
            os.path.join(str(tmp_path), f"generator_epoch{e:03d}.nnw"))
        gap = abs(_band_ratio_db(gan_generator_forward(g, x_sel, z_sel))
                  - real_db)
        if gap < best_gap:
            best, best_gap = g, gap
    z = np.random.default_rng(99).standard_normal((512, PULSE_LENGTH))
    fake = gan_generator_forward(best, np.tile(smooth, (512, 1)), z)
    fake_db = _band_ratio_db(fake)
    gap = abs(fake_db - real_db)
    assert gap <= 3.0
    elapsed = time.time() - t0
    assert elapsed < 1800.0
    report("PRIMARY-5", f"toy residual GAN: selected generator band "
                        f"ratio {fake_db:+.2f} dB vs real {real_db:+.2f} "
                        f"dB (gap {gap:.2f} <= 3), smooth input deficient "
                        f"by {real_db - xhat_db:.1f} dB (> 6), "
                        f"{len(result.history)} finite loss rows, "
                        f"{elapsed:.0f}s")


def test_06_copy_synthesis():
    t0 = time.time()
    cfg = PipelineConfig()
    fc, mel, dct = default_transforms(cfg)
    details = []
    for name, (f0, formants) in VOWELS.items():
        wave = make_vowel(f0, formants)
        seq, track = analyze(wave, cfg)
        oracle = mfcc(reconstruct_spectrum(seq, mel, dct, fc), mel,
                      dct).coefficients
        d_oracle = np.sqrt(np.mean(
            (oracle[:, 1:] - seq.coefficients[:, 1:]) ** 2))
        assert d_oracle < ORACLE_MFCC_BOUND
        out, _, _ = copy_synthesize(wave, cfg,
                                    rng=utterance_rng(cfg, name))
        assert np.all(np.isfinite(out.samples))
        seq2, track2 = analyze(out, cfg)
        both = track.voiced & track2.voiced
        assert both.sum() > 0
        close = np.abs(track.f0_hz - track2.f0_hz)[both] <= 3.0
        f0_pct = 100.0 * np.mean(close)
        assert f0_pct >= 95.0
        dist = np.sqrt(np.mean(
            (seq2.coefficients[:, 1:] - seq.coefficients[:, 1:]) ** 2))
        assert dist < COPY_SYNTH_MFCC_BOUND
        db = 20.0 * np.log10(np.sqrt(np.mean(out.samples ** 2))
                             / np.sqrt(np.mean(wave.samples ** 2)))
        assert abs(db) <= 12.0
        details.append(f"{name} f0 {f0_pct:.0f}% dist {dist:.2f} "
                       f"rms {db:+.1f}dB")
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report("PRIMARY-6", "copy-synthesis on 5 vowels: "
           + "; ".join(details) + f", {elapsed:.1f}s")


def test_07_f0_codec_and_metrics():
    t0 = time.time()
    half_bin = (500.0 - 50.0) / 508.0
    worst = 0.0
    for f in np.arange(50.0, 501.0, 1.0):
        track = PitchTrack(np.array([f]), np.array([True]), 80, SR)
        back = dequantize_f0(quantize_f0(track), 80, SR)
        worst = max(worst, abs(back.f0_hz[0] - f))
    assert worst <= half_bin + 1e-9
    ref = PitchTrack(np.array([100.0, 120.0, 140.0, 160.0]),
                     np.ones(4, dtype=bool), 80, SR)
    gen = PitchTrack(ref.f0_hz + 10.0, np.ones(4, dtype=bool), 80, SR)
    m = f0_metrics(ref, gen)
    assert m["rmse_hz"] == 10.0
    assert abs(m["corr"] - 1.0) < 1e-12
    assert m["vuv_error_pct"] == 0.0
    voiced_gen = np.array([True, True, False, True, True, False, True,
                           True])
    flags = PitchTrack(np.where(voiced_gen, 100.0, 0.0), voiced_gen, 80,
                       SR)
    m2 = f0_metrics(PitchTrack(np.full(8, 100.0), np.ones(8, dtype=bool),
                               80, SR), flags)
    assert m2["vuv_error_pct"] == 25.0
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report("PRIMARY-7", f"F0 codec worst abs error {worst:.4f} Hz "
                        f"(<= {half_bin:.4f}), metric fixtures exact, "
                        f"{elapsed:.2f}s")


def test_08_psola_cola():
    t0 = time.time()
    n = 36
    cfg = FrameConfig()
    track = PitchTrack(np.full(n, 100.0), np.ones(n, dtype=bool), 80, SR)
    length = n * 80
    res = np.random.default_rng(3).standard_normal(length) * 0.4
    marks = place_pitch_marks(track, cfg, n_samples=length)
    ds = extract_pulses(Waveform(res), marks, track)
    y = overlap_add_pulses(ds.sample_matrix(), marks, track, length,
                           normalize=False)
    lo, hi = marks.positions[1], marks.positions[-2]
    err = np.sqrt(np.mean((y.samples[lo:hi] - res[lo:hi]) ** 2)
                  / np.mean(res[lo:hi] ** 2))
    assert err < 1e-3
    w = _pulse_window(160)
    acc = np.zeros(12 * 160 + w.shape[0])
    for k in range(12):
        acc[k * 160:k * 160 + w.shape[0]] += w
    cola_dev = np.max(np.abs(acc[w.shape[0]:-w.shape[0]] - 1.0))
    assert cola_dev < 1e-6
    elapsed = time.time() - t0
    assert elapsed < 5.0
    report("PRIMARY-8", f"PSOLA round trip rel RMS {err:.2e} (< 1e-3), "
                        f"OLA interior dev {cola_dev:.2e} (< 1e-6), "
                        f"{elapsed:.2f}s")


def _twice_identical(argv, outputs):
    blobs = []
    for _ in range(2):
        assert main(argv) == 0
        row = []
        for path in outputs:
            with open(path, "rb") as f:
                row.append(f.read())
        blobs.append(row)
    for a, b in zip(*blobs):
        assert a == b


def test_09_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv("VOCODER_SEED", raising=False)
    t0 = time.time()
    d = str(tmp_path)
    wav = os.path.join(d, "u.wav")
    write_wav(wav, make_vowel(seconds=0.6))
    mfc = os.path.join(d, "u.mfc")
    f0 = os.path.join(d, "u.f0")
    _twice_identical(["analyze", wav, mfc, f0], [mfc, f0])
    out = os.path.join(d, "u_synth.wav")
    _twice_identical(["synth", mfc, out, "--f0", f0], [out])
    cp = os.path.join(d, "u_copy.wav")
    _twice_identical(["copy-synth", wav, cp], [cp])
    pls = os.path.join(d, "u.pls")
    _twice_identical(["extract-pulses", wav, pls], [pls])
    q = os.path.join(d, "u_q.f0")
    _twice_identical(["f0-quantize", f0, q], [q])
    are = os.path.join(d, "u.are")
    _twice_identical(["invert-envelope", mfc, are], [are])
    ds = read_pulse_dataset(pls)
    small = type(ds)(ds.pulses[:12], conditioning=ds.conditioning[:12])
    spls = os.path.join(d, "small.pls")
    write_pulse_dataset(spls, small)
    gw = os.path.join(d, "g.nnw")
    _twice_identical(["train-gan", spls, gw, "--epochs", "1",
                      "--batch-size", "6", "--checkpoint-dir", d],
                     [gw, os.path.join(d, "generator_epoch001.nnw"),
                      os.path.join(d, "discriminator_epoch001.nnw")])

    # every container format rewrites byte-identically after a load
    def rewrite(path, reader, writer):
        with open(path, "rb") as f:
            first = f.read()
        loaded = reader(path)
        second_path = path + ".rw"
        writer(second_path, loaded)
        with open(second_path, "rb") as f:
            assert f.read() == first

    rewrite(wav, read_wav, write_wav)
    rewrite(mfc, read_mfcc, write_mfcc)
    rewrite(f0, read_f0_track, write_f0_track)
    rewrite(are, read_envelope, write_envelope)
    rewrite(pls, read_pulse_dataset, write_pulse_dataset)
    gen = Generator.load(gw)
    gw2 = gw + ".rw"
    gen.save(gw2)
    with open(gw, "rb") as a, open(gw2, "rb") as b:
        assert a.read() == b.read()
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report("PRIMARY-9", f"determinism: 7 commands bit-identical across "
                        f"reruns, 6 formats rewrite byte-exactly, "
                        f"{elapsed:.1f}s")
