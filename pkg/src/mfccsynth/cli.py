"""Command-line surface for the vocoder.

Exit codes: 0 on success, 1 for internal invariant violations, 2 for
user errors such as missing files, malformed inputs, or bad arguments.
The environment variable VOCODER_SEED, when set, overrides the master
seed from any config file or --set assignment.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .cepstral import read_mfcc, write_mfcc
from .config import (EXCITATION_MODES, PipelineConfig, apply_assignments,
                     dump_config, load_config)
from .envelope import write_envelope
from .errors import ContractError, FormatError, VocoderError
from .excitation import read_pulse_dataset, write_pulse_dataset
from .neural.gradcheck import run_all
from .neural.models import Generator, PulseModel
from .neural.serialize import load_weights
from .neural.train import smooth_pulse_surrogate, train_gan
from .pipeline import (analyze, copy_synthesize, envelope_from_mfcc,
                       residual_dataset, synthesize, utterance_rng)
from .pitch import (dequantize_f0, f0_metrics, f0_net_forward, quantize_f0,
                    read_f0_track, write_f0_track)
from .wavfile import read_wav, write_wav


def _utterance_name(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _config_from(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    if args.set:
        cfg = apply_assignments(cfg, args.set)
    if getattr(args, "excitation", None):
        cfg = apply_assignments(cfg,
                                [f"excitation.mode = {args.excitation}"])
    env_seed = os.environ.get("VOCODER_SEED")
    if env_seed is not None:
        cfg = apply_assignments(cfg, [f"seed = {env_seed}"])
    return cfg


def _load_excitation_models(cfg: PipelineConfig):
    pulse_model = None
    generator = None
    if cfg.excitation in ("dnn", "gan"):
        if not cfg.pulse_weights:
            raise ContractError(
                f"excitation.mode {cfg.excitation!r} requires "
                f"excitation.pulse_weights")
        pulse_model = PulseModel.load(cfg.pulse_weights)
    if cfg.excitation == "gan":
        if not cfg.gan_weights:
            raise ContractError(
                "excitation.mode 'gan' requires excitation.gan_weights")
        generator = Generator.load(cfg.gan_weights)
    return pulse_model, generator


def cmd_analyze(args) -> int:
    cfg = _config_from(args)
    wave = read_wav(args.wav_in)
    seq, track = analyze(wave, cfg)
    write_mfcc(args.mfcc_out, seq)
    write_f0_track(args.f0_out, track)
    voiced_pct = 100.0 * np.mean(track.voiced) if track.n_frames else 0.0
    print(f"frames {seq.n_frames}, voiced {voiced_pct:.1f}%")
    return 0


def _resolve_track(args, seq, cfg):
    if args.predict_f0:
        layers = load_weights(args.predict_f0)
        return f0_net_forward(seq, layers, f_min=cfg.f0_min,
                              f_max=cfg.f0_max)
    return read_f0_track(args.f0_in)


def cmd_synth(args) -> int:
    cfg = _config_from(args)
    seq = read_mfcc(args.mfcc_in)
    track = _resolve_track(args, seq, cfg)
    pulse_model, generator = _load_excitation_models(cfg)
    rng = utterance_rng(cfg, _utterance_name(args.mfcc_in))
    out = synthesize(seq, track, cfg, rng=rng, pulse_model=pulse_model,
                     generator=generator)
    write_wav(args.wav_out, out)
    print(f"wrote {args.wav_out} ({len(out)} samples, "
          f"{cfg.excitation} excitation)")
    return 0


def cmd_copy_synth(args) -> int:
    cfg = _config_from(args)
    wave = read_wav(args.wav_in)
    pulse_model, generator = _load_excitation_models(cfg)
    rng = utterance_rng(cfg, _utterance_name(args.wav_in))
    out, seq, _ = copy_synthesize(wave, cfg, rng=rng,
                                  pulse_model=pulse_model,
                                  generator=generator)
    write_wav(args.wav_out, out)
    print(f"wrote {args.wav_out} ({seq.n_frames} frames, "
          f"{cfg.excitation} excitation)")
    return 0


def cmd_extract_pulses(args) -> int:
    cfg = _config_from(args)
    wave = read_wav(args.wav_in)
    dataset = residual_dataset(wave, cfg)
    write_pulse_dataset(args.dataset_out, dataset)
    if dataset.count == 0:
        print("warning: no voiced frames, dataset is empty",
              file=sys.stderr)
    print(f"pulses {dataset.count}, skipped marks "
          f"{dataset.skipped_marks}, dropped frames "
          f"{dataset.dropped_frames}")
    return 0


def cmd_train_gan(args) -> int:
    cfg = _config_from(args)
    dataset = read_pulse_dataset(args.dataset_in)
    if dataset.count == 0:
        raise ContractError(f"{args.dataset_in} holds no pulses")
    pulses = dataset.sample_matrix()
    checkpoint_dir = args.checkpoint_dir
    if checkpoint_dir is None:
        checkpoint_dir = os.path.dirname(os.path.abspath(args.weights_out))
    result = train_gan(pulses, smooth_pulse_surrogate(pulses),
                       epochs=args.epochs, batch_size=args.batch_size,
                       seed=cfg.seed, checkpoint_dir=checkpoint_dir,
                       log=print)
    result.generator.save(args.weights_out)
    print(f"wrote {args.weights_out} after {result.epochs_run} epochs")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _config_from(args)
    results = run_all(seed=cfg.seed)
    worst = 0.0
    failed = 0
    for name, err, bound in results:
        ok = err < bound
        failed += 0 if ok else 1
        worst = max(worst, err)
        print(f"{name}: {err:.3e} (bound {bound:.0e}) "
              f"{'PASS' if ok else 'FAIL'}")
    print(f"{len(results) - failed}/{len(results)} checks passed, "
          f"worst {worst:.3e}")
    return 0 if failed == 0 else 1


def _fmt_metric(value) -> str:
    return "n/a" if value is None else f"{value:.6g}"


def cmd_f0_metrics(args) -> int:
    ref = read_f0_track(args.ref)
    gen = read_f0_track(args.gen)
    m = f0_metrics(ref, gen)
    print(f"RMSE {_fmt_metric(m['rmse_hz'])} Hz, "
          f"VUV error {_fmt_metric(m['vuv_error_pct'])} %, "
          f"corr {_fmt_metric(m['corr'])}")
    return 0


def cmd_f0_quantize(args) -> int:
    cfg = _config_from(args)
    track = read_f0_track(args.f0_in)
    classes = quantize_f0(track, f_min=cfg.f0_min, f_max=cfg.f0_max)
    out = dequantize_f0(classes, track.hop_length, track.sample_rate,
                        f_min=cfg.f0_min, f_max=cfg.f0_max)
    write_f0_track(args.f0_out, out)
    err = np.abs(out.f0_hz - track.f0_hz)[track.voiced & out.voiced]
    worst = float(err.max()) if err.size else 0.0
    print(f"frames {track.n_frames}, voiced {int(track.voiced.sum())}, "
          f"max quantization error {worst:.4f} Hz")
    return 0


def cmd_invert_envelope(args) -> int:
    cfg = _config_from(args)
    seq = read_mfcc(args.mfcc_in)
    env = envelope_from_mfcc(seq, cfg)
    write_envelope(args.are_out, env)
    print(f"wrote {args.are_out} ({env.n_frames} frames, order "
          f"{env.order})")
    return 0


def cmd_dump_config(args) -> int:
    cfg = _config_from(args)
    sys.stdout.write(dump_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override one setting (repeatable)")

    parser = argparse.ArgumentParser(
        prog="mfccsynth",
        description="MFCC analysis and waveform synthesis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common],
                       help="wav -> MFCC and F0 files")
    p.add_argument("wav_in")
    p.add_argument("mfcc_out")
    p.add_argument("f0_out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", parents=[common],
                       help="MFCC + F0 -> wav")
    p.add_argument("mfcc_in")
    p.add_argument("wav_out")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--f0", dest="f0_in", help="F0 track file")
    group.add_argument("--predict-f0", metavar="WEIGHTS",
                       help="predict F0 from the MFCCs with this network")
    p.add_argument("--excitation", choices=EXCITATION_MODES)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("copy-synth", parents=[common],
                       help="analyze then resynthesize one wav")
    p.add_argument("wav_in")
    p.add_argument("wav_out")
    p.add_argument("--excitation", choices=EXCITATION_MODES)
    p.set_defaults(func=cmd_copy_synth)

    p = sub.add_parser("extract-pulses", parents=[common],
                       help="wav -> residual pulse dataset")
    p.add_argument("wav_in")
    p.add_argument("dataset_out")
    p.set_defaults(func=cmd_extract_pulses)

    p = sub.add_parser("train-gan", parents=[common],
                       help="train the residual generator on a dataset")
    p.add_argument("dataset_in")
    p.add_argument("weights_out")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--checkpoint-dir",
                   help="default: directory of weights_out")
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference gradient verification")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("f0-metrics", parents=[common],
                       help="compare two F0 track files")
    p.add_argument("ref")
    p.add_argument("gen")
    p.set_defaults(func=cmd_f0_metrics)

    p = sub.add_parser("f0-quantize", parents=[common],
                       help="round-trip an F0 track through the codec")
    p.add_argument("f0_in")
    p.add_argument("f0_out")
    p.set_defaults(func=cmd_f0_quantize)

    p = sub.add_parser("invert-envelope", parents=[common],
                       help="MFCC -> all-pole envelope file")
    p.add_argument("mfcc_in")
    p.add_argument("are_out")
    p.set_defaults(func=cmd_invert_envelope)

    p = sub.add_parser("dump-config", parents=[common],
                       help="print the effective configuration")
    p.set_defaults(func=cmd_dump_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        name = e.filename if e.filename else e
        print(f"error: no such file: {name}", file=sys.stderr)
        return 2
    except (ContractError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except VocoderError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
