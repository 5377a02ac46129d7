"""Vocoder settings as one flat key = value namespace.

The file format is line oriented: `#` starts a comment, everything else
is `key = value` with keys prefixed by the module they configure, e.g.
`cepstral.n_mels = 24`. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .dsp import FrameConfig
from .errors import ContractError

EXCITATION_MODES = ("impulse", "dnn", "gan")


@dataclass
class PipelineConfig:
    sample_rate: int = 16000
    frame_length: int = 400
    hop_length: int = 80
    fft_size: int = 1024
    preemphasis: float = 0.97
    n_mels: int = 24
    n_mfcc: int = 20
    mel_f_min: float = 0.0
    mel_f_max: float = 8000.0
    ar_order: int = 30
    f0_min: float = 50.0
    f0_max: float = 500.0
    nacf_threshold: float = 0.55
    silence_rms: float = 1e-3
    excitation: str = "impulse"
    seed: int = 0
    pulse_weights: str = ""
    gan_weights: str = ""
    f0_weights: str = ""

    def __post_init__(self):
        if self.excitation not in EXCITATION_MODES:
            raise ContractError(
                f"excitation.mode must be one of {EXCITATION_MODES}, got "
                f"{self.excitation!r}")
        if self.n_mfcc > self.n_mels:
            raise ContractError(
                f"cepstral.n_mfcc {self.n_mfcc} exceeds cepstral.n_mels "
                f"{self.n_mels}")
        if not 0 < self.f0_min < self.f0_max:
            raise ContractError(
                f"need 0 < pitch.f_min < pitch.f_max, got {self.f0_min} "
                f"and {self.f0_max}")
        if self.ar_order < 1:
            raise ContractError(f"envelope.order must be >= 1, got "
                                f"{self.ar_order}")
        if self.sample_rate <= 0:
            raise ContractError("frame.sample_rate must be positive")
        # frame geometry constraints are enforced by FrameConfig
        self.frame_config()

    def frame_config(self) -> FrameConfig:
        return FrameConfig(frame_length=self.frame_length,
                           hop_length=self.hop_length,
                           fft_size=self.fft_size,
                           preemphasis=self.preemphasis)


# config key -> dataclass attribute; order here is the dump order
KEYS = {
    "frame.sample_rate": "sample_rate",
    "frame.length": "frame_length",
    "frame.hop": "hop_length",
    "frame.fft_size": "fft_size",
    "frame.preemphasis": "preemphasis",
    "cepstral.n_mels": "n_mels",
    "cepstral.n_mfcc": "n_mfcc",
    "cepstral.f_min": "mel_f_min",
    "cepstral.f_max": "mel_f_max",
    "envelope.order": "ar_order",
    "pitch.f_min": "f0_min",
    "pitch.f_max": "f0_max",
    "pitch.nacf_threshold": "nacf_threshold",
    "pitch.silence_rms": "silence_rms",
    "pitch.weights": "f0_weights",
    "excitation.mode": "excitation",
    "excitation.pulse_weights": "pulse_weights",
    "excitation.gan_weights": "gan_weights",
    "seed": "seed",
}

_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(key: str, attr: str, text: str):
    kind = _TYPES[attr]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ContractError(f"{key}: cannot parse {text!r} as {kind}")


def parse_assignment(line: str) -> tuple[str, str]:
    if "=" not in line:
        raise ContractError(f"expected key = value, got {line!r}")
    key, _, value = line.partition("=")
    key = key.strip()
    value = value.strip()
    if key not in KEYS:
        raise ContractError(f"unknown config key {key!r}")
    if not value:
        raise ContractError(f"{key}: empty value")
    return key, value


def apply_assignments(cfg: PipelineConfig,
                      assignments: list[str]) -> PipelineConfig:
    """New config with the given `key=value` strings applied on top."""
    values = {f.name: getattr(cfg, f.name) for f in fields(PipelineConfig)}
    for line in assignments:
        key, text = parse_assignment(line)
        attr = KEYS[key]
        values[attr] = _parse_value(key, attr, text)
    return PipelineConfig(**values)


def load_config(path: str,
                base: PipelineConfig | None = None) -> PipelineConfig:
    if base is None:
        base = PipelineConfig()
    assignments = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                parse_assignment(line)
            except ContractError as e:
                raise ContractError(f"{path}:{lineno}: {e}")
            assignments.append(line)
    try:
        return apply_assignments(base, assignments)
    except ContractError as e:
        raise ContractError(f"{path}: {e}")


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for key, attr in KEYS.items():
        value = getattr(cfg, attr)
        if value == "":
            continue  # empty paths reload as the identical defaults
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
