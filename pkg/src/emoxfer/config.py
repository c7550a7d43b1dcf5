"""Run configuration: one structured file covering every module's knobs.

Configs are nested key-value YAML. Unknown keys are rejected so typos fail
loudly instead of silently using a default. The schema is documented in
README.md; programmatic defaults here are the desk-scale profile.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError


@dataclass
class AudioConfig:
    sample_rate: int = 16000
    frame_length_ms: float = 50.0
    frame_shift_ms: float = 12.5
    n_mels: int = 80
    n_fft: int = 1024
    mel_floor: float = 1e-5          # amplitude floor before log compression
    f0_min_hz: float = 60.0
    f0_max_hz: float = 500.0
    voicing_threshold: float = 0.3
    energy_floor_db: float = -80.0

    @property
    def frame_length(self) -> int:
        return int(round(self.sample_rate * self.frame_length_ms / 1000.0))

    @property
    def frame_shift(self) -> int:
        return int(round(self.sample_rate * self.frame_shift_ms / 1000.0))


@dataclass
class ModelConfig:
    d_model: int = 256               # hidden sequence / timbre encoding width
    n_mels: int = 80
    vocab_size: int = 32             # phoneme inventory (filled from data)
    n_speakers: int = 1              # filled from data
    n_emotions: int = 8              # N: labeled emotion types
    n_logits: int = 10               # M >= N: emotion logit width
    emotion_hidden: int = 128        # d_h: extractor bottleneck width
    extractor_channels: tuple = (32, 32, 64, 64, 128)
    extractor_gru_hidden: int = 128
    encoder_blocks: int = 4
    decoder_blocks: int = 4
    attention_heads: int = 2
    ffn_hidden: int = 1024
    ffn_kernel: int = 3
    dropout: float = 0.1
    prosody_layers: int = 6
    prosody_kernel: int = 3
    prosody_dropout: float = 0.2
    timbre_mode: str = "lookup"      # "lookup" | "zero_shot"
    speaker_lstm_hidden: int = 256
    vq_groups: int = 4
    vq_codebook_size: int = 32
    vq_commitment: float = 0.25
    vq_ema_decay: float = 0.99
    vq_dead_steps: int = 1000


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_steps: int = 3000            # paper-scale training runs 200k steps
    lambda_pros: float = 0.8
    lambda_adv: float = 0.01
    lambda_emo: float = 0.5
    alpha: float = 1.2
    tau_start: float = 1.0
    tau_end: float = 0.1
    tau_anneal_frac: float = 0.8
    warmup_steps: int = 4000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    grad_clip: float = 1.0
    seed: int = 0
    log_every: int = 1
    torch_threads: int = 1


@dataclass
class RunConfig:
    audio: AudioConfig = field(default_factory=AudioConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(_normalize(self.to_dict()), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(_normalize(self.to_dict()), fh, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
        cfg = cls()
        sections = {"audio": AudioConfig, "model": ModelConfig, "train": TrainConfig}
        for key, value in data.items():
            if key not in sections:
                raise ConfigError(f"unknown config section {key!r}")
            setattr(cfg, key, _load_section(sections[key], value, key))
        _validate(cfg)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data or {})


def _load_section(section_cls, data, section_name):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {section_name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(section_cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) in config section {section_name!r}: {sorted(unknown)}"
        )
    kwargs = dict(data)
    if "extractor_channels" in kwargs:
        kwargs["extractor_channels"] = tuple(kwargs["extractor_channels"])
    return section_cls(**kwargs)


def _validate(cfg: RunConfig) -> None:
    m, t = cfg.model, cfg.train
    if m.n_logits < m.n_emotions:
        raise ConfigError("model.n_logits must be >= model.n_emotions")
    if m.d_model % m.vq_groups != 0:
        raise ConfigError("model.d_model must be divisible by model.vq_groups")
    if m.timbre_mode not in ("lookup", "zero_shot"):
        raise ConfigError(f"unknown timbre_mode {m.timbre_mode!r}")
    if t.batch_size < 1:
        raise ConfigError("train.batch_size must be >= 1")
    if min(t.lambda_pros, t.lambda_adv, t.lambda_emo) < 0:
        raise ConfigError("loss weights must be non-negative")
    if t.alpha <= 1.0:
        raise ConfigError("train.alpha must be > 1")


def _normalize(obj):
    if isinstance(obj, dict):
        return {k: _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    return obj
