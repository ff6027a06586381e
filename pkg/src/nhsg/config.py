"""Pipeline configuration: one INI-style file with a section per module.

Every tunable named by the pipeline appears here with its default.  Unknown
sections or keys are rejected (all offenders listed at once); the
[pipeline] section with a `version` key is mandatory.  Command-line flags
override file values, which override the defaults below.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError
from .finetune import FinetuneConfig, PredictorConfig
from .pitch import PitchConfig
from .representation import PseudoSslConfig
from .segmentation import SegmentationConfig
from .stage1 import PhonemeVocab, Stage1Config
from .stage2 import (DiscriminatorConfig, GanLossWeights, GeneratorConfig,
                     Stage2TrainConfig)

CONFIG_VERSION = 1


def _int_list(raw: str):
    return tuple(int(x) for x in raw.replace(" ", "").split(",") if x != "")


def _str_list(raw: str):
    return tuple(x for x in raw.replace(" ", "").split(",") if x != "")


def _bool(raw: str):
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# section -> key -> (parser, default); comments in default_config_text()
SCHEMA = {
    "pipeline": {
        "version": (int, CONFIG_VERSION),
        "seed": (int, 0),
    },
    "audio": {
        "sample_rate": (int, 16000),
        "hop_samples": (int, 320),
        "win_samples": (int, 1024),
        "fft_size": (int, 1024),
    },
    "pitch": {
        "fmin": (float, 50.0),
        "fmax": (float, 1100.0),
        "harmonicity_threshold": (float, 0.1),
        "frame_period_ms": (float, 20.0),
    },
    "segmentation": {
        "silence_threshold_db": (float, -40.0),
        "min_silence_ms": (int, 300),
        "max_clip_s": (float, 30.0),
        "resegment_above_s": (float, 15.0),
        "max_iterations": (int, 3),
        "threshold_step_db": (float, 5.0),
        "min_silence_step_ms": (int, -100),
    },
    "representation": {
        "layer_ids": (_int_list, (1, 2, 3, 4)),
        "kmeans_k": (int, 64),
        "kmeans_max_iter": (int, 100),
        "feature_dim": (int, 64),
        "pseudo_ssl_n_mels": (int, 64),
        "pseudo_ssl_target_rate": (int, 16000),
    },
    "stage1": {
        "encoder_layers": (int, 2),
        "decoder_layers": (int, 2),
        "attention_dim": (int, 64),
        "heads": (int, 2),
        "ffn_hidden": (int, 128),
        "predictor_hidden": (int, 64),
        "rel_attn_radius": (int, 8),
        "lambda_out": (float, 1.0),
        "lambda_dur": (float, 1.0),
        "lambda_pitch": (float, 1.0),
        "token_loss": (str, "cross_entropy"),
        "epochs": (int, 60),
        "learning_rate": (float, 5e-4),
        "grad_clip": (float, 1.0),
        "phonemes": (_str_list, ("SP", "a", "i", "u", "e", "o",
                                 "ka", "ki", "ku", "se", "so", "ta")),
        "f0_floor_hz": (float, 20.0),
        "silence_tokens": (_int_list, ()),
    },
    "stage2": {
        "token_embed_dim": (int, 48),
        "f0_embed_dim": (int, 16),
        "base_channels": (int, 32),
        "upsample_factors": (_int_list, (8, 5, 4, 2)),
        "residual_kernels": (_int_list, (3, 7, 11)),
        "residual_dilations": (_int_list, (1, 3, 5)),
        "periods": (_int_list, (2, 3, 5, 7, 11)),
        "spectral_ffts": (_int_list, (256, 512, 1024)),
        "n_bands": (int, 3),
        "lambda_adv": (float, 1.0),
        "lambda_feat_match": (float, 2.0),
        "lambda_aux": (float, 15.0),
        "steps": (int, 2000),
        "batch_size": (int, 1),
        "crop_frames": (int, 8),
        "learning_rate": (float, 1e-4),
        "warmup_steps": (int, 0),
        "clip_norm": (float, 100.0),
        "checkpoint_every": (int, 500),
    },
    "finetune": {
        "oversampling_ratio": (float, 0.9),
        "sampling": (str, "oversample"),
        "pairing": (str, "uniform"),
        "steps": (int, 500),
        "batch_size": (int, 2),
        "crop_frames": (int, 8),
        "learning_rate": (float, 1e-4),
        "predictor_learning_rate": (float, 2e-4),
        "warmup_steps": (int, 0),
        "clip_norm": (float, 100.0),
        "unpaired_weight": (float, 1.0),
        "w_token": (float, 1.0),
        "w_f0": (float, 1.0),
        "w_timbre": (float, 1.0),
        "predictor_channels": (int, 64),
        "predictor_kernels": (_int_list, (10, 3, 3, 3, 3, 2, 2)),
        "predictor_strides": (_int_list, (5, 4, 4, 2, 2, 1, 1)),
        "predictor_paddings": (_int_list, (4, 1, 1, 1, 1, 1, 0)),
        "checkpoint_every": (int, 1000),
    },
    "eval": {
        "metrics": (_str_list, ("lf0_rmse", "vuv", "sim", "mcd")),
    },
}


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.values:
            self.values = {s: {k: d for k, (_, d) in keys.items()}
                           for s, keys in SCHEMA.items()}

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        parser, _ = SCHEMA[section][key]
        self.values[section][key] = parser(raw) if isinstance(raw, str) else raw

    @property
    def seed(self) -> int:
        return int(self.get("pipeline", "seed"))

    @property
    def sample_rate(self) -> int:
        return int(self.get("audio", "sample_rate"))

    @property
    def hop_samples(self) -> int:
        return int(self.get("audio", "hop_samples"))

    # ---- typed sub-configs -------------------------------------------------

    def pitch_config(self) -> PitchConfig:
        return PitchConfig(
            fmin=self.get("pitch", "fmin"), fmax=self.get("pitch", "fmax"),
            harmonicity_threshold=self.get("pitch", "harmonicity_threshold"),
            frame_period_s=self.get("pitch", "frame_period_ms") / 1000.0)

    def segmentation_config(self) -> SegmentationConfig:
        s = self.values["segmentation"]
        return SegmentationConfig(
            silence_threshold_db=s["silence_threshold_db"],
            min_silence_ms=s["min_silence_ms"], max_clip_s=s["max_clip_s"],
            resegment_above_s=s["resegment_above_s"],
            max_iterations=s["max_iterations"],
            threshold_step_db=s["threshold_step_db"],
            min_silence_step_ms=s["min_silence_step_ms"])

    def pseudo_ssl_config(self) -> PseudoSslConfig:
        r = self.values["representation"]
        return PseudoSslConfig(
            layer_ids=r["layer_ids"], feature_dim=r["feature_dim"],
            n_mels=r["pseudo_ssl_n_mels"], target_rate=r["pseudo_ssl_target_rate"],
            frame_period_s=self.get("pitch", "frame_period_ms") / 1000.0)

    def token_vocab_sizes(self) -> tuple:
        k = self.get("representation", "kmeans_k")
        return tuple((l, k) for l in self.get("representation", "layer_ids"))

    def phoneme_vocab(self) -> PhonemeVocab:
        return PhonemeVocab(symbols=tuple(self.get("stage1", "phonemes")))

    def stage1_config(self) -> Stage1Config:
        s = self.values["stage1"]
        return Stage1Config(
            phoneme_vocab_size=len(self.get("stage1", "phonemes")),
            token_vocab_sizes=self.token_vocab_sizes(),
            encoder_layers=s["encoder_layers"], decoder_layers=s["decoder_layers"],
            attention_dim=s["attention_dim"], heads=s["heads"],
            ffn_hidden=s["ffn_hidden"], predictor_hidden=s["predictor_hidden"],
            rel_attn_radius=s["rel_attn_radius"], lambda_out=s["lambda_out"],
            lambda_dur=s["lambda_dur"], lambda_pitch=s["lambda_pitch"],
            token_loss=s["token_loss"], f0_floor_hz=s["f0_floor_hz"],
            silence_tokens=s["silence_tokens"])

    def generator_config(self) -> GeneratorConfig:
        s = self.values["stage2"]
        cfg = GeneratorConfig(
            token_vocab_sizes=self.token_vocab_sizes(),
            token_embed_dim=s["token_embed_dim"], f0_embed_dim=s["f0_embed_dim"],
            upsample_factors=s["upsample_factors"],
            residual_kernels=s["residual_kernels"],
            residual_dilations=s["residual_dilations"],
            base_channels=s["base_channels"])
        if cfg.hop_samples != self.hop_samples:
            raise ConfigError(
                f"product of upsample_factors {cfg.hop_samples} must equal "
                f"[audio] hop_samples {self.hop_samples}")
        return cfg

    def discriminator_config(self) -> DiscriminatorConfig:
        s = self.values["stage2"]
        return DiscriminatorConfig(periods=s["periods"],
                                   spectral_ffts=s["spectral_ffts"],
                                   n_bands=s["n_bands"])

    def gan_loss_weights(self) -> GanLossWeights:
        s = self.values["stage2"]
        return GanLossWeights(adv=s["lambda_adv"],
                              feat_match=s["lambda_feat_match"],
                              aux_mel=s["lambda_aux"])

    def stage2_train_config(self) -> Stage2TrainConfig:
        s = self.values["stage2"]
        return Stage2TrainConfig(
            steps=s["steps"], batch_size=s["batch_size"],
            crop_frames=s["crop_frames"], learning_rate=s["learning_rate"],
            warmup_steps=s["warmup_steps"], clip_norm=s["clip_norm"],
            checkpoint_every=s["checkpoint_every"])

    def predictor_config(self) -> PredictorConfig:
        f = self.values["finetune"]
        return PredictorConfig(
            kernel_sizes=f["predictor_kernels"], strides=f["predictor_strides"],
            paddings=f["predictor_paddings"], channels=f["predictor_channels"],
            token_vocab_sizes=self.token_vocab_sizes(),
            hop_samples=self.hop_samples)

    def finetune_config(self) -> FinetuneConfig:
        f = self.values["finetune"]
        return FinetuneConfig(
            oversampling_ratio=f["oversampling_ratio"], sampling=f["sampling"],
            pairing=f["pairing"], steps=f["steps"], batch_size=f["batch_size"],
            crop_frames=f["crop_frames"], learning_rate=f["learning_rate"],
            predictor_learning_rate=f["predictor_learning_rate"],
            warmup_steps=f["warmup_steps"], clip_norm=f["clip_norm"],
            unpaired_weight=f["unpaired_weight"], w_token=f["w_token"],
            w_f0=f["w_f0"], w_timbre=f["w_timbre"],
            checkpoint_every=f["checkpoint_every"])


def load_config(path) -> PipelineConfig:
    """Parse and validate an INI config; unknown keys are all reported."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    problems = []
    for section in parser.sections():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in SCHEMA[section]:
                problems.append(f"unknown key [{section}] {key}")
    if problems:
        raise ConfigError("config validation failed: " + "; ".join(problems))

    if not parser.has_option("pipeline", "version"):
        raise ConfigError("config must declare [pipeline] version")

    cfg = PipelineConfig()
    for section in parser.sections():
        for key, raw in parser[section].items():
            kind, _ = SCHEMA[section][key]
            try:
                cfg.values[section][key] = kind(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    if cfg.get("pipeline", "version") != CONFIG_VERSION:
        raise ConfigError(
            f"config version {cfg.get('pipeline', 'version')} unsupported "
            f"(this build reads version {CONFIG_VERSION})")
    return cfg


def default_config_text() -> str:
    """A fully commented config with every default written out."""
    notes = {
        ("pipeline", "seed"): "base RNG seed; NHSG_SEED env overrides",
        ("audio", "hop_samples"): "20 ms frame hop; generator upsampling must multiply to this",
        ("pitch", "fmax"): "raise for sources pitched above soprano range",
        ("segmentation", "max_clip_s"): "segments longer than this after all passes are dropped",
        ("segmentation", "resegment_above_s"): "pieces above this re-enter detection with relaxed settings",
        ("representation", "kmeans_k"): "tokens per layer; index k is reserved padding",
        ("stage1", "token_loss"): "cross_entropy, or l1_onehot for the L1-against-one-hot variant",
        ("stage2", "lambda_aux"): "multi-scale mel reconstruction weight",
        ("finetune", "oversampling_ratio"): "non-human : human sampling ratio",
        ("finetune", "unpaired_weight"): "0 disables the unpaired conditioning pass",
    }
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, default) in keys.items():
            if isinstance(default, tuple):
                value = ",".join(str(v) for v in default)
            else:
                value = str(default)
            comment = notes.get((section, key))
            suffix = f"  # {comment}" if comment else ""
            lines.append(f"{key} = {value}{suffix}")
        lines.append("")
    return "\n".join(lines)
