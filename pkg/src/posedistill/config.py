"""Experiment configuration: dataclasses + flat dotted-key text files.

Config files are plain text, one ``section.key = value`` per line with ``#``
comments. Values are parsed as JSON where possible (numbers, booleans,
lists), falling back to bare strings. CLI overrides use the same syntax.
Every command writes the fully resolved config back into its output
directory for reproducibility.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigurationError

# Ablation presets, ordered weakest to strongest. Each maps to the switch set
# of one training scheme: baseline MB only, then SAB, interaction, contrastive
# distillation, FEB, and finally consistent-loss distillation.
ABLATIONS = {
    "baseline": dict(sab=False, interaction=False, mcl=False, feb=False, cl=False),
    "sab": dict(sab=True, interaction=False, mcl=False, feb=False, cl=False),
    "sab-i": dict(sab=True, interaction=True, mcl=False, feb=False, cl=False),
    "sab-im": dict(sab=True, interaction=True, mcl=True, feb=False, cl=False),
    "sab-feb": dict(sab=True, interaction=True, mcl=True, feb=True, cl=False),
    "full": dict(sab=True, interaction=True, mcl=True, feb=True, cl=True),
}


@dataclass
class DataConfig:
    num_ids: int = 40
    images_per_id: int = 32
    test_num_ids: int = 16
    query_per_id: int = 4
    gallery_per_id: int = 12
    num_cameras: int = 4
    image_height: int = 64
    image_width: int = 32
    occlusion_prob: float = 0.7
    occlusion_lo: float = 0.2
    occlusion_hi: float = 0.5
    heatmap_sigma: float = 0.6
    background_clutter: int = 3
    seed: int = 0


@dataclass
class ModelConfig:
    channels: int = 64
    blocks: int = 4
    base_width: int = 16
    num_groups: int = 8
    attention_normalized: bool = False
    attention_temperature: float = 1.0
    mcl_temperature: float = 1.0
    mcl_normalize: bool = True


@dataclass
class TrainConfig:
    p: int = 4
    s: int = 4
    lr: float = 3.5e-4
    milestones: tuple = (8, 18)
    gamma: float = 0.1
    epochs: int = 30
    margin: float = 0.3
    lambda_cl: float = 0.25
    lambda_mcl: float = 0.25
    id_weight: float = 1.0
    triplet_weight: float = 1.0
    flip_prob: float = 0.5
    crop_prob: float = 0.3
    erase_prob: float = 0.3
    sab: bool = True
    interaction: bool = True
    mcl: bool = True
    feb: bool = True
    cl: bool = True
    seed: int = 0
    checkpoint_every: int = 10
    log_every: int = 1

    def validate(self):
        ms = tuple(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigurationError(f"milestones must be strictly increasing: {ms}")
        if ms and ms[-1] >= self.epochs:
            raise ConfigurationError(
                f"milestones {ms} must lie below total epochs {self.epochs}"
            )
        if self.p < 2 or self.s < 2:
            raise ConfigurationError("PK sampling needs p >= 2 and s >= 2")
        if (self.interaction or self.mcl) and not self.sab:
            raise ConfigurationError("interaction/mcl switches require sab=true")
        if self.cl and not self.feb:
            raise ConfigurationError("cl switch requires feb=true")
        if self.lambda_cl < 0 or self.lambda_mcl < 0 or self.margin < 0:
            raise ConfigurationError("loss weights and margin must be >= 0")


@dataclass
class EvalConfig:
    metric: str = "cosine"
    feature: str = "G"
    ranks: tuple = (1, 5, 10)


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def apply_ablation(self, name):
        if name not in ABLATIONS:
            raise ConfigurationError(
                f"unknown ablation {name!r}; expected one of {sorted(ABLATIONS)}"
            )
        for key, value in ABLATIONS[name].items():
            setattr(self.train, key, value)

    def validate(self):
        self.train.validate()
        if self.model.channels % self.model.num_groups != 0:
            raise ConfigurationError(
                f"channels ({self.model.channels}) must be divisible by the "
                f"part-group count ({self.model.num_groups})"
            )
        if self.eval.metric not in ("cosine", "euclidean"):
            raise ConfigurationError(f"unknown distance metric {self.eval.metric!r}")
        if self.data.images_per_id % 4 or self.data.query_per_id % 4 or self.data.gallery_per_id % 4:
            raise ConfigurationError(
                "per-identity image counts must be divisible by 4 "
                "(50/25/25 holistic/half/third composition)"
            )
        return self


def _parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(current, value, key):
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigurationError(f"{key}: expected boolean, got {value!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigurationError(f"{key}: expected integer, got {value!r}")
        if isinstance(value, (int, float)):
            return int(value)
        raise ConfigurationError(f"{key}: expected integer, got {value!r}")
    if isinstance(current, float):
        if isinstance(value, (int, float)):
            return float(value)
        raise ConfigurationError(f"{key}: expected number, got {value!r}")
    if isinstance(current, tuple):
        if isinstance(value, list):
            return tuple(value)
        if isinstance(value, str):
            return tuple(_parse_value(v) for v in value.split(",") if v.strip())
        raise ConfigurationError(f"{key}: expected list, got {value!r}")
    if isinstance(current, str):
        return str(value)
    raise ConfigurationError(f"{key}: unsupported value {value!r}")


def set_flat_key(config, key, value):
    """Apply one ``section.field = value`` assignment onto an ExperimentConfig."""
    parts = key.split(".")
    if len(parts) != 2:
        raise ConfigurationError(f"config keys are 'section.field', got {key!r}")
    section_name, field_name = parts
    section = getattr(config, section_name, None)
    if section is None or not dataclasses.is_dataclass(section):
        raise ConfigurationError(f"unknown config section {section_name!r}")
    if not hasattr(section, field_name):
        raise ConfigurationError(f"unknown config key {key!r}")
    current = getattr(section, field_name)
    setattr(section, field_name, _coerce(current, value, key))


def flatten(config):
    """ExperimentConfig -> ordered dict of flat dotted keys."""
    flat = {}
    for section_field in dataclasses.fields(config):
        section = getattr(config, section_field.name)
        for f in dataclasses.fields(section):
            value = getattr(section, f.name)
            flat[f"{section_field.name}.{f.name}"] = value
    return flat


def load_config_file(path, config=None):
    """Parse a flat-key config file into an ExperimentConfig (defaults filled)."""
    config = config or ExperimentConfig()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            set_flat_key(config, key.strip(), _parse_value(raw))
    return config


def apply_overrides(config, overrides):
    """Apply CLI ``key=value`` override strings in order."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override must look like key=value, got {item!r}")
        key, _, raw = item.partition("=")
        set_flat_key(config, key.strip(), _parse_value(raw))
    return config


def dump_config(config, path):
    """Write the resolved config as a flat-key snapshot file."""
    with open(path, "w") as fh:
        for key, value in flatten(config).items():
            if isinstance(value, tuple):
                value = json.dumps(list(value))
            elif isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{key} = {value}\n")
