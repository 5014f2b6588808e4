"""Run configuration: flat key=value files plus scale presets.

The config format is one `key = value` pair per line; blank lines and lines
starting with `#` are ignored.  Unknown keys are rejected.  A `preset` line
(`paper` or `desk`) applies the preset's defaults first; any other keys in
the file override them.

    paper: input bandwidth 64, trunk bandwidths 32/16/8, channels 32/64/128,
           200 epochs (100 at lr 0.1, 100 at lr 0.01), full cohort counts.
    desk:  input bandwidth 16, trunk bandwidths 8/4/2, channels 8/16/32,
           30 epochs (15 + 15), 200-subject cohort with the same class mix.

The planar reference model always uses doubled channel counts and consumes
the same sampled matrices as images of size 2b x 2b.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ParseError, ValidationError

TASK_CHOICES = ("ad-vs-cn", "mcip-vs-mcis")
MODEL_CHOICES = ("spherical", "planar")
PRECISION_CHOICES = ("f32", "f64")
INIT_CHOICES = ("spectral", "aligned-bank")


@dataclass(frozen=True)
class RunConfig:
    preset: str = "desk"
    task: str = "ad-vs-cn"
    model: str = "spherical"
    init: str = "spectral"
    seed: int = 0
    threads: int = 0                 # 0 = leave library defaults alone
    precision: str = "f64"
    manifest: str = ""
    data_dir: str = ""               # empty = directory containing the manifest
    out_dir: str = "runs"
    folds: int = 10
    batch_size: int = 8
    bandwidth: int = 16
    trunk_bandwidths: tuple = (8, 4, 2)
    channels: tuple = (8, 16, 32)
    epochs_phase1: int = 15
    epochs_phase2: int = 15
    lr_phase1: float = 0.1
    lr_phase2: float = 0.01
    count_cn: int = 51
    count_mcis: int = 39
    count_mcip: int = 46
    count_ad: int = 64
    base_mean: float = 2.5
    field_amplitude: float = 0.2
    noise_std: float = 0.1
    depth_jitter_std: float = 0.1
    misreg_std: float = 0.05
    sample_k: int = 10
    sample_channel: str = "thickness"

    def __post_init__(self):
        if self.task not in TASK_CHOICES:
            raise ValidationError(f"task must be one of {TASK_CHOICES}")
        if self.model not in MODEL_CHOICES:
            raise ValidationError(f"model must be one of {MODEL_CHOICES}")
        if self.precision not in PRECISION_CHOICES:
            raise ValidationError(f"precision must be one of {PRECISION_CHOICES}")
        if self.init not in INIT_CHOICES:
            raise ValidationError(f"init must be one of {INIT_CHOICES}")
        if self.init == "aligned-bank" and self.model != "spherical":
            raise ValidationError("aligned-bank init requires the spherical model")
        if len(self.trunk_bandwidths) != 3 or len(self.channels) != 3:
            raise ValidationError("trunk_bandwidths and channels need 3 entries")

    # -- derived objects (imports kept lazy so --threads can act first) ------

    def to_train_config(self):
        from .train import TrainConfig

        schedule = tuple((n, lr) for n, lr in
                         ((self.epochs_phase1, self.lr_phase1),
                          (self.epochs_phase2, self.lr_phase2)) if n > 0)
        if not schedule:
            raise ValidationError("at least one schedule phase must have epochs > 0")
        return TrainConfig(schedule=schedule, batch_size=self.batch_size,
                           seed=self.seed)

    def to_cohort_spec(self):
        from .cohort import CohortSpec

        return CohortSpec(
            counts={"CN": self.count_cn, "MCI-s": self.count_mcis,
                    "MCI-p": self.count_mcip, "AD": self.count_ad},
            bandwidth=self.bandwidth, base_mean=self.base_mean,
            field_amplitude=self.field_amplitude, noise_std=self.noise_std,
            depth_jitter_std=self.depth_jitter_std, misreg_std=self.misreg_std,
            seed=self.seed)

    def dtype(self):
        import numpy as np

        return np.float32 if self.precision == "f32" else np.float64

    def build_model(self, fold: int = 0):
        """Fresh model for one fold; init seed = config seed * 1000 + fold."""
        from .layers import (aligned_bank_init, build_planar_model,
                             build_spherical_model)

        model_seed = self.seed * 1000 + fold
        if self.model == "spherical":
            model = build_spherical_model(
                model_seed, input_bandwidth=self.bandwidth,
                trunk_bandwidths=self.trunk_bandwidths,
                channels=self.channels, dtype=self.dtype())
            if self.init == "aligned-bank":
                aligned_bank_init(model, model_seed)
            return model
        return build_planar_model(
            model_seed, input_size=2 * self.bandwidth,
            channels=tuple(2 * c for c in self.channels), dtype=self.dtype())


PRESETS = {
    "paper": {
        "bandwidth": 64, "trunk_bandwidths": (32, 16, 8),
        "channels": (32, 64, 128),
        "epochs_phase1": 100, "epochs_phase2": 100,
        "count_cn": 151, "count_mcis": 114, "count_mcip": 136, "count_ad": 188,
    },
    "desk": {
        "bandwidth": 16, "trunk_bandwidths": (8, 4, 2),
        "channels": (8, 16, 32),
        "epochs_phase1": 15, "epochs_phase2": 15,
        "count_cn": 51, "count_mcis": 39, "count_mcip": 46, "count_ad": 64,
    },
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TUPLE_FIELDS = ("trunk_bandwidths", "channels")
_INT_FIELDS = tuple(f.name for f in fields(RunConfig)
                    if f.type == "int")
_FLOAT_FIELDS = tuple(f.name for f in fields(RunConfig)
                      if f.type == "float")


def _convert(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _TUPLE_FIELDS:
            return tuple(int(v) for v in raw.split(","))
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
    except ValueError as e:
        raise ValidationError(f"bad value for {key!r}: {raw!r} ({e})") from e
    return raw


def parse_config_text(text: str) -> RunConfig:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(f"line {lineno}: expected key = value", offset=lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValidationError(f"line {lineno}: unknown config key {key!r}")
        pairs[key] = _convert(key, raw)
    preset = pairs.pop("preset", "desk")
    if preset not in PRESETS:
        raise ValidationError(f"preset must be one of {sorted(PRESETS)}")
    merged = dict(PRESETS[preset])
    merged.update(pairs)
    return replace(RunConfig(preset=preset), **merged)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ValidationError(f"cannot read config {path!r}: {e}") from e
    return parse_config_text(text)


def preset_config(name: str = "desk", **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ValidationError(f"preset must be one of {sorted(PRESETS)}")
    merged = dict(PRESETS[name])
    merged.update(overrides)
    return replace(RunConfig(preset=name), **merged)
