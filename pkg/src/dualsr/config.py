"""Run configuration: flat ``section.key = value`` text files.

Every tunable in the pipeline has a registered key with a type and a
default; unknown keys are rejected up front and the full (default-filled)
configuration is echoed into each run log.  Desk-scale defaults are small
enough to train on a CPU in minutes; the replication-scale values live in
comments next to each entry.
"""

from __future__ import annotations

from .exceptions import ConfigError

# key -> (type, default)
CONFIG_SPEC = {
    "data.scale": (int, 4),
    "data.lr_patch": (int, 24),
    "data.batch_size": (int, 16),
    "data.flip": (bool, True),
    "data.crops_per_image": (int, 1),
    "model.features": (int, 64),
    "model.memory_blocks": (int, 4),  # 7 in the replication setup
    "model.resblocks": (int, 16),
    "model.disc_features": (int, 64),
    "model.disc_dense": (int, 1024),
    "loss.adv_weight": (float, 1e-3),
    "loss.feat_weight": (float, 6e-3),
    "loss.extractor": (str, "identity"),
    "loss.extractor_asset": (str, ""),
    "train.lr": (float, 1e-4),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-8),
    "train.iterations": (int, 2000),  # per perception stage; 5e5 at replication scale
    "train.decay_at": (int, 1000),  # 2.5e5 at replication scale
    "train.decay_factor": (float, 10.0),
    "train.epochs": (int, 2),  # distortion branch; 600 at replication scale
    "train.val_dir": (str, ""),
    "train.val_images": (int, 1),
    "train.fresh_discriminator_stage2": (bool, True),
    "train.seed": (int, 0),
    "metrics.shave": (int, 6),
    "metrics.rgb_rmse": (bool, False),
    "metrics.full_range_y": (bool, False),
    "fusion.threshold": (float, 0.73),
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_value(key: str, raw: str):
    kind, _ = CONFIG_SPEC[key]
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOL_WORDS[raw.lower()]
        return kind(raw)
    except (ValueError, KeyError):
        raise ConfigError(f"bad value {raw!r} for {key} (expected {kind.__name__})") from None


class RunConfig:
    """Validated key-value configuration with registered defaults."""

    def __init__(self, overrides: dict | None = None):
        self.values = {key: default for key, (_, default) in CONFIG_SPEC.items()}
        for key, value in (overrides or {}).items():
            self.set(key, value)

    def set(self, key: str, value) -> None:
        if key not in CONFIG_SPEC:
            raise ConfigError(f"unknown configuration key {key!r}")
        kind, _ = CONFIG_SPEC[key]
        if isinstance(value, str) and kind is not str:
            value = _parse_value(key, value)
        if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            else:
                raise ConfigError(f"value {value!r} for {key} is not {kind.__name__}")
        self.values[key] = value

    def __getitem__(self, key: str):
        if key not in CONFIG_SPEC:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values[key]

    def echo_lines(self) -> list[str]:
        return [f"{key} = {self.values[key]}" for key in sorted(self.values)]


def parse_config_text(text: str, config: RunConfig | None = None) -> RunConfig:
    config = config or RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        config.set(key.strip(), raw.strip())
    return config


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)
