"""Flat key=value configuration files.

One file carries the optimization, augmentation, and loss settings; the key
set is closed (unknown keys are errors, not warnings) and every value is
validated by the owning config dataclass.  Command-line flags override file
values, which override defaults.
"""

from __future__ import annotations

from pathlib import Path

from .augment import AugmentConfig
from .contrastive import LossConfig
from .errors import ConfigError
from .trainer import TrainConfig

# key -> (caster, help); `seed` feeds both the optimizer and the augmenter,
# `tau` feeds both the optimizer and the loss.
_INT_KEYS = {
    "batch_rows", "max_epochs", "patience", "n_regroups", "seed",
    "r_pairs", "anchors_per_class",
}
_FLOAT_KEYS = {"learning_rate", "beta1", "beta2", "eps_opt", "weight_decay", "tau"}
_STR_KEYS = {"inference_space", "template"}

CONFIG_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS

_TRAIN_KEYS = {
    "batch_rows", "learning_rate", "beta1", "beta2", "eps_opt", "weight_decay",
    "max_epochs", "patience", "tau", "n_regroups", "seed", "inference_space",
}
_AUGMENT_KEYS = {"r_pairs", "anchors_per_class", "template", "seed"}


def _cast(key: str, raw: str, where: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: key {key!r} has non-numeric value {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines; '#' starts a comment, blanks are skipped."""
    values: dict = {}
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source} line {n}: expected key=value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        raw = raw.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source} line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source} line {n}: duplicate key {key!r}")
        values[key] = _cast(key, raw, f"{source} line {n}")
    return values


def load_config(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {p}: {e}") from None
    return parse_config_text(text, source=str(p))


def merge_configs(
    file_values: dict | None = None, overrides: dict | None = None
) -> tuple[TrainConfig, AugmentConfig, LossConfig]:
    """Defaults, overlaid by file values, overlaid by explicit overrides
    (None override values mean "not given")."""
    merged: dict = {}
    for layer in (file_values or {}, overrides or {}):
        for key, value in layer.items():
            if value is None:
                continue
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    train = TrainConfig(**{k: v for k, v in merged.items() if k in _TRAIN_KEYS})
    augment = AugmentConfig(**{k: v for k, v in merged.items() if k in _AUGMENT_KEYS})
    loss = LossConfig(tau=train.tau)
    return train, augment, loss


def default_config_text() -> str:
    """A fully commented sample file holding every key at its default."""
    train = TrainConfig()
    augment = AugmentConfig()
    return "\n".join(
        [
            "# optimization",
            f"batch_rows = {train.batch_rows}",
            f"learning_rate = {train.learning_rate}  # 1e-2 suits the frozen-encoder affine head; 1e-5 is the full fine-tuning reference rate",
            f"beta1 = {train.beta1}",
            f"beta2 = {train.beta2}",
            f"eps_opt = {train.eps_opt}",
            f"weight_decay = {train.weight_decay}",
            f"max_epochs = {train.max_epochs}",
            f"patience = {train.patience}",
            f"n_regroups = {train.n_regroups}",
            f"inference_space = {train.inference_space}  # projection | encoder",
            "",
            "# contrastive loss",
            f"tau = {train.tau}",
            "",
            "# pair augmentation",
            f"r_pairs = {augment.r_pairs}",
            f"anchors_per_class = {augment.anchors_per_class}",
            f"template = {augment.template}",
            "",
            "# shared RNG seed",
            f"seed = {train.seed}",
            "",
        ]
    )
