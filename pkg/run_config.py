"""
Run configuration for the ASGNet desk toolkit
Loads, validates and saves the JSON settings shared by the CLI and the dashboard
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Tuple

from config import (
    DEFAULT_INPUT_SIZE, DEFAULT_SEED, DEFAULT_THRESHOLD, DEFAULT_UNIFIED_WIDTH, DILATION_PRESETS,
    ENCODER_PRESETS, FFT_METHOD,
)
from errors import ConfigError
from network import AblationFlags, EncoderConfig
from spectral import FFT_METHODS

logger = logging.getLogger(__name__)

KNOWN_KEYS = ("input_size", "unified_width", "encoder_channels", "preset", "seed",
              "threshold", "fft_method", "dilations", "flags")


@dataclass(frozen=True)
class RunConfig:
    """Everything a forward / init-weights run needs besides its files"""
    input_size: int = DEFAULT_INPUT_SIZE
    unified_width: int = DEFAULT_UNIFIED_WIDTH
    encoder_channels: Tuple[int, ...] = ENCODER_PRESETS["default"]
    seed: int = DEFAULT_SEED
    flags: AblationFlags = field(default_factory=AblationFlags)
    threshold: float = DEFAULT_THRESHOLD
    fft_method: str = FFT_METHOD

    def __post_init__(self):
        if self.fft_method not in FFT_METHODS:
            raise ConfigError("fft_method", f"expected one of {', '.join(FFT_METHODS)}, got '{self.fft_method}'")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold", f"must lie in [0, 1], got {self.threshold}")
        # geometry checks live on EncoderConfig
        self.encoder_config()

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.input_size, tuple(self.encoder_channels), self.unified_width)

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "unified_width": self.unified_width,
            "encoder_channels": list(self.encoder_channels),
            "seed": self.seed,
            "threshold": self.threshold,
            "fft_method": self.fft_method,
            "dilations": list(self.flags.dilation_set),
            "flags": {name: getattr(self.flags, name) for name in AblationFlags.toggle_names()},
        }


def _int(data: dict, key: str, default: int) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return value


def _dilations(value) -> Tuple[int, ...]:
    if isinstance(value, str):
        if value not in DILATION_PRESETS:
            raise ConfigError("dilations", f"unknown preset '{value}', expected one of {', '.join(DILATION_PRESETS)}")
        return DILATION_PRESETS[value]
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError("dilations", f"expected a preset name or a list of integers, got {value!r}")
    return tuple(value)


def _flags(value, dilations: Tuple[int, ...]) -> AblationFlags:
    if not isinstance(value, dict):
        raise ConfigError("flags", f"expected an object, got {value!r}")
    names = AblationFlags.toggle_names()
    for name, enabled in value.items():
        if name not in names:
            raise ConfigError(f"flags.{name}", "unknown branch")
        if not isinstance(enabled, bool):
            raise ConfigError(f"flags.{name}", f"expected true/false, got {enabled!r}")
    return AblationFlags(**value, dilation_set=dilations)


def run_config_from_dict(data: dict) -> RunConfig:
    """
    Build a RunConfig from parsed JSON.

    Raises:
        ConfigError: unknown key, wrong type or a value the graph cannot take
    """
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for key in data:
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")

    preset = data.get("preset", "default")
    if preset not in ENCODER_PRESETS:
        raise ConfigError("preset", f"unknown preset '{preset}', expected one of {', '.join(ENCODER_PRESETS)}")
    channels = data.get("encoder_channels", list(ENCODER_PRESETS[preset]))
    if not isinstance(channels, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in channels):
        raise ConfigError("encoder_channels", f"expected a list of integers, got {channels!r}")

    threshold = data.get("threshold", DEFAULT_THRESHOLD)
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
        raise ConfigError("threshold", f"expected a number, got {threshold!r}")
    fft_method = data.get("fft_method", FFT_METHOD)
    if not isinstance(fft_method, str):
        raise ConfigError("fft_method", f"expected a string, got {fft_method!r}")

    dilations = _dilations(data.get("dilations", list(DILATION_PRESETS["default"])))
    return RunConfig(
        input_size=_int(data, "input_size", DEFAULT_INPUT_SIZE),
        unified_width=_int(data, "unified_width", DEFAULT_UNIFIED_WIDTH),
        encoder_channels=tuple(channels),
        seed=_int(data, "seed", DEFAULT_SEED),
        flags=_flags(data.get("flags", {}), dilations),
        threshold=float(threshold),
        fft_method=fft_method,
    )


def load_run_config(path: Optional[Path] = None) -> RunConfig:
    """
    Load a RunConfig from a UTF-8 JSON file.

    Args:
        path: Config file; None gives the environment defaults

    Returns:
        RunConfig: Validated configuration
    """
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("<json>", f"{path}: {err}") from None
    cfg = run_config_from_dict(data)
    logger.debug("loaded run config from %s: %s", path, cfg)
    return cfg


def save_run_config(cfg: RunConfig, path: Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    logger.info("saved run config to %s", path)


def apply_ablations(cfg: RunConfig, names: Iterable[str]) -> RunConfig:
    """Switch off the named branches ("asf_in_snp", "edge_branch", ...)"""
    names = [name.strip() for name in names if name.strip()]
    if not names:
        return cfg
    return replace(cfg, flags=cfg.flags.without(*names))
