"""Utilities for composing experiment configuration for the nightdepth CLI.

One :class:`ExperimentSettings` fully determines a run. It is merged from
default dataclass values, an optional TOML/JSON settings file, ``NIGHTDEPTH_*``
environment variables and command-line overrides, in that order of increasing
precedence. The merged result is written next to every run as ``config.json``
and can be fed back through ``--config`` to reproduce it.
"""

import json
import tomllib
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, ClassVar

from .geometry import CameraIntrinsics
from .losses import LossWeights
from .networks import DepthNetConfig, PoseNetConfig
from .splb import SPLBConfig
from .synthdata import NightModel
from .trainer import TrainConfig

ENV_PREFIX = "NIGHTDEPTH_"
SETTINGS_FILE_ENV = "NIGHTDEPTH_SETTINGS_FILE"
CONFIG_JSON_FILE = "config.json"

# The discriminator halves the resolution four times and so does the depth encoder.
RESOLUTION_MULTIPLE = 16


class ConfigError(ValueError):
    """Raised when configuration sources name unknown keys or invalid values."""


_TRUE_WORDS = frozenset({"1", "true", "t", "yes", "y", "on"})
_FALSE_WORDS = frozenset({"0", "false", "f", "no", "n", "off"})


def _to_bool(value: Any) -> bool:
    """Read ablation toggles such as ``NIGHTDEPTH_TRAIN_USE_STLM=off``.

    Raises:
        ValueError: For anything outside the accepted yes/no spellings.
    """
    if isinstance(value, bool | int | float):
        return bool(value)
    word = str(value).strip().lower()
    if word in _TRUE_WORDS:
        return True
    if word in _FALSE_WORDS:
        return False
    raise ValueError(f"Cannot interpret {value!r} as a boolean")


def _to_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError(f"Cannot interpret {value!r} as an integer")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"Cannot interpret {value!r} as an integer")
        return int(value)
    return int(str(value).strip())


def _to_int_tuple(value: Any) -> tuple[int, ...]:
    if isinstance(value, str):
        items: Iterable[Any] = [part for part in value.split(",") if part.strip()]
    else:
        items = value
    return tuple(_to_int(item) for item in items)


def _to_path(value: Any) -> Path:
    return Path(str(value)).expanduser()


def _caster_for(default: Any) -> Any:
    """Pick a caster from the type of a field default."""
    if isinstance(default, bool):
        return _to_bool
    if isinstance(default, int):
        return _to_int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return _to_int_tuple
    if isinstance(default, Path):
        return _to_path
    return str


def _field_defaults(section_type: type) -> dict[str, Any]:
    defaults = {}
    for item in fields(section_type):
        defaults[item.name] = item.default
    return defaults


def _settings_file_from(cli_path: Path | None, env: Mapping[str, str]) -> Path | None:
    """``--config`` if given, else ``NIGHTDEPTH_SETTINGS_FILE``, else nothing."""
    if cli_path:
        return cli_path
    named = env.get(SETTINGS_FILE_ENV)
    return Path(named).expanduser() if named else None


def parse_overrides(items: Iterable[str]) -> dict[str, Any]:
    """Parse repeated ``--set section.field=value`` items into a nested mapping.

    Values stay strings here; they are cast when the settings are composed.

    Args:
        items: Strings such as ``"train.lr_peak=2e-4"`` or ``"seed=3"``.

    Returns:
        Mapping shaped like a settings file (``{"train": {"lr_peak": "2e-4"}}``).

    Raises:
        ConfigError: If an item has no ``=`` or names an unknown key.
    """
    parsed: dict[str, Any] = {}
    for item in items:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"Override {item!r} must look like section.field=value")
        section, dot, name = key.partition(".")
        if not dot:
            if section not in ExperimentSettings.TOP_LEVEL_KEYS:
                raise ConfigError(f"Unknown setting {key!r}")
            parsed[section] = value
            continue
        section_type = ExperimentSettings.SECTIONS.get(section)
        if section_type is None:
            raise ConfigError(f"Unknown settings section {section!r} in {item!r}")
        if name not in _field_defaults(section_type):
            raise ConfigError(f"Unknown setting {key!r}")
        parsed.setdefault(section, {})[name] = value
    return parsed


@dataclass(frozen=True, slots=True)
class DataSettings:
    """Synthetic dataset shape and illumination settings.

    Attributes:
        height (int): Frame height in pixels.
        width (int): Frame width in pixels.
        train_sequences (int): Number of training sequences per domain.
        val_sequences (int): Number of held-out validation sequences.
        focal_scale (float): Focal length as a fraction of the frame width.
        night_gain (float): Multiplicative darkening applied to night frames.
        night_gamma (float): Gamma applied after the gain.
        night_noise (float): Standard deviation of additive sensor noise.
        lamps_per_wall (int): Bright lamp spots attached to each side wall.
    """

    height: int = 64
    width: int = 128
    train_sequences: int = 64
    val_sequences: int = 16
    focal_scale: float = 0.5
    night_gain: float = 0.15
    night_gamma: float = 2.2
    night_noise: float = 0.02
    lamps_per_wall: int = 3

    def __post_init__(self) -> None:
        """Validate resolution and illumination parameters."""
        for name in ("height", "width"):
            size = getattr(self, name)
            if size <= 0 or size % RESOLUTION_MULTIPLE:
                raise ValueError(
                    f"data.{name} must be a positive multiple of "
                    f"{RESOLUTION_MULTIPLE}, got {size}"
                )
        if self.train_sequences < 1 or self.val_sequences < 1:
            raise ValueError("data.train_sequences and data.val_sequences must be >= 1")
        if self.focal_scale <= 0:
            raise ValueError("data.focal_scale must be positive")
        if not 0 < self.night_gain <= 1:
            raise ValueError("data.night_gain must be in (0, 1]")
        if self.night_gamma <= 0 or self.night_noise < 0 or self.lamps_per_wall < 0:
            raise ValueError(
                "data.night_gamma must be positive; night_noise and "
                "lamps_per_wall must be non-negative"
            )

    def intrinsics(self) -> CameraIntrinsics:
        """Return the shared camera intrinsics for this resolution."""
        return CameraIntrinsics.centered(self.width, self.height, self.focal_scale)

    def night_model(self) -> NightModel:
        """Return the night illumination model used by the renderer."""
        return NightModel(
            gain=self.night_gain, gamma=self.night_gamma, noise=self.night_noise
        )


@dataclass(frozen=True, slots=True)
class ExperimentSettings:
    """Fully resolved configuration for one nightdepth run.

    Instances always hold merged values. ``splb.time_steps`` tracks
    ``train.frames`` unless a source sets it explicitly, in which case the two
    must agree.
    """

    data: DataSettings = field(default_factory=DataSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    depth_net: DepthNetConfig = field(default_factory=DepthNetConfig)
    pose_net: PoseNetConfig = field(default_factory=PoseNetConfig)
    splb: SPLBConfig = field(default_factory=SPLBConfig)
    output_directory: Path = field(default_factory=lambda: Path("results/run_001"))
    seed: int = 0

    SECTIONS: ClassVar[Mapping[str, type]] = {
        "data": DataSettings,
        "train": TrainConfig,
        "loss": LossWeights,
        "depth_net": DepthNetConfig,
        "pose_net": PoseNetConfig,
        "splb": SPLBConfig,
    }
    TOP_LEVEL_KEYS: ClassVar[Mapping[str, Any]] = {
        "output_directory": _to_path,
        "seed": _to_int,
    }

    def __post_init__(self) -> None:
        """Check cross-section invariants."""
        if self.splb.time_steps != self.train.frames:
            raise ConfigError(
                f"splb.time_steps ({self.splb.time_steps}) must equal "
                f"train.frames ({self.train.frames})"
            )

    @classmethod
    def from_sources(
        cls,
        *,
        cli_overrides: Mapping[str, Any],
        env: Mapping[str, str],
        settings_file: Path | None,
    ) -> "ExperimentSettings":
        """Merge defaults, settings file, environment and ``--set`` overrides.

        Later layers win: ``--set`` over ``NIGHTDEPTH_*`` over the file over the
        dataclass defaults. ``cli_overrides`` has the shape of a settings file,
        top-level ``seed``/``output_directory`` plus one mapping per section;
        ``None`` values in it are ignored. ``splb.time_steps`` follows
        ``train.frames`` unless some layer sets it.

        Raises:
            FileNotFoundError: If the named settings file is missing.
            ConfigError: On unknown keys or values that fail validation.
        """
        merged: dict[str, Any] = {}
        path = _settings_file_from(settings_file, env)
        if path is not None:
            if not path.exists():
                raise FileNotFoundError(f"Settings file '{path}' does not exist")
            _merge_layer(merged, cls._read_settings_file(path))
        _merge_layer(merged, cls._read_environment(env))
        _merge_layer(merged, cli_overrides)
        return cls._build(merged)

    @classmethod
    def _build(cls, merged: Mapping[str, Any]) -> "ExperimentSettings":
        kwargs: dict[str, Any] = {}
        for key, caster in cls.TOP_LEVEL_KEYS.items():
            if key in merged:
                kwargs[key] = _cast(caster, merged[key], key)

        for section, section_type in cls.SECTIONS.items():
            values = dict(merged.get(section, {}))
            defaults = _field_defaults(section_type)
            cast_values = {
                name: _cast(_caster_for(defaults[name]), raw, f"{section}.{name}")
                for name, raw in values.items()
            }
            if section == "splb" and "time_steps" not in cast_values:
                frames = kwargs.get("train", TrainConfig()).frames
                cast_values["time_steps"] = frames
            try:
                kwargs[section] = section_type(**cast_values)
            except ValueError as exc:
                raise ConfigError(f"Invalid [{section}] settings: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def _read_environment(cls, env: Mapping[str, str]) -> dict[str, Any]:
        """Collect ``NIGHTDEPTH_*`` values; empty ones are skipped.

        Keys are ``NIGHTDEPTH_SEED``, ``NIGHTDEPTH_OUTPUT_DIRECTORY`` and
        ``NIGHTDEPTH_<SECTION>_<FIELD>``.
        """
        found: dict[str, Any] = {}
        for key in cls.TOP_LEVEL_KEYS:
            if raw := env.get(f"{ENV_PREFIX}{key.upper()}", ""):
                found[key] = raw
        for section, section_type in cls.SECTIONS.items():
            prefix = f"{ENV_PREFIX}{section.upper()}_"
            for name in _field_defaults(section_type):
                if raw := env.get(prefix + name.upper(), ""):
                    found.setdefault(section, {})[name] = raw
        return found

    @classmethod
    def _read_settings_file(cls, path: Path) -> dict[str, Any]:
        """Read a TOML or JSON document with one table per section.

        ``config.json`` files written by :meth:`write` are valid input.

        Raises:
            ConfigError: On another extension, a non-mapping document, or
                unknown sections or fields.
        """
        text = path.read_text(encoding="utf-8")
        match path.suffix.lower():
            case ".json":
                document = json.loads(text)
            case ".toml":
                document = tomllib.loads(text)
            case _:
                raise ConfigError(
                    f"Unsupported settings file extension '{path.suffix}'; "
                    "expected .toml or .json"
                )
        if not isinstance(document, Mapping):
            raise ConfigError(f"{path} must hold a mapping at the top level")

        result: dict[str, Any] = {}
        for key, value in document.items():
            if key in cls.TOP_LEVEL_KEYS:
                result[key] = value
                continue
            section_type = cls.SECTIONS.get(key)
            if section_type is None:
                raise ConfigError(f"Unknown settings section '{key}' in {path}")
            if not isinstance(value, Mapping):
                raise ConfigError(f"Settings section '{key}' must be a mapping")
            known = _field_defaults(section_type)
            for name in value:
                if name not in known:
                    raise ConfigError(f"Unknown setting '{key}.{name}' in {path}")
            result[key] = dict(value)
        return result

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-friendly mapping that round-trips through the loader."""
        payload: dict[str, Any] = {
            "output_directory": str(self.output_directory),
            "seed": self.seed,
        }
        for section in self.SECTIONS:
            values = asdict(getattr(self, section))
            payload[section] = {
                name: list(value) if isinstance(value, tuple) else value
                for name, value in values.items()
            }
        return payload

    def write(self, directory: Path | None = None) -> Path:
        """Write the merged configuration as ``config.json``.

        Args:
            directory: Target directory; defaults to ``output_directory``.

        Returns:
            Path of the written file.
        """
        target = Path(directory or self.output_directory)
        target.mkdir(parents=True, exist_ok=True)
        path = target / CONFIG_JSON_FILE
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    def with_train(self, **changes: Any) -> "ExperimentSettings":
        """Copy with ``train`` fields replaced, keeping ``splb.time_steps`` in step."""
        train = replace(self.train, **changes)
        return replace(
            self, train=train, splb=replace(self.splb, time_steps=train.frames)
        )


def _cast(caster: Any, raw: Any, key: str) -> Any:
    try:
        return caster(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid value {raw!r} for '{key}': {exc}") from exc


def _merge_layer(merged: dict[str, Any], layer: Mapping[str, Any]) -> None:
    for key, value in layer.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            section = merged.setdefault(key, {})
            for name, item in value.items():
                if item is not None:
                    section[name] = item
        else:
            merged[key] = value


__all__ = [
    "ConfigError",
    "DataSettings",
    "ExperimentSettings",
    "parse_overrides",
]
