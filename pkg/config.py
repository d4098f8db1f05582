# Configuration management for manigp
"""
Centralized configuration and settings management.
"""

import json
from dataclasses import dataclass, asdict
from typing import Any, Mapping, Optional
from pathlib import Path

from utils.validators import ValidationError


@dataclass
class McmcPreset:
    """Preset for the bandwidth sampler's iteration schedule."""
    name: str
    n_iter: int = 2000
    burn_in: int = 1000
    proposal_sd: float = 0.3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "McmcPreset":
        return cls(**data)


# Default presets
PAPER_PRESET = McmcPreset(name="paper", n_iter=10000, burn_in=5000)
DESK_PRESET = McmcPreset(name="desk", n_iter=2000, burn_in=1000)
SMOKE_PRESET = McmcPreset(name="smoke", n_iter=300, burn_in=150)


@dataclass
class AppConfig:
    """Application configuration."""
    # Logging
    log_level: str = "INFO"
    log_to_file: bool = False

    # Threads for independent fits (bandwidth draws, CV candidates, bench cells)
    workers: int = 1

    # Significant digits for floats in JSON reports
    report_precision: int = 12

    # Sampler preset used when a verb does not set --iters/--burnin
    default_preset: str = "desk"

    def to_dict(self) -> dict:
        return asdict(self)


class ConfigManager:
    """Manages application configuration, presets and spec files."""

    CONFIG_DIR = Path.home() / ".manigp"
    CONFIG_FILE = CONFIG_DIR / "config.json"
    PRESETS_FILE = CONFIG_DIR / "presets.json"

    def __init__(self):
        self.config = AppConfig()
        self.presets: list[McmcPreset] = [PAPER_PRESET, DESK_PRESET, SMOKE_PRESET]
        self.load()

    def _ensure_config_dir(self):
        """Create config directory if it doesn't exist."""
        self.CONFIG_DIR.mkdir(parents=True, exist_ok=True)

    def load(self):
        """Load configuration and presets from files."""
        if self.CONFIG_FILE.exists():
            try:
                with open(self.CONFIG_FILE, 'r', encoding='utf-8') as f:
                    data = json.load(f)
                    for key, value in data.items():
                        if hasattr(self.config, key):
                            setattr(self.config, key, value)
            except (json.JSONDecodeError, IOError):
                pass  # Use defaults

        if self.PRESETS_FILE.exists():
            try:
                with open(self.PRESETS_FILE, 'r', encoding='utf-8') as f:
                    data = json.load(f)
                    user_presets = [McmcPreset.from_dict(p) for p in data]
                    for preset in user_presets:
                        self.presets = [p for p in self.presets if p.name != preset.name]
                        self.presets.append(preset)
            except (json.JSONDecodeError, IOError, TypeError):
                pass  # Use defaults

    def save(self):
        """Save configuration and presets to files."""
        try:
            self._ensure_config_dir()
            with open(self.CONFIG_FILE, 'w', encoding='utf-8') as f:
                json.dump(self.config.to_dict(), f, indent=2)

            with open(self.PRESETS_FILE, 'w', encoding='utf-8') as f:
                json.dump([p.to_dict() for p in self.presets], f, indent=2)
        except IOError as e:
            from utils.logger import logger
            logger.warning(f"Could not save config: {e}")

    def get_preset(self, name: str) -> Optional[McmcPreset]:
        """Get preset by name."""
        for preset in self.presets:
            if preset.name == name:
                return preset
        return None

    @staticmethod
    def load_spec_file(path: str) -> dict:
        """
        Read a JSON config/spec file.

        Keys are long flag names with '-' replaced by '_'.

        Raises:
            ValidationError: If the file is missing or not a JSON object
        """
        spec_path = Path(path)
        if not spec_path.is_file():
            raise ValidationError(f"Config file not found: {path}")
        try:
            with open(spec_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Config file is not valid JSON: {path}: {e}")
        if not isinstance(data, dict):
            raise ValidationError(f"Config file must hold a JSON object: {path}")
        return {key.replace("-", "_"): value for key, value in data.items()}

    @staticmethod
    def merge(defaults: Mapping[str, Any],
              file_values: Optional[Mapping[str, Any]] = None,
              flag_values: Optional[Mapping[str, Any]] = None) -> dict:
        """Layer settings: flags win over the file, the file wins over defaults.

        Flags left at None are treated as not given.
        """
        merged = dict(defaults)
        for key, value in (file_values or {}).items():
            merged[key] = value
        for key, value in (flag_values or {}).items():
            if value is not None:
                merged[key] = value
        return merged


# Global config instance
config_manager = ConfigManager()
