"""
Flat Key-Value Config Files
===========================

FORMAT:
    # comment
    key = value
    layer.0.rect = 40 30 24 24

Keys may be dotted; values are kept as strings and converted by the
typed getters. Later duplicates override earlier ones.
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

from src.common.errors import ConfigurationError


class KeyValueConfig:
    """Parsed flat key-value config with typed accessors."""

    def __init__(self, entries: Optional[Dict[str, str]] = None, source: str = "<memory>"):
        self.entries = dict(entries or {})
        self.source = source

    @classmethod
    def parse(cls, text: str, source: str = "<memory>") -> 'KeyValueConfig':
        entries = {}
        for line_no, raw in enumerate(text.splitlines(), 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigurationError(f"{source}:{line_no}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split('=', 1))
            if not key:
                raise ConfigurationError(f"{source}:{line_no}: empty key")
            entries[key] = value
        return cls(entries, source)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'KeyValueConfig':
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Config file not found: {path}")
        return cls.parse(path.read_text(), source=str(path))

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def keys_with_prefix(self, prefix: str) -> List[str]:
        return sorted(k for k in self.entries if k.startswith(prefix))

    def get_str(self, key: str, default: Optional[str] = None) -> str:
        if key not in self.entries:
            if default is None:
                raise ConfigurationError(f"{self.source}: missing key '{key}'")
            return default
        return self.entries[key]

    def get_int(self, key: str, default: Optional[int] = None) -> int:
        if key not in self.entries and default is not None:
            return default
        value = self.get_str(key)
        try:
            return int(value)
        except ValueError:
            raise ConfigurationError(f"{self.source}: '{key}' must be an integer, got {value!r}")

    def get_float(self, key: str, default: Optional[float] = None) -> float:
        if key not in self.entries and default is not None:
            return default
        value = self.get_str(key)
        try:
            return float(value)
        except ValueError:
            raise ConfigurationError(f"{self.source}: '{key}' must be a number, got {value!r}")

    def get_floats(self, key: str, count: int, default: Optional[List[float]] = None) -> List[float]:
        if key not in self.entries and default is not None:
            return list(default)
        value = self.get_str(key)
        try:
            numbers = [float(v) for v in value.replace(',', ' ').split()]
        except ValueError:
            raise ConfigurationError(f"{self.source}: '{key}' must be {count} numbers, got {value!r}")
        if len(numbers) != count:
            raise ConfigurationError(f"{self.source}: '{key}' must be {count} numbers, got {len(numbers)}")
        return numbers

    def get_bool(self, key: str, default: Optional[bool] = None) -> bool:
        if key not in self.entries and default is not None:
            return default
        value = self.get_str(key).lower()
        if value in ('1', 'true', 'yes', 'on'):
            return True
        if value in ('0', 'false', 'no', 'off'):
            return False
        raise ConfigurationError(f"{self.source}: '{key}' must be a boolean, got {value!r}")
