"""Pipeline configuration: one flat `key = value` text file with dotted
keys, overridable by CLI flags.  Every constant the method leaves
unspecified (thresholds, filters, beam width, lags) lives here so a config
file fully pins a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigInvalid, IoError

__all__ = ["PipelineConfig", "load_config"]

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass
class PipelineConfig:
    raw: dict[str, str]
    base_dir: Path

    def has(self, key: str) -> bool:
        return key in self.raw and self.raw[key] != ""

    def _get(self, key: str, default):
        if not self.has(key):
            if default is None:
                raise ConfigInvalid(f"missing required config key {key!r}")
            return default
        return self.raw[key]

    def get_str(self, key: str, default: str | None = None) -> str:
        v = self._get(key, default)
        return v if isinstance(v, str) else v

    def get_int(self, key: str, default: int | None = None) -> int:
        v = self._get(key, default)
        if isinstance(v, int):
            return v
        try:
            return int(v)
        except ValueError:
            raise ConfigInvalid(f"config key {key!r} must be an integer, got {v!r}") from None

    def get_float(self, key: str, default: float | None = None) -> float:
        v = self._get(key, default)
        if isinstance(v, (int, float)):
            return float(v)
        try:
            return float(v)
        except ValueError:
            raise ConfigInvalid(f"config key {key!r} must be a number, got {v!r}") from None

    def get_bool(self, key: str, default: bool | None = None) -> bool:
        v = self._get(key, default)
        if isinstance(v, bool):
            return v
        if v.strip().lower() not in _BOOL:
            raise ConfigInvalid(f"config key {key!r} must be a boolean, got {v!r}")
        return _BOOL[v.strip().lower()]

    def get_int_list(self, key: str, default: tuple[int, ...]) -> tuple[int, ...]:
        if not self.has(key):
            return default
        try:
            return tuple(int(p.strip()) for p in self.raw[key].split(",") if p.strip())
        except ValueError:
            raise ConfigInvalid(f"config key {key!r} must be comma-separated integers") from None

    def get_path(self, key: str, default: str | None = None) -> Path:
        """Resolve a path key relative to the config file's directory."""
        v = self._get(key, default)
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def require_file(self, key: str, default: str | None = None) -> Path:
        p = self.get_path(key, default)
        if not p.exists():
            raise ConfigInvalid(f"config key {key!r}: file {p} does not exist")
        return p

    def override(self, key: str, value: str) -> None:
        self.raw[key] = value


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from e
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigInvalid(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigInvalid(f"{path}:{lineno}: empty key")
        raw[key] = value.strip()
    return PipelineConfig(raw=raw, base_dir=path.resolve().parent)
