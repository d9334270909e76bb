"""Run configuration. Precedence: CLI flags > config file (TOML) > environment > defaults."""
from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

ENV_VARS = {"backend_url": "BACKEND_URL", "api_key": "BACKEND_API_KEY", "backend_model": "BACKEND_MODEL"}
PATH_FIELDS = ("corpus", "bank", "profiles", "output_dir", "script_dir")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # backend
    backend_url: str = ""
    backend_model: str = ""
    api_key: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0
    script_dir: str | None = None
    # run
    parallelism: int = 1
    strict: bool = False
    output_dir: str = "runs"
    # induction
    min_support: int = 5
    effectiveness_threshold: float = 0.6
    # simulation
    max_turns: int = 20
    top_k: int = 3
    success_threshold: int = 100
    failure_threshold: int = 10
    grade_a: int = 60
    grade_b: int = 30
    # evolution
    n_verify: int = 15
    max_attempts: int = 3
    consolidator: str = "deterministic"
    # inputs
    corpus: str | None = None
    bank: str | None = None
    profiles: str | None = None

    @property
    def scripted(self) -> bool:
        return self.script_dir is not None

    def validate(self) -> "Config":
        checks = [
            (self.timeout > 0, "timeout must be > 0"),
            (self.max_retries >= 0, "max_retries must be >= 0"),
            (self.temperature >= 0, "temperature must be >= 0"),
            (self.parallelism >= 1, "parallelism must be >= 1"),
            (self.min_support >= 1, "min_support must be >= 1"),
            (0 < self.effectiveness_threshold <= 1, "effectiveness_threshold must be in (0, 1]"),
            (self.max_turns >= 1, "max_turns must be >= 1"),
            (self.top_k >= 1, "top_k must be >= 1"),
            (
                0 <= self.failure_threshold <= self.grade_b <= self.grade_a <= self.success_threshold <= 100,
                "need 0 <= failure <= grade_b <= grade_a <= success <= 100",
            ),
            (self.n_verify >= 1, "n_verify must be >= 1"),
            (self.max_attempts >= 1, "max_attempts must be >= 1"),
            (self.consolidator in ("deterministic", "backend"), "consolidator must be deterministic or backend"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def resolved(self, base: Path | None = None) -> "Config":
        base = base or Path.cwd()
        updates = {}
        for name in PATH_FIELDS:
            value = getattr(self, name)
            if value is not None:
                updates[name] = str((base / Path(value).expanduser()).resolve())
        return replace(self, **updates)

    def snapshot(self) -> dict[str, Any]:
        """Config for manifests; the API key is never included."""
        d = asdict(self)
        d["api_key"] = "***" if self.api_key else ""
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(name: str, value: Any) -> Any:
    kind = _FIELD_TYPES[name]
    if value is None:
        return None
    if kind == "bool":
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return str(value)


def _flatten(data: Mapping[str, Any]) -> dict[str, Any]:
    """Accept both flat keys and one level of tables (``[backend] url = ...`` -> ``backend_url``)."""
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            for sub, v in value.items():
                for candidate in (f"{key}_{sub}", sub):
                    if candidate in _FIELD_TYPES:
                        flat[candidate] = v
                        break
                else:
                    raise ConfigError(f"unknown config key {key}.{sub}")
        elif key in _FIELD_TYPES:
            flat[key] = value
        else:
            raise ConfigError(f"unknown config key {key}")
    return flat


def load_file(path: str | Path) -> dict[str, Any]:
    with open(path, "rb") as fh:
        return _flatten(tomllib.load(fh))


def load_config(
    cli: Mapping[str, Any] | None = None,
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> Config:
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    for name, var in ENV_VARS.items():
        if env.get(var):
            values[name] = env[var]
    base = Path.cwd()
    if path is not None:
        values.update(load_file(path))
        base = Path(path).resolve().parent
    cfg_paths = {k for k in values if k in PATH_FIELDS}
    for key, value in (cli or {}).items():
        if value is not None:
            values[key] = value
            cfg_paths.discard(key)
    cfg = Config(**{k: _coerce(k, v) for k, v in values.items()})
    # paths from the config file are relative to the file; CLI paths to the working directory
    file_relative = replace(cfg, **{k: getattr(cfg, k) for k in cfg_paths}).resolved(base)
    cli_resolved = cfg.resolved()
    merged = {k: getattr(file_relative if k in cfg_paths else cli_resolved, k) for k in PATH_FIELDS}
    return replace(cfg, **merged).validate()
