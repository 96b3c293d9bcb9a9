"""Pipeline configuration: defaults, named profiles, key=value config files."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    ring_skip: float = 0.10
    ring_take: float = 0.20
    glcm_levels: int = 16
    glcm_displacement: int = 1
    glcm_symmetric: bool = False
    median_window: int = 5
    majority_window: int = 5
    confidence: float = 0.25
    min_leaf: int = 2
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ring_skip < 0 or self.ring_take <= 0:
            raise ConfigError("ring_skip must be >= 0 and ring_take > 0")
        if self.glcm_levels < 2:
            raise ConfigError("glcm_levels must be >= 2")
        if self.glcm_displacement < 1:
            raise ConfigError("glcm_displacement must be >= 1")
        for name in ("median_window", "majority_window"):
            v = getattr(self, name)
            if v % 2 == 0 or v < 3:
                raise ConfigError(f"{name} must be odd and >= 3")
        if not 0.0 < self.confidence <= 1.0:
            raise ConfigError("confidence must be in (0, 1]")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")


# "paper" carries the published training parameterization; everything else
# keeps the defaults.
PROFILES: dict[str, dict] = {
    "default": {},
    "paper": {"confidence": 0.1, "min_leaf": 100},
}

_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    kind = _FIELD_TYPES[key]
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "int | None":
            return None if raw.lower() in ("none", "") else int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    raise ConfigError(f"unknown config key {key!r}")


def load_config_file(path) -> dict:
    """Line-oriented key=value file; '#' starts a comment."""
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, raw = line.split("=", 1)
            values[key.strip()] = _coerce(key.strip(), raw)
    return values


def build_config(profile: str | None = None, config_path=None,
                 overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then profile, then config file, then explicit overrides."""
    cfg = PipelineConfig()
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; "
                              f"choose from {sorted(PROFILES)}")
        cfg = replace(cfg, **PROFILES[profile])
    if config_path is not None:
        cfg = replace(cfg, **load_config_file(config_path))
    if overrides:
        clean = {k: v for k, v in overrides.items() if v is not None}
        bad = set(clean) - set(_FIELD_TYPES)
        if bad:
            raise ConfigError(f"unknown config keys {sorted(bad)}")
        cfg = replace(cfg, **clean)
    return cfg
