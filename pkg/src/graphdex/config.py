"""Build configuration and layered config resolution.

Values are resolved with the precedence: explicit overrides (CLI flags) >
environment variables > config file > built-in defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

ENV_PREFIX = "GRAPHDEX_"

# config-file / env names for each BuildConfig field
_ENV_NAMES = {
    "large": "LARGE",
    "small": "SMALL",
    "n_layers": "LAYERS",
    "tau": "TAU",
    "k_edges": "K_EDGES",
    "top_k_retrieval": "TOP_K",
    "resolution": "RESOLUTION",
    "seed": "SEED",
}


@dataclass
class BuildConfig:
    """Knobs for hierarchy construction and retrieval.

    ``large`` and ``small`` are token budgets: input text is first cut into
    ``large``-sized documents, each of which contributes one summary plus its
    ``small``-sized leaf chunks. ``tau`` is the similarity threshold for
    graph edges and ``k_edges`` caps the neighbours considered per node.
    """

    large: int = 2048
    small: int = 256
    n_layers: int = 2
    tau: float = 0.5
    k_edges: int = 10
    top_k_retrieval: int = 10
    resolution: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.small < 1 or self.large < 1:
            raise ValueError("chunk sizes must be positive")
        if self.small >= self.large:
            raise ValueError(
                f"small chunk size ({self.small}) must be below large ({self.large})"
            )
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be at least 1")
        if self.k_edges < 1:
            raise ValueError("k_edges must be at least 1")
        if self.top_k_retrieval < 1:
            raise ValueError("top_k_retrieval must be at least 1")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BuildConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(data))


def _coerce(name: str, raw: str) -> Any:
    kind = next(f.type for f in fields(BuildConfig) if f.name == name)
    return float(raw) if kind == "float" else int(raw)


def resolve_build_config(
    overrides: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
    config_file: str | Path | None = None,
) -> BuildConfig:
    """Merge config sources into a validated BuildConfig.

    ``overrides`` entries with value None are treated as absent so that CLI
    argument dicts can be passed through directly.
    """
    values: dict[str, Any] = {}
    if config_file is not None:
        with open(config_file, "r", encoding="utf-8") as handle:
            loaded = json.load(handle)
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {config_file} must hold a JSON object")
        known = {f.name for f in fields(BuildConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ValueError(f"unknown config keys in {config_file}: {sorted(unknown)}")
        values.update(loaded)
    env_map = os.environ if env is None else env
    for name, suffix in _ENV_NAMES.items():
        raw = env_map.get(ENV_PREFIX + suffix)
        if raw is not None and raw != "":
            values[name] = _coerce(name, raw)
    if overrides:
        for name, value in overrides.items():
            if value is not None:
                values[name] = value
    return BuildConfig.from_dict(values)
