"""Service configuration with dotted-key loading from JSON files or dicts."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

_KEY_MAP = {
    "ingest.capacity_spans": "ingest_capacity_spans",
    "ingest.port": "ingest_port",
    "assembly.inactivity_timeout_ms": "assembly_inactivity_timeout_ms",
    "assembly.clock_skew_tolerance_us": "assembly_clock_skew_tolerance_us",
    "clustering.jaccard_threshold": "clustering_jaccard_threshold",
    "store.dir": "store_dir",
    "store.window_ms": "store_window_ms",
    "api.port": "api_port",
}


@dataclass(frozen=True)
class ServiceConfig:
    ingest_capacity_spans: int = 100_000
    ingest_port: int = 4318
    assembly_inactivity_timeout_ms: int = 10_000
    assembly_clock_skew_tolerance_us: int = 1_000
    clustering_jaccard_threshold: float = 0.5
    store_dir: str | None = None
    store_window_ms: int = 10_000
    api_port: int = 8117

    @property
    def inactivity_timeout_nano(self) -> int:
        return self.assembly_inactivity_timeout_ms * 1_000_000

    @property
    def clock_skew_tolerance_nano(self) -> int:
        return self.assembly_clock_skew_tolerance_us * 1_000

    @property
    def window_length_nano(self) -> int:
        return self.store_window_ms * 1_000_000

    @classmethod
    def from_dict(cls, values: dict) -> "ServiceConfig":
        kwargs = {}
        for key, value in values.items():
            attr = _KEY_MAP.get(key, key)
            if attr not in {f.name for f in fields(cls)}:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[attr] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        with open(Path(path), "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))
