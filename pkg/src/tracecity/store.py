"""Fixed-length time windows of landscape state, with flat-file persistence.

A trace belongs wholly to the window containing its first span start
(half-open windows, start aligned to the window length), so trees and edges
are never split across windows. One JSON file per window; a trailing
``complete`` marker distinguishes fully written files from interrupted ones,
which are skipped on load with a warning.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from .assembly import TraceTree
from .ingest import IngestCounters
from .landscape import Landscape, merge

log = logging.getLogger(__name__)

DEFAULT_WINDOW_LENGTH_NANO = 10_000_000_000
_FILE_PREFIX = "window-"
_FILE_SUFFIX = ".json"


@dataclass(frozen=True)
class WindowKey:
    start_unix_nano: int
    window_length_nano: int

    def __post_init__(self):
        if self.window_length_nano < 1:
            raise ValueError("window length must be >= 1")
        if self.start_unix_nano % self.window_length_nano != 0:
            raise ValueError("window start must be aligned to the window length")

    @property
    def end_unix_nano(self) -> int:
        return self.start_unix_nano + self.window_length_nano


class SnapshotStore:
    """Per-window landscapes; single fold writer, concurrent readers."""

    def __init__(self, window_length_nano: int = DEFAULT_WINDOW_LENGTH_NANO,
                 data_dir: Optional[Path] = None):
        if window_length_nano < 1:
            raise ValueError("window length must be >= 1")
        self.window_length_nano = window_length_nano
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._windows: Dict[int, Landscape] = {}
        self._dirty: set = set()
        self._lock = threading.Lock()
        self.skipped_files = 0

    def key_for(self, unix_nano: int) -> WindowKey:
        start = (unix_nano // self.window_length_nano) * self.window_length_nano
        return WindowKey(start, self.window_length_nano)

    def route(self, tree: TraceTree) -> WindowKey:
        """Fold the tree into the window of its first span start."""
        key = self.key_for(tree.first_start_unix_nano)
        with self._lock:
            landscape = self._windows.get(key.start_unix_nano)
            if landscape is None:
                landscape = Landscape((key.start_unix_nano, key.end_unix_nano))
                self._windows[key.start_unix_nano] = landscape
            landscape.fold_into(tree)
            self._dirty.add(key.start_unix_nano)
        return key

    def query(self, from_unix_nano: int, to_unix_nano: int) -> Landscape:
        """Merged landscape of every stored window intersecting [from, to)."""
        if from_unix_nano >= to_unix_nano:
            raise ValueError("query range must satisfy from < to")
        with self._lock:
            starts = sorted(
                start
                for start in self._windows
                if start < to_unix_nano and start + self.window_length_nano > from_unix_nano
            )
            result = Landscape()
            for start in starts:
                result = merge(result, self._windows[start])
            return result

    def window_count(self) -> int:
        with self._lock:
            return len(self._windows)

    def window_starts(self) -> List[int]:
        with self._lock:
            return sorted(self._windows)

    # -- persistence ---------------------------------------------------------

    def _path_for(self, start: int) -> Path:
        assert self.data_dir is not None
        return self.data_dir / f"{_FILE_PREFIX}{start}{_FILE_SUFFIX}"

    def persist(self, start: int, counters: Optional[IngestCounters] = None) -> None:
        """Write one window's landscape to its file."""
        if self.data_dir is None:
            return
        with self._lock:
            landscape = self._windows.get(start)
            if landscape is None:
                raise KeyError(f"no window starting at {start}")
            doc = {
                "key": {
                    "start_unix_nano": start,
                    "window_length_nano": self.window_length_nano,
                },
                "counters_snapshot": counters.to_doc() if counters else None,
                "landscape": landscape.to_doc(),
                "complete": True,
            }
            self._dirty.discard(start)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        try:
            with open(self._path_for(start), "w", encoding="utf-8") as handle:
                json.dump(doc, handle)
        except OSError as exc:
            raise OSError(f"failed to persist window {start}: {exc}") from exc

    def persist_dirty(self, counters: Optional[IngestCounters] = None) -> int:
        """Persist every window folded into since its last write."""
        if self.data_dir is None:
            return 0
        with self._lock:
            dirty = sorted(self._dirty)
        for start in dirty:
            self.persist(start, counters)
        return len(dirty)

    def load_all(self) -> int:
        """Restore windows from the data directory; returns windows loaded.

        Files without the completion marker (or unparseable ones) are skipped
        and counted in ``skipped_files``.
        """
        if self.data_dir is None or not self.data_dir.is_dir():
            return 0
        loaded = 0
        for name in sorted(os.listdir(self.data_dir)):
            if not name.startswith(_FILE_PREFIX) or not name.endswith(_FILE_SUFFIX):
                continue
            path = self.data_dir / name
            try:
                with open(path, "r", encoding="utf-8") as handle:
                    doc = json.load(handle)
                if doc.get("complete") is not True:
                    raise ValueError("missing completion marker")
                key_doc = doc["key"]
                if key_doc["window_length_nano"] != self.window_length_nano:
                    raise ValueError(
                        f"window length mismatch: {key_doc['window_length_nano']}"
                    )
                start = int(key_doc["start_unix_nano"])
                landscape = Landscape.from_doc(doc["landscape"])
            except (OSError, ValueError, KeyError, TypeError) as exc:
                self.skipped_files += 1
                log.warning("skipping window file %s: %s", path, exc)
                continue
            with self._lock:
                self._windows[start] = landscape
            loaded += 1
        return loaded
