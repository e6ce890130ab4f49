"""Pipeline wiring: buffer -> assembler -> windowed store, plus HTTP servers.

A single pump thread owns the assembler and the store's fold path (they are
single-writer by design); HTTP ingest threads only touch the locked buffer,
and API reads only take store snapshots. ``TraceCityService`` can also be
driven synchronously with ``pump_once``/``flush`` for tests and scripts.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional

from .api import make_api_server, make_ingest_server
from .assembly import AssemblyConfig, TraceAssembler
from .config import ServiceConfig
from .ingest import BufferConfig, SpanBuffer
from .store import SnapshotStore

DRAIN_BATCH = 4096
PERSIST_INTERVAL_SECONDS = 2.0


class TraceCityService:
    def __init__(self, config: ServiceConfig = ServiceConfig()):
        self.config = config
        self.buffer = SpanBuffer(BufferConfig(capacity_spans=config.ingest_capacity_spans))
        self.assembler = TraceAssembler(
            AssemblyConfig(
                inactivity_timeout_nano=config.inactivity_timeout_nano,
                clock_skew_tolerance_nano=config.clock_skew_tolerance_nano,
            )
        )
        self.store = SnapshotStore(
            window_length_nano=config.window_length_nano,
            data_dir=Path(config.store_dir) if config.store_dir else None,
        )
        self._started_monotonic = time.monotonic()
        self._stop_event = threading.Event()
        self._pump_thread: Optional[threading.Thread] = None
        self._ingest_server = None
        self._api_server = None
        self._server_threads: list = []

    # -- lifecycle -----------------------------------------------------------

    def start(self, serve_http: bool = True) -> "TraceCityService":
        self.store.load_all()
        self._started_monotonic = time.monotonic()
        self._stop_event.clear()
        if serve_http:
            self._ingest_server = make_ingest_server(self, self.config.ingest_port)
            self._api_server = make_api_server(self, self.config.api_port)
            for server in (self._ingest_server, self._api_server):
                thread = threading.Thread(target=server.serve_forever, daemon=True)
                thread.start()
                self._server_threads.append(thread)
        self._pump_thread = threading.Thread(target=self._pump_loop, daemon=True)
        self._pump_thread.start()
        return self

    def stop(self, flush: bool = True) -> None:
        for server in (self._ingest_server, self._api_server):
            if server is not None:
                server.shutdown()
                server.server_close()
        self._ingest_server = self._api_server = None
        self._server_threads.clear()
        self._stop_event.set()
        if self._pump_thread is not None:
            self._pump_thread.join(timeout=30)
            self._pump_thread = None
        if flush:
            self.flush()

    def __enter__(self) -> "TraceCityService":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()

    @property
    def ingest_port(self) -> int:
        return self._ingest_server.server_address[1] if self._ingest_server else self.config.ingest_port

    @property
    def api_port(self) -> int:
        return self._api_server.server_address[1] if self._api_server else self.config.api_port

    @property
    def ingest_url(self) -> str:
        return f"http://127.0.0.1:{self.ingest_port}"

    @property
    def api_url(self) -> str:
        return f"http://127.0.0.1:{self.api_port}"

    # -- pipeline ------------------------------------------------------------

    def pump_once(self, now: Optional[int] = None) -> int:
        """One drain/assemble/fold cycle; returns the amount of work done."""
        spans = self.buffer.drain(DRAIN_BATCH)
        if now is None:
            now = time.time_ns()
        for span in spans:
            self.assembler.offer(span, now)
        trees = self.assembler.complete_expired(now)
        for tree in trees:
            self.store.route(tree)
        return len(spans) + len(trees)

    def flush(self) -> None:
        """Fold everything pending: remaining buffer, then all open traces.

        Must not run concurrently with the pump thread (single writer).
        """
        now = time.time_ns()
        while True:
            spans = self.buffer.drain(DRAIN_BATCH)
            if not spans:
                break
            for span in spans:
                self.assembler.offer(span, now)
        for tree in self.assembler.complete_all():
            self.store.route(tree)
        self.store.persist_dirty(self.buffer.counters())

    def _pump_loop(self) -> None:
        last_persist = time.monotonic()
        while not self._stop_event.is_set():
            processed = self.pump_once()
            if self.store.data_dir is not None:
                now = time.monotonic()
                if now - last_persist >= PERSIST_INTERVAL_SECONDS:
                    self.store.persist_dirty(self.buffer.counters())
                    last_persist = now
            if processed == 0:
                self._stop_event.wait(0.01)

    # -- status --------------------------------------------------------------

    def status_doc(self) -> dict:
        return {
            "counters": self.buffer.counters().to_doc(),
            "pending_traces": self.assembler.pending_count(),
            "stored_windows": self.store.window_count(),
            "uptime_seconds": int(time.monotonic() - self._started_monotonic),
            "buffer_occupancy": self.buffer.occupancy(),
            "buffer_capacity": self.buffer.config.capacity_spans,
        }
