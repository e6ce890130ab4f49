"""Bounded span intake: validation, FIFO buffering and drop accounting.

The buffer is the only place spans are ever discarded for capacity reasons;
every span that reaches it is accounted for in exactly one of the accepted,
rejected or dropped counters, so received == accepted + rejected + dropped
holds at every observable instant.
"""

from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import dataclass
from typing import List

from . import otlp
from .spans import SpanRecord, validate

DEFAULT_CAPACITY = 100_000
DROP_NEW = "drop_new"


@dataclass(frozen=True)
class BufferConfig:
    capacity_spans: int = DEFAULT_CAPACITY
    drop_policy: str = DROP_NEW

    def __post_init__(self):
        if self.capacity_spans < 1:
            raise ValueError("capacity_spans must be >= 1")
        if self.drop_policy != DROP_NEW:
            raise ValueError(f"unsupported drop policy {self.drop_policy!r}")


@dataclass(frozen=True)
class IngestCounters:
    received_spans: int = 0
    accepted_spans: int = 0
    rejected_spans: int = 0
    dropped_spans: int = 0

    def to_doc(self) -> dict:
        return {
            "received_spans": self.received_spans,
            "accepted_spans": self.accepted_spans,
            "rejected_spans": self.rejected_spans,
            "dropped_spans": self.dropped_spans,
        }


@dataclass(frozen=True)
class AcceptSummary:
    accepted: int = 0
    rejected: int = 0
    dropped: int = 0

    def __add__(self, other: "AcceptSummary") -> "AcceptSummary":
        return AcceptSummary(
            self.accepted + other.accepted,
            self.rejected + other.rejected,
            self.dropped + other.dropped,
        )

    def to_doc(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected, "dropped": self.dropped}


@dataclass(frozen=True)
class FileImportSummary(AcceptSummary):
    malformed_lines: int = 0

    def to_doc(self) -> dict:
        doc = super().to_doc()
        doc["malformed_lines"] = self.malformed_lines
        return doc


class SpanBuffer:
    """Bounded FIFO of validated spans, safe under concurrent producers.

    One lock guards the queue and all four counters together; a request's
    spans are classified under a single acquisition, so readers never observe
    a state where the conservation identity is violated.
    """

    def __init__(self, config: BufferConfig = BufferConfig()):
        self.config = config
        self._queue: deque = deque()
        self._lock = threading.Lock()
        self._received = 0
        self._accepted = 0
        self._rejected = 0
        self._dropped = 0

    def offer_spans(self, spans: List[SpanRecord]) -> AcceptSummary:
        """Validate and enqueue spans; overflow beyond capacity is dropped."""
        verdicts = [validate(span) for span in spans]
        capacity = self.config.capacity_spans
        accepted = rejected = dropped = 0
        with self._lock:
            queue = self._queue
            for span, verdict in zip(spans, verdicts):
                if verdict is not None:
                    rejected += 1
                elif len(queue) < capacity:
                    queue.append(span)
                    accepted += 1
                else:
                    dropped += 1
            self._received += len(spans)
            self._accepted += accepted
            self._rejected += rejected
            self._dropped += dropped
        return AcceptSummary(accepted, rejected, dropped)

    def receive_export(self, body: bytes, encoding: str) -> AcceptSummary:
        """Decode one OTLP export request and offer its spans.

        Raises OtlpDecodeError on a malformed payload; counters are untouched
        in that case since nothing decodable was received.
        """
        spans = otlp.decode_export_request(body, encoding)
        return self.offer_spans(spans)

    def import_file(self, path) -> FileImportSummary:
        """Replay a file of one OTLP-JSON export request per line."""
        total = AcceptSummary()
        malformed = 0
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    total = total + self.receive_export(line.encode("utf-8"), otlp.JSON)
                except (otlp.OtlpDecodeError, json.JSONDecodeError):
                    malformed += 1
        return FileImportSummary(total.accepted, total.rejected, total.dropped, malformed)

    def drain(self, max_spans: int) -> List[SpanRecord]:
        """Remove and return up to max_spans in arrival order."""
        if max_spans < 1:
            raise ValueError("max_spans must be >= 1")
        out: List[SpanRecord] = []
        with self._lock:
            queue = self._queue
            while queue and len(out) < max_spans:
                out.append(queue.popleft())
        return out

    def counters(self) -> IngestCounters:
        with self._lock:
            return IngestCounters(self._received, self._accepted, self._rejected, self._dropped)

    def occupancy(self) -> int:
        with self._lock:
            return len(self._queue)
