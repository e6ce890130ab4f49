"""Groups spans by trace id and assembles parent-child call trees.

Traces complete by inactivity timeout, which stays robust when the root span
itself never arrived. A parent link only resolves when the referenced span is
present in the same trace and the child does not start earlier than the
parent minus the clock-skew tolerance; spans whose link does not resolve are
promoted to orphan roots instead of being discarded.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .spans import SpanRecord

DEFAULT_INACTIVITY_TIMEOUT_NANO = 10_000_000_000
DEFAULT_CLOCK_SKEW_TOLERANCE_NANO = 1_000_000


@dataclass(frozen=True)
class AssemblyConfig:
    inactivity_timeout_nano: int = DEFAULT_INACTIVITY_TIMEOUT_NANO
    clock_skew_tolerance_nano: int = DEFAULT_CLOCK_SKEW_TOLERANCE_NANO

    def __post_init__(self):
        if self.inactivity_timeout_nano < 0 or self.clock_skew_tolerance_nano < 0:
            raise ValueError("assembly timeouts must be >= 0")


@dataclass(frozen=True)
class TreeNode:
    span: SpanRecord
    children: tuple


@dataclass(frozen=True)
class TraceTree:
    trace_id: bytes
    roots: tuple
    span_count: int
    first_start_unix_nano: int
    last_end_unix_nano: int
    orphan_count: int

    def iter_nodes(self):
        stack = list(self.roots)
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)

    def iter_spans(self):
        for node in self.iter_nodes():
            yield node.span


def _sort_key(span: SpanRecord) -> Tuple[int, bytes]:
    return (span.start_unix_nano, span.span_id)


def assemble_tree(trace_id: bytes, spans: Dict[bytes, SpanRecord],
                  clock_skew_tolerance_nano: int) -> TraceTree:
    """Build the call forest for one trace from its deduplicated spans."""
    children_of: Dict[bytes, List[SpanRecord]] = {}
    roots: List[SpanRecord] = []
    orphan_count = 0
    for span in spans.values():
        parent_id = span.parent_span_id
        if parent_id is None:
            roots.append(span)
            continue
        parent = spans.get(parent_id)
        if parent is None or span.start_unix_nano < parent.start_unix_nano - clock_skew_tolerance_nano:
            orphan_count += 1
            roots.append(span)
        else:
            children_of.setdefault(parent_id, []).append(span)

    def build(span: SpanRecord) -> TreeNode:
        kids = sorted(children_of.get(span.span_id, ()), key=_sort_key)
        return TreeNode(span=span, children=tuple(build(kid) for kid in kids))

    root_nodes = tuple(build(span) for span in sorted(roots, key=_sort_key))
    return TraceTree(
        trace_id=trace_id,
        roots=root_nodes,
        span_count=len(spans),
        first_start_unix_nano=min(s.start_unix_nano for s in spans.values()),
        last_end_unix_nano=max(s.end_unix_nano for s in spans.values()),
        orphan_count=orphan_count,
    )


def caller_callee_pairs(tree: TraceTree) -> List[Tuple[SpanRecord, SpanRecord]]:
    """One (parent, child) pair per tree edge, in deterministic order."""
    pairs: List[Tuple[SpanRecord, SpanRecord]] = []

    def walk(node: TreeNode) -> None:
        for child in node.children:
            pairs.append((node.span, child.span))
            walk(child)

    for root in tree.roots:
        walk(root)
    pairs.sort(key=lambda p: (p[0].start_unix_nano, p[0].span_id,
                              p[1].start_unix_nano, p[1].span_id))
    return pairs


class _PendingTrace:
    __slots__ = ("spans", "last_activity")

    def __init__(self, now: int):
        self.spans: Dict[bytes, SpanRecord] = {}
        self.last_activity = now


class TraceAssembler:
    """Single-writer accumulator of pending traces.

    Pending traces are kept in least-recent-activity order (OrderedDict with
    move-to-end), so expiry only inspects the front of the map.
    """

    def __init__(self, config: AssemblyConfig = AssemblyConfig()):
        self.config = config
        self._pending: "OrderedDict[bytes, _PendingTrace]" = OrderedDict()

    def offer(self, span: SpanRecord, now: int) -> None:
        """Add a validated span to its pending trace; duplicates replace."""
        pending = self._pending.get(span.trace_id)
        if pending is None:
            pending = _PendingTrace(now)
            self._pending[span.trace_id] = pending
        pending.spans[span.span_id] = span
        pending.last_activity = now
        self._pending.move_to_end(span.trace_id)

    def pending_count(self) -> int:
        return len(self._pending)

    def pending_span_count(self) -> int:
        return sum(len(p.spans) for p in self._pending.values())

    def complete_expired(self, now: int) -> List[TraceTree]:
        """Assemble and emit every trace idle for at least the timeout."""
        timeout = self.config.inactivity_timeout_nano
        done: List[TraceTree] = []
        while self._pending:
            trace_id, pending = next(iter(self._pending.items()))
            if now - pending.last_activity < timeout:
                break
            del self._pending[trace_id]
            done.append(assemble_tree(trace_id, pending.spans,
                                      self.config.clock_skew_tolerance_nano))
        done.sort(key=lambda t: (t.first_start_unix_nano, t.trace_id))
        return done

    def complete_all(self) -> List[TraceTree]:
        """Assemble every pending trace regardless of idle time."""
        done = [
            assemble_tree(trace_id, pending.spans, self.config.clock_skew_tolerance_nano)
            for trace_id, pending in self._pending.items()
        ]
        self._pending.clear()
        done.sort(key=lambda t: (t.first_start_unix_nano, t.trace_id))
        return done
