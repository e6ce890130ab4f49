"""Canonical span model: identity, timing, resource and code-location attributes.

Everything downstream (assembly, landscape folding, layout) works on
:class:`SpanRecord` values; wire decoding lives in :mod:`tracecity.otlp`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

Scalar = Union[str, int, float, bool]

UNKNOWN_SERVICE = "unknown_service"

# Rejection reason codes returned by validate().
REJECT_ZERO_ID = "zero_id"
REJECT_NEGATIVE_DURATION = "negative_duration"
REJECT_SELF_PARENT = "self_parent"

TRACE_ID_LEN = 16
SPAN_ID_LEN = 8

# Code-style span names: dot-separated identifier segments, at least two.
_CODE_NAME_RE = re.compile(r"^[A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)+$")


@dataclass(frozen=True)
class ResourceInfo:
    """Identity of the application an exporting process belongs to."""

    service_name: str = UNKNOWN_SERVICE
    instance_id: Optional[str] = None
    raw: dict = field(default_factory=dict)

    @property
    def app_key(self) -> tuple:
        return (self.service_name, self.instance_id)


@dataclass(frozen=True)
class SpanRecord:
    """One timed operation record with identity, parent link and attributes."""

    trace_id: bytes
    span_id: bytes
    parent_span_id: Optional[bytes]
    name: str
    start_unix_nano: int
    end_unix_nano: int
    attributes: dict = field(default_factory=dict)
    resource: ResourceInfo = field(default_factory=ResourceInfo)


@dataclass(frozen=True)
class CodeLocation:
    """Package path, class and method a span was recorded in.

    ``synthetic`` marks locations invented by name clustering rather than
    carried by the wire data.
    """

    package_path: tuple
    class_name: str
    method_name: str
    synthetic: bool = False

    @property
    def namespace(self) -> str:
        return ".".join(self.package_path + (self.class_name,))

    @property
    def fqn(self) -> str:
        return self.namespace


def validate(span: SpanRecord) -> Optional[str]:
    """Check SpanRecord invariants; return None when ok, else a reason code."""
    if len(span.trace_id) != TRACE_ID_LEN or span.trace_id == bytes(TRACE_ID_LEN):
        return REJECT_ZERO_ID
    if len(span.span_id) != SPAN_ID_LEN or span.span_id == bytes(SPAN_ID_LEN):
        return REJECT_ZERO_ID
    if span.end_unix_nano < span.start_unix_nano:
        return REJECT_NEGATIVE_DURATION
    if span.parent_span_id is not None and span.parent_span_id == span.span_id:
        return REJECT_SELF_PARENT
    return None


def _split_namespace(namespace: str, function: str) -> Optional[CodeLocation]:
    segments = namespace.split(".")
    class_name = segments[-1]
    if not class_name or not function:
        return None
    return CodeLocation(
        package_path=tuple(segments[:-1]),
        class_name=class_name,
        method_name=function,
        synthetic=False,
    )


def extract_code_location(span: SpanRecord) -> Optional[CodeLocation]:
    """Derive the code location of a span, or None when it carries none.

    Primary source is the ``code.namespace`` / ``code.function`` attribute
    pair. As a fallback, code-style span names ("org.pkg.Class.method") are
    split the same way, provided the penultimate segment starts uppercase so
    HTTP route names ("GET /owners") never parse as code.
    """
    namespace = span.attributes.get("code.namespace")
    function = span.attributes.get("code.function")
    if isinstance(namespace, str) and isinstance(function, str) and namespace:
        return _split_namespace(namespace, function)

    if _CODE_NAME_RE.match(span.name):
        segments = span.name.split(".")
        if len(segments) >= 2 and segments[-2][0].isupper():
            return _split_namespace(".".join(segments[:-1]), segments[-1])
    return None
