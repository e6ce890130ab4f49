"""OTLP trace-export codec: protobuf wire format and the JSON mapping.

Implements the subset of the OTLP trace schema this service consumes and
produces: ``ExportTraceServiceRequest`` / ``ExportTraceServiceResponse`` with
resource attributes, span identity/timing and scalar span attributes. Span
events, links and status are skipped on decode and never emitted. Unknown
fields are skipped by wire type, so payloads from full SDKs decode fine.

Field numbers follow the published opentelemetry-proto trace schema:
request.resource_spans=1; ResourceSpans.resource=1/.scope_spans=2;
Resource.attributes=1; ScopeSpans.spans=2; Span.trace_id=1, span_id=2,
parent_span_id=4, name=5, start=7 (fixed64), end=8 (fixed64), attributes=9;
KeyValue.key=1/.value=2; AnyValue string=1, bool=2, int=3, double=4.
"""

from __future__ import annotations

import json
import struct
from typing import List, Optional, Tuple

from .spans import ResourceInfo, SpanRecord, UNKNOWN_SERVICE

PROTOBUF = "protobuf"
JSON = "json"

CONTENT_TYPES = {
    PROTOBUF: "application/x-protobuf",
    JSON: "application/json",
}

_DROPPED = object()  # sentinel for attribute values we do not retain

_FIXED64 = struct.Struct("<Q")
_DOUBLE = struct.Struct("<d")


class OtlpDecodeError(ValueError):
    """Payload is not a decodable OTLP trace export request."""


# ---------------------------------------------------------------------------
# protobuf wire primitives
# ---------------------------------------------------------------------------


def _read_varint(buf: bytes, pos: int, end: int) -> Tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= end:
            raise OtlpDecodeError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise OtlpDecodeError("varint too long")


def _skip_field(buf: bytes, pos: int, end: int, wire_type: int) -> int:
    if wire_type == 0:
        _, pos = _read_varint(buf, pos, end)
        return pos
    if wire_type == 1:
        pos += 8
    elif wire_type == 2:
        length, pos = _read_varint(buf, pos, end)
        pos += length
    elif wire_type == 5:
        pos += 4
    else:
        raise OtlpDecodeError(f"unsupported wire type {wire_type}")
    if pos > end:
        raise OtlpDecodeError("field overruns buffer")
    return pos


def _read_len(buf: bytes, pos: int, end: int) -> Tuple[int, int]:
    length, pos = _read_varint(buf, pos, end)
    if pos + length > end:
        raise OtlpDecodeError("length-delimited field overruns buffer")
    return length, pos


def _signed64(value: int) -> int:
    return value - (1 << 64) if value >= 1 << 63 else value


# ---------------------------------------------------------------------------
# protobuf decoding
# ---------------------------------------------------------------------------


def _decode_any_value(buf: bytes, pos: int, end: int):
    value = _DROPPED
    while pos < end:
        tag, pos = _read_varint(buf, pos, end)
        field, wt = tag >> 3, tag & 7
        if field == 1 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            value = buf[pos : pos + length].decode("utf-8", errors="replace")
            pos += length
        elif field == 2 and wt == 0:
            raw, pos = _read_varint(buf, pos, end)
            value = bool(raw)
        elif field == 3 and wt == 0:
            raw, pos = _read_varint(buf, pos, end)
            value = _signed64(raw)
        elif field == 4 and wt == 1:
            value = _DOUBLE.unpack_from(buf, pos)[0]
            pos += 8
        else:
            # arrays, kv-lists, bytes: dropped on conversion
            pos = _skip_field(buf, pos, end, wt)
    return value


def _decode_key_value(buf: bytes, pos: int, end: int):
    key = None
    value = _DROPPED
    while pos < end:
        tag, pos = _read_varint(buf, pos, end)
        field, wt = tag >> 3, tag & 7
        if field == 1 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            key = buf[pos : pos + length].decode("utf-8", errors="replace")
            pos += length
        elif field == 2 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            value = _decode_any_value(buf, pos, pos + length)
            pos += length
        else:
            pos = _skip_field(buf, pos, end, wt)
    return key, value


def _decode_attributes(buf: bytes, pos: int, end: int, out: dict) -> None:
    key, value = _decode_key_value(buf, pos, end)
    if key is not None and value is not _DROPPED:
        out[key] = value


def _decode_resource(buf: bytes, pos: int, end: int) -> ResourceInfo:
    raw: dict = {}
    while pos < end:
        tag, pos = _read_varint(buf, pos, end)
        field, wt = tag >> 3, tag & 7
        if field == 1 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            _decode_attributes(buf, pos, pos + length, raw)
            pos += length
        else:
            pos = _skip_field(buf, pos, end, wt)
    return _resource_from_raw(raw)


def _resource_from_raw(raw: dict) -> ResourceInfo:
    service = raw.get("service.name")
    if not isinstance(service, str) or not service:
        service = UNKNOWN_SERVICE
    instance = raw.get("service.instance.id")
    if not isinstance(instance, str) or not instance:
        instance = None
    return ResourceInfo(service_name=service, instance_id=instance, raw=raw)


def _decode_span(buf: bytes, pos: int, end: int, resource: ResourceInfo) -> SpanRecord:
    trace_id = b""
    span_id = b""
    parent: Optional[bytes] = None
    name = ""
    start = 0
    finish = 0
    attrs: dict = {}
    while pos < end:
        tag, pos = _read_varint(buf, pos, end)
        field, wt = tag >> 3, tag & 7
        if field == 1 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            trace_id = bytes(buf[pos : pos + length])
            pos += length
        elif field == 2 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            span_id = bytes(buf[pos : pos + length])
            pos += length
        elif field == 4 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            parent = bytes(buf[pos : pos + length]) or None
            pos += length
        elif field == 5 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            name = buf[pos : pos + length].decode("utf-8", errors="replace")
            pos += length
        elif field == 7:
            if wt == 1:
                start = _FIXED64.unpack_from(buf, pos)[0]
                pos += 8
            else:
                start, pos = _read_varint(buf, pos, end)
        elif field == 8:
            if wt == 1:
                finish = _FIXED64.unpack_from(buf, pos)[0]
                pos += 8
            else:
                finish, pos = _read_varint(buf, pos, end)
        elif field == 9 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            _decode_attributes(buf, pos, pos + length, attrs)
            pos += length
        else:
            pos = _skip_field(buf, pos, end, wt)
    return SpanRecord(
        trace_id=trace_id,
        span_id=span_id,
        parent_span_id=parent,
        name=name,
        start_unix_nano=start,
        end_unix_nano=finish,
        attributes=attrs,
        resource=resource,
    )


def _decode_resource_spans(buf: bytes, pos: int, end: int, out: List[SpanRecord]) -> None:
    resource = ResourceInfo()
    span_ranges: List[Tuple[int, int]] = []
    while pos < end:
        tag, pos = _read_varint(buf, pos, end)
        field, wt = tag >> 3, tag & 7
        if field == 1 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            resource = _decode_resource(buf, pos, pos + length)
            pos += length
        elif field == 2 and wt == 2:
            length, pos = _read_len(buf, pos, end)
            scope_end = pos + length
            inner = pos
            while inner < scope_end:
                itag, inner = _read_varint(buf, inner, scope_end)
                ifield, iwt = itag >> 3, itag & 7
                if ifield == 2 and iwt == 2:
                    ilen, inner = _read_len(buf, inner, scope_end)
                    span_ranges.append((inner, inner + ilen))
                    inner += ilen
                else:
                    inner = _skip_field(buf, inner, scope_end, iwt)
            pos = scope_end
        else:
            pos = _skip_field(buf, pos, end, wt)
    # resource may follow scope_spans in the byte stream, hence the two passes
    for span_start, span_end in span_ranges:
        out.append(_decode_span(buf, span_start, span_end, resource))


def decode_export_request_protobuf(body: bytes) -> List[SpanRecord]:
    spans: List[SpanRecord] = []
    pos, end = 0, len(body)
    while pos < end:
        tag, pos = _read_varint(body, pos, end)
        field, wt = tag >> 3, tag & 7
        if field == 1 and wt == 2:
            length, pos = _read_len(body, pos, end)
            _decode_resource_spans(body, pos, pos + length, spans)
            pos += length
        else:
            pos = _skip_field(body, pos, end, wt)
    return spans


# ---------------------------------------------------------------------------
# JSON mapping
# ---------------------------------------------------------------------------


def _json_get(obj: dict, camel: str, snake: str, default=None):
    if camel in obj:
        return obj[camel]
    return obj.get(snake, default)


def _json_attr_value(value: dict):
    if not isinstance(value, dict):
        return _DROPPED
    if "stringValue" in value or "string_value" in value:
        v = _json_get(value, "stringValue", "string_value")
        return v if isinstance(v, str) else _DROPPED
    if "boolValue" in value or "bool_value" in value:
        return bool(_json_get(value, "boolValue", "bool_value"))
    if "intValue" in value or "int_value" in value:
        try:
            return int(_json_get(value, "intValue", "int_value"))
        except (TypeError, ValueError):
            return _DROPPED
    if "doubleValue" in value or "double_value" in value:
        try:
            return float(_json_get(value, "doubleValue", "double_value"))
        except (TypeError, ValueError):
            return _DROPPED
    return _DROPPED


def _json_attributes(items) -> dict:
    out: dict = {}
    if not isinstance(items, list):
        return out
    for kv in items:
        if not isinstance(kv, dict):
            continue
        key = kv.get("key")
        value = _json_attr_value(kv.get("value", {}))
        if isinstance(key, str) and value is not _DROPPED:
            out[key] = value
    return out


def _json_id(value, expected_len: int) -> bytes:
    if not isinstance(value, str):
        return b""
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        return b""
    return raw if len(raw) == expected_len else raw


def _json_nanos(value) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        return 0


def decode_export_request_json(body) -> List[SpanRecord]:
    if isinstance(body, (bytes, bytearray)):
        try:
            body = body.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise OtlpDecodeError(f"body is not utf-8: {exc}") from exc
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise OtlpDecodeError(f"body is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise OtlpDecodeError("export request must be a JSON object")

    spans: List[SpanRecord] = []
    for rs in _json_get(doc, "resourceSpans", "resource_spans", []) or []:
        if not isinstance(rs, dict):
            continue
        resource_doc = rs.get("resource", {}) or {}
        raw = _json_attributes(resource_doc.get("attributes"))
        resource = _resource_from_raw(raw)
        for ss in _json_get(rs, "scopeSpans", "scope_spans", []) or []:
            if not isinstance(ss, dict):
                continue
            for sp in ss.get("spans", []) or []:
                if not isinstance(sp, dict):
                    continue
                parent = _json_id(_json_get(sp, "parentSpanId", "parent_span_id", ""), 8)
                spans.append(
                    SpanRecord(
                        trace_id=_json_id(_json_get(sp, "traceId", "trace_id", ""), 16),
                        span_id=_json_id(_json_get(sp, "spanId", "span_id", ""), 8),
                        parent_span_id=parent or None,
                        name=sp.get("name", "") if isinstance(sp.get("name", ""), str) else "",
                        start_unix_nano=_json_nanos(
                            _json_get(sp, "startTimeUnixNano", "start_time_unix_nano", 0)
                        ),
                        end_unix_nano=_json_nanos(
                            _json_get(sp, "endTimeUnixNano", "end_time_unix_nano", 0)
                        ),
                        attributes=_json_attributes(sp.get("attributes")),
                        resource=resource,
                    )
                )
    return spans


def decode_export_request(body: bytes, encoding: str) -> List[SpanRecord]:
    if encoding == PROTOBUF:
        return decode_export_request_protobuf(body)
    if encoding == JSON:
        return decode_export_request_json(body)
    raise OtlpDecodeError(f"unknown encoding {encoding!r}")


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def _w_varint(out: bytearray, value: int) -> None:
    while True:
        bits = value & 0x7F
        value >>= 7
        if value:
            out.append(bits | 0x80)
        else:
            out.append(bits)
            return


def _w_tag(out: bytearray, field: int, wire_type: int) -> None:
    _w_varint(out, (field << 3) | wire_type)


def _w_bytes(out: bytearray, field: int, payload) -> None:
    _w_tag(out, field, 2)
    _w_varint(out, len(payload))
    out.extend(payload)


def _w_string(out: bytearray, field: int, text: str) -> None:
    _w_bytes(out, field, text.encode("utf-8"))


def _encode_any_value(value) -> bytearray:
    out = bytearray()
    if isinstance(value, bool):
        _w_tag(out, 2, 0)
        _w_varint(out, 1 if value else 0)
    elif isinstance(value, str):
        _w_string(out, 1, value)
    elif isinstance(value, int):
        _w_tag(out, 3, 0)
        _w_varint(out, value & 0xFFFFFFFFFFFFFFFF)
    elif isinstance(value, float):
        _w_tag(out, 4, 1)
        out.extend(_DOUBLE.pack(value))
    else:
        raise TypeError(f"unsupported attribute value {value!r}")
    return out


def _encode_key_value(key: str, value) -> bytearray:
    out = bytearray()
    _w_string(out, 1, key)
    _w_bytes(out, 2, _encode_any_value(value))
    return out


def _encode_attributes(out: bytearray, field: int, attrs: dict) -> None:
    for key, value in attrs.items():
        _w_bytes(out, field, _encode_key_value(key, value))


def _encode_span(span: SpanRecord) -> bytearray:
    out = bytearray()
    _w_bytes(out, 1, span.trace_id)
    _w_bytes(out, 2, span.span_id)
    if span.parent_span_id:
        _w_bytes(out, 4, span.parent_span_id)
    _w_string(out, 5, span.name)
    _w_tag(out, 7, 1)
    out.extend(_FIXED64.pack(span.start_unix_nano))
    _w_tag(out, 8, 1)
    out.extend(_FIXED64.pack(span.end_unix_nano))
    _encode_attributes(out, 9, span.attributes)
    return out


def _resource_raw_attrs(resource: ResourceInfo) -> dict:
    raw = dict(resource.raw)
    raw.setdefault("service.name", resource.service_name)
    if resource.instance_id is not None:
        raw.setdefault("service.instance.id", resource.instance_id)
    return raw


def _group_by_resource(spans) -> List[Tuple[ResourceInfo, List[SpanRecord]]]:
    groups: dict = {}
    order = []
    for span in spans:
        key = span.resource.app_key
        if key not in groups:
            groups[key] = (span.resource, [])
            order.append(key)
        groups[key][1].append(span)
    return [groups[key] for key in order]


def encode_export_request_protobuf(spans) -> bytes:
    request = bytearray()
    for resource, members in _group_by_resource(spans):
        resource_msg = bytearray()
        _encode_attributes(resource_msg, 1, _resource_raw_attrs(resource))
        scope_spans = bytearray()
        for span in members:
            _w_bytes(scope_spans, 2, _encode_span(span))
        resource_spans = bytearray()
        _w_bytes(resource_spans, 1, resource_msg)
        _w_bytes(resource_spans, 2, scope_spans)
        _w_bytes(request, 1, resource_spans)
    return bytes(request)


def _json_attr_doc(attrs: dict) -> list:
    out = []
    for key, value in attrs.items():
        if isinstance(value, bool):
            typed = {"boolValue": value}
        elif isinstance(value, str):
            typed = {"stringValue": value}
        elif isinstance(value, int):
            typed = {"intValue": str(value)}
        elif isinstance(value, float):
            typed = {"doubleValue": value}
        else:
            raise TypeError(f"unsupported attribute value {value!r}")
        out.append({"key": key, "value": typed})
    return out


def encode_export_request_json(spans) -> bytes:
    resource_spans = []
    for resource, members in _group_by_resource(spans):
        span_docs = []
        for span in members:
            doc = {
                "traceId": span.trace_id.hex(),
                "spanId": span.span_id.hex(),
                "name": span.name,
                "startTimeUnixNano": str(span.start_unix_nano),
                "endTimeUnixNano": str(span.end_unix_nano),
            }
            if span.parent_span_id:
                doc["parentSpanId"] = span.parent_span_id.hex()
            if span.attributes:
                doc["attributes"] = _json_attr_doc(span.attributes)
            span_docs.append(doc)
        resource_spans.append(
            {
                "resource": {"attributes": _json_attr_doc(_resource_raw_attrs(resource))},
                "scopeSpans": [{"spans": span_docs}],
            }
        )
    return json.dumps({"resourceSpans": resource_spans}, separators=(",", ":")).encode("utf-8")


def encode_export_request(spans, encoding: str) -> bytes:
    if encoding == PROTOBUF:
        return encode_export_request_protobuf(spans)
    if encoding == JSON:
        return encode_export_request_json(spans)
    raise ValueError(f"unknown encoding {encoding!r}")


def encode_export_response(rejected_spans: int, error_message: str, encoding: str) -> bytes:
    if encoding == JSON:
        if rejected_spans <= 0:
            return b"{}"
        doc = {
            "partialSuccess": {
                "rejectedSpans": str(rejected_spans),
                "errorMessage": error_message,
            }
        }
        return json.dumps(doc, separators=(",", ":")).encode("utf-8")
    if rejected_spans <= 0:
        return b""
    partial = bytearray()
    _w_tag(partial, 1, 0)
    _w_varint(partial, rejected_spans & 0xFFFFFFFFFFFFFFFF)
    if error_message:
        _w_string(partial, 2, error_message)
    out = bytearray()
    _w_bytes(out, 1, partial)
    return bytes(out)


def decode_export_response(body: bytes, encoding: str) -> Tuple[int, str]:
    """Return (rejected_spans, error_message) from an export response."""
    if encoding == JSON:
        try:
            doc = json.loads(body.decode("utf-8")) if body else {}
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise OtlpDecodeError(f"bad response body: {exc}") from exc
        partial = _json_get(doc, "partialSuccess", "partial_success", {}) or {}
        rejected = _json_nanos(_json_get(partial, "rejectedSpans", "rejected_spans", 0))
        message = _json_get(partial, "errorMessage", "error_message", "") or ""
        return rejected, message
    rejected = 0
    message = ""
    pos, end = 0, len(body)
    while pos < end:
        tag, pos = _read_varint(body, pos, end)
        field, wt = tag >> 3, tag & 7
        if field == 1 and wt == 2:
            length, pos = _read_len(body, pos, end)
            inner_end = pos + length
            while pos < inner_end:
                itag, pos = _read_varint(body, pos, inner_end)
                ifield, iwt = itag >> 3, itag & 7
                if ifield == 1 and iwt == 0:
                    raw, pos = _read_varint(body, pos, inner_end)
                    rejected = _signed64(raw)
                elif ifield == 2 and iwt == 2:
                    ilen, pos = _read_len(body, pos, inner_end)
                    message = body[pos : pos + ilen].decode("utf-8", errors="replace")
                    pos += ilen
                else:
                    pos = _skip_field(body, pos, inner_end, iwt)
        else:
            pos = _skip_field(body, pos, end, wt)
    return rejected, message
