"""Synthetic trace workload generator with machine-readable ground truth.

A scenario declares applications (with their class/method structure, or
route names for distributed-only instrumentation) and weighted call-tree
templates. Generation is fully seeded: the same scenario produces the same
byte stream every run, and the ground-truth document is an exact oracle for
what a lossless pipeline run must reconstruct.

Modes mirror the three instrumentation styles the pipeline is built for:
``application_monitoring`` spans carry code attributes for every call,
``distributed_only`` spans are route-named with no code attributes, and
``unit_test_burst`` is application-style shaped for maximum-rate floods.
Suppressed warm-up traces are counted in ground-truth totals but never
emitted, modeling spans missed before an agent finished loading.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import requests

from . import otlp
from .spans import ResourceInfo, SpanRecord

MODE_APPLICATION = "application_monitoring"
MODE_DISTRIBUTED = "distributed_only"
MODE_BURST = "unit_test_burst"
MODES = (MODE_APPLICATION, MODE_DISTRIBUTED, MODE_BURST)

DEFAULT_BASE_TIME_UNIX_MS = 1_754_700_000_000
DEFAULT_TRACE_INTERVAL_US = 2_000
MAX_BATCH_SPANS = 512
SEND_RETRIES = 3


class ScenarioError(ValueError):
    """Scenario file is structurally or referentially invalid."""


@dataclass(frozen=True)
class AppSpec:
    service_name: str
    instance_id: Optional[str]
    classes: dict  # namespace -> tuple of method names
    routes: tuple

    @property
    def key(self):
        return (self.service_name, self.instance_id)


@dataclass(frozen=True)
class CallNode:
    app: str
    namespace: Optional[str]  # None for route-style calls
    name: str  # method name or route name
    children: tuple

    def span_count(self) -> int:
        return 1 + sum(child.span_count() for child in self.children)


@dataclass(frozen=True)
class CallTemplate:
    name: str
    weight: float
    root: CallNode


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    seed: int
    trace_count: int
    warmup_skip_traces: int
    base_time_unix_nano: int
    trace_interval_nano: int
    applications: tuple
    templates: tuple

    def app_by_service(self) -> Dict[str, AppSpec]:
        return {app.service_name: app for app in self.applications}


# ---------------------------------------------------------------------------
# scenario loading
# ---------------------------------------------------------------------------


def _parse_call_node(doc: dict, apps: Dict[str, AppSpec], mode: str) -> CallNode:
    if not isinstance(doc, dict):
        raise ScenarioError("template node must be an object")
    service = doc.get("app")
    app = apps.get(service)
    if app is None:
        raise ScenarioError(f"template references undeclared application {service!r}")
    call = doc.get("call")
    if not isinstance(call, str) or not call:
        raise ScenarioError(f"template node in {service!r} is missing 'call'")
    if mode == MODE_DISTRIBUTED:
        if "#" in call:
            raise ScenarioError(f"distributed_only calls must be route names, got {call!r}")
        if call not in app.routes:
            raise ScenarioError(f"route {call!r} not declared by {service!r}")
        namespace, name = None, call
    else:
        if "#" not in call:
            raise ScenarioError(f"call {call!r} must be '<namespace>#<method>'")
        namespace, name = call.split("#", 1)
        if namespace not in app.classes or name not in app.classes[namespace]:
            raise ScenarioError(f"method {call!r} not declared by {service!r}")
    children = tuple(
        _parse_call_node(child, apps, mode) for child in doc.get("children", [])
    )
    return CallNode(app=service, namespace=namespace, name=name, children=children)


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    mode = doc.get("mode")
    if mode not in MODES:
        raise ScenarioError(f"mode must be one of {MODES}, got {mode!r}")
    try:
        trace_count = int(doc.get("trace_count", 0))
        seed = int(doc.get("seed", 0))
        warmup = int(doc.get("warmup_skip_traces", 0))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"numeric scenario field invalid: {exc}") from exc
    if trace_count < 0 or warmup < 0:
        raise ScenarioError("trace_count and warmup_skip_traces must be >= 0")

    apps: Dict[str, AppSpec] = {}
    for app_doc in doc.get("applications", []):
        service = app_doc.get("service_name")
        if not isinstance(service, str) or not service:
            raise ScenarioError("application needs a non-empty service_name")
        if service in apps:
            raise ScenarioError(f"duplicate application {service!r}")
        classes = {}
        for cls_doc in app_doc.get("classes", []):
            namespace = cls_doc.get("namespace")
            methods = tuple(cls_doc.get("methods", []))
            if not namespace or not methods:
                raise ScenarioError(f"class in {service!r} needs namespace and methods")
            classes[namespace] = methods
        routes = tuple(app_doc.get("routes", []))
        if mode == MODE_DISTRIBUTED and not routes and not classes:
            raise ScenarioError(f"application {service!r} declares no routes")
        apps[service] = AppSpec(
            service_name=service,
            instance_id=app_doc.get("instance_id"),
            classes=classes,
            routes=routes,
        )
    if not apps:
        raise ScenarioError("scenario declares no applications")

    templates = []
    for tmpl_doc in doc.get("call_templates", []):
        weight = float(tmpl_doc.get("weight", 1))
        if weight <= 0:
            raise ScenarioError("template weight must be > 0")
        templates.append(
            CallTemplate(
                name=tmpl_doc.get("name", f"template-{len(templates)}"),
                weight=weight,
                root=_parse_call_node(tmpl_doc.get("root"), apps, mode),
            )
        )
    if not templates and trace_count > 0:
        raise ScenarioError("scenario declares no call templates")

    base_ms = int(doc.get("base_time_unix_ms", DEFAULT_BASE_TIME_UNIX_MS))
    interval_us = int(doc.get("trace_interval_us", DEFAULT_TRACE_INTERVAL_US))
    return Scenario(
        name=doc.get("name", "unnamed"),
        mode=mode,
        seed=seed,
        trace_count=trace_count,
        warmup_skip_traces=warmup,
        base_time_unix_nano=base_ms * 1_000_000,
        trace_interval_nano=interval_us * 1_000,
        applications=tuple(apps.values()),
        templates=tuple(templates),
    )


def bundled_scenario_names() -> List[str]:
    names = []
    for entry in resources.files("tracecity.scenarios").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[: -len(".json")])
    return sorted(names)


def load_scenario(source) -> Scenario:
    """Load a scenario from a path, a bundled fixture name, or a dict."""
    if isinstance(source, dict):
        return parse_scenario(source)
    path = Path(source)
    if path.is_file():
        with open(path, "r", encoding="utf-8") as handle:
            try:
                return parse_scenario(json.load(handle))
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    name = str(source)
    if name.endswith(".json"):
        name = name[: -len(".json")]
    if name in bundled_scenario_names():
        text = resources.files("tracecity.scenarios").joinpath(f"{name}.json").read_text()
        return parse_scenario(json.loads(text))
    raise ScenarioError(f"scenario not found: {source}")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _resource_for(app: AppSpec) -> ResourceInfo:
    raw = {"service.name": app.service_name, "telemetry.sdk.name": "tracecity-loadgen"}
    if app.instance_id is not None:
        raw["service.instance.id"] = app.instance_id
    return ResourceInfo(service_name=app.service_name, instance_id=app.instance_id, raw=raw)


def _nonzero_bytes(rng: random.Random, length: int) -> bytes:
    raw = rng.randbytes(length)
    while raw == bytes(length):
        raw = rng.randbytes(length)
    return raw


def _span_name(node: CallNode) -> str:
    if node.namespace is None:
        return node.name
    return f"{node.namespace.rsplit('.', 1)[-1]}.{node.name}"


def _template_rng(scenario: Scenario) -> random.Random:
    # separate streams so ground truth can replay template choices without
    # consuming the per-span draws
    return random.Random(f"{scenario.seed}:templates")


def _span_rng(scenario: Scenario) -> random.Random:
    return random.Random(f"{scenario.seed}:spans")


def _build_trace(rng: random.Random, template: CallTemplate,
                 trace_start: int, resources_by_app: Dict[str, ResourceInfo]) -> List[SpanRecord]:
    trace_id = _nonzero_bytes(rng, 16)
    spans: List[SpanRecord] = []

    def build(node: CallNode, start: int, parent_id: Optional[bytes]) -> int:
        span_id = _nonzero_bytes(rng, 8)
        cursor = start + rng.randint(20_000, 100_000)
        for child in node.children:
            cursor = build(child, cursor, span_id) + rng.randint(5_000, 20_000)
        end = cursor + rng.randint(20_000, 100_000)
        if node.namespace is None:
            attributes: dict = {}
        else:
            attributes = {"code.namespace": node.namespace, "code.function": node.name}
        spans.append(
            SpanRecord(
                trace_id=trace_id,
                span_id=span_id,
                parent_span_id=parent_id,
                name=_span_name(node),
                start_unix_nano=start,
                end_unix_nano=end,
                attributes=attributes,
                resource=resources_by_app[node.app],
            )
        )
        return end

    build(template.root, trace_start, None)
    spans.reverse()  # parents precede children (build appends post-order)
    return spans


def iter_traces(scenario: Scenario) -> Iterator[Tuple[int, bool, List[SpanRecord]]]:
    """Yield (index, emitted, spans) for every trace of the scenario.

    Deterministic for a fixed scenario: one RNG seeded from the scenario
    drives template choice, ids and timing in a fixed draw order.
    """
    template_rng = _template_rng(scenario)
    span_rng = _span_rng(scenario)
    resources_by_app = {app.service_name: _resource_for(app) for app in scenario.applications}
    weights = [template.weight for template in scenario.templates]
    for index in range(scenario.trace_count):
        template = template_rng.choices(scenario.templates, weights=weights)[0]
        trace_start = scenario.base_time_unix_nano + index * scenario.trace_interval_nano
        spans = _build_trace(span_rng, template, trace_start, resources_by_app)
        emitted = index >= scenario.warmup_skip_traces
        yield index, emitted, spans


def iter_emitted_spans(scenario: Scenario) -> Iterator[SpanRecord]:
    for _, emitted, spans in iter_traces(scenario):
        if emitted:
            yield from spans


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------


def _package_prefixes(namespace: str) -> List[str]:
    segments = namespace.split(".")[:-1]
    if not segments:
        return ["(default)"]
    return [".".join(segments[: i + 1]) for i in range(len(segments))]


def compute_ground_truth(scenario: Scenario) -> dict:
    """Exact expectation for a lossless run of the emitted traces.

    Entity and edge counts cover emitted traces only; totals also account for
    the suppressed warm-up traces.
    """
    apps = scenario.app_by_service()
    classes: Dict[str, Dict[str, set]] = {s: {} for s in apps}
    class_calls: Dict[str, Counter] = {s: Counter() for s in apps}
    route_calls: Dict[str, Counter] = {s: Counter() for s in apps}
    edges: Counter = Counter()
    totals = Counter()

    def visit(node: CallNode, counting: bool) -> None:
        if not counting:
            for child in node.children:
                visit(child, counting)
            return
        if node.namespace is None:
            route_calls[node.app][node.name] += 1
        else:
            classes[node.app].setdefault(node.namespace, set()).add(node.name)
            class_calls[node.app][node.namespace] += 1
        for child in node.children:
            caller = (node.app, node.namespace, node.name)
            callee = (child.app, child.namespace, child.name)
            edges[(caller, callee)] += 1
            visit(child, counting)

    template_rng = _template_rng(scenario)
    weights = [template.weight for template in scenario.templates]
    for index in range(scenario.trace_count):
        template = template_rng.choices(scenario.templates, weights=weights)[0]
        emitted = index >= scenario.warmup_skip_traces
        count = template.root.span_count()
        totals["traces_total"] += 1
        totals["spans_total"] += count
        if emitted:
            totals["traces_emitted"] += 1
            totals["spans_emitted"] += count
        else:
            totals["traces_suppressed"] += 1
            totals["spans_suppressed"] += count
        visit(template.root, emitted)

    app_docs = []
    for app in scenario.applications:
        service = app.service_name
        package_set: set = set()
        for namespace in classes[service]:
            package_set.update(_package_prefixes(namespace))
        app_docs.append(
            {
                "service_name": service,
                "instance_id": app.instance_id,
                "classes": {ns: sorted(ms) for ns, ms in sorted(classes[service].items())},
                "class_call_counts": dict(sorted(class_calls[service].items())),
                "packages": sorted(package_set),
                "route_call_counts": dict(sorted(route_calls[service].items())),
            }
        )

    def end_doc(end) -> dict:
        service, namespace, name = end
        return {
            "service_name": service,
            "instance_id": apps[service].instance_id,
            "class": namespace,
            "method": name,
        }

    edge_docs = [
        {
            "caller": end_doc(caller),
            "callee": end_doc(callee),
            "call_count": count,
            "cross_application": caller[0] != callee[0],
        }
        for (caller, callee), count in sorted(edges.items())
    ]
    return {
        "scenario": scenario.name,
        "mode": scenario.mode,
        "seed": scenario.seed,
        "totals": {
            "traces_total": totals["traces_total"],
            "traces_emitted": totals["traces_emitted"],
            "traces_suppressed": totals["traces_suppressed"],
            "spans_total": totals["spans_total"],
            "spans_emitted": totals["spans_emitted"],
            "spans_suppressed": totals["spans_suppressed"],
        },
        "applications": app_docs,
        "edges": edge_docs,
    }


# ---------------------------------------------------------------------------
# emission: file stream and live send
# ---------------------------------------------------------------------------


def _batches(scenario: Scenario, batch_size: int = MAX_BATCH_SPANS) -> Iterator[List[SpanRecord]]:
    batch: List[SpanRecord] = []
    for span in iter_emitted_spans(scenario):
        batch.append(span)
        if len(batch) >= batch_size:
            yield batch
            batch = []
    if batch:
        yield batch


def write_stream(scenario: Scenario, out_path) -> dict:
    """Write the emitted stream as one OTLP-JSON export request per line."""
    requests_written = 0
    spans_written = 0
    with open(out_path, "w", encoding="utf-8") as handle:
        for batch in _batches(scenario):
            handle.write(otlp.encode_export_request_json(batch).decode("utf-8"))
            handle.write("\n")
            requests_written += 1
            spans_written += len(batch)
    return {"requests_written": requests_written, "spans_written": spans_written}


def _fetch_status(session: requests.Session, status_url: str) -> Optional[dict]:
    try:
        response = session.get(status_url, timeout=10)
        response.raise_for_status()
        return response.json()
    except (requests.RequestException, ValueError):
        return None


def send(scenario: Scenario, target: str, rate: Optional[float] = None,
         encoding: str = otlp.PROTOBUF, status_url: Optional[str] = None) -> dict:
    """Post the emitted stream to an OTLP/HTTP endpoint in batches of <= 512.

    ``rate`` limits throughput in spans per second; None sends flat out.
    Failed posts are retried 3 times, then their spans are reported as
    unacknowledged.
    """
    url = target.rstrip("/") + "/v1/traces"
    headers = {"Content-Type": otlp.CONTENT_TYPES[encoding]}
    session = requests.Session()
    counters_before = _fetch_status(session, status_url) if status_url else None

    sent = acknowledged = unacknowledged = 0
    request_count = failed_requests = retries = partial_rejected = 0
    started = time.monotonic()
    for batch in _batches(scenario):
        payload = otlp.encode_export_request(batch, encoding)
        response = None
        for attempt in range(1 + SEND_RETRIES):
            try:
                response = session.post(url, data=payload, headers=headers, timeout=60)
                break
            except requests.RequestException:
                retries += 1
                time.sleep(0.1 * (attempt + 1))
        request_count += 1
        sent += len(batch)
        if response is not None and response.status_code == 200:
            acknowledged += len(batch)
            try:
                rejected, _ = otlp.decode_export_response(response.content, encoding)
                partial_rejected += rejected
            except otlp.OtlpDecodeError:
                pass
        else:
            failed_requests += 1
            unacknowledged += len(batch)
        if rate:
            expected = sent / rate
            elapsed = time.monotonic() - started
            if expected > elapsed:
                time.sleep(expected - elapsed)
    counters_after = _fetch_status(session, status_url) if status_url else None
    return {
        "target": url,
        "encoding": encoding,
        "sent_spans": sent,
        "acknowledged_spans": acknowledged,
        "unacknowledged_spans": unacknowledged,
        "requests": request_count,
        "failed_requests": failed_requests,
        "retries": retries,
        "partial_rejected_spans": partial_rejected,
        "elapsed_seconds": time.monotonic() - started,
        "server_status_before": counters_before,
        "server_status_after": counters_after,
    }


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="loadgen",
        description="Generate or send synthetic OTLP trace workloads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a stream file and ground truth")
    gen.add_argument("--scenario", required=True,
                     help="scenario file or bundled name "
                          f"({', '.join(bundled_scenario_names())})")
    gen.add_argument("--out", help="output stream file (OTLP-JSON lines)")
    gen.add_argument("--truth", help="output ground-truth JSON file")

    snd = sub.add_parser("send", help="post the stream to a live endpoint")
    snd.add_argument("--scenario", required=True)
    snd.add_argument("--target", required=True, help="base URL, e.g. http://127.0.0.1:4318")
    snd.add_argument("--rate", type=float, help="spans per second; omit for unlimited")
    snd.add_argument("--encoding", choices=[otlp.PROTOBUF, otlp.JSON], default=otlp.PROTOBUF)
    snd.add_argument("--status-url", help="service status endpoint to sample before/after")
    snd.add_argument("--report", help="write the send report to this JSON file")

    args = parser.parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2

    if args.command == "generate":
        truth = compute_ground_truth(scenario)
        if args.truth:
            with open(args.truth, "w", encoding="utf-8") as handle:
                json.dump(truth, handle, indent=2)
        if args.out:
            stats = write_stream(scenario, args.out)
            print(f"wrote {stats['spans_written']} spans "
                  f"in {stats['requests_written']} requests to {args.out}")
        print(json.dumps(truth["totals"], indent=2))
        return 0

    report = send(scenario, args.target, rate=args.rate, encoding=args.encoding,
                  status_url=args.status_url)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as handle:
            json.dump(report, handle, indent=2)
    print(json.dumps({k: report[k] for k in
                      ("sent_spans", "acknowledged_spans", "unacknowledged_spans",
                       "failed_requests", "elapsed_seconds")}, indent=2))
    return 0 if report["failed_requests"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
