"""Structural model of the monitored landscape plus aggregated communication.

A Landscape holds, per application, the package/class/method forest observed
in a time window, call activity per class, aggregated caller->callee edges,
and the span names that carried no code location (feedstock for synthetic
structure). Values are treated as immutable snapshots: the pure operations
``fold_tree`` and ``merge`` return new landscapes, while the fold pipeline
uses the in-place ``fold_into`` on landscapes it exclusively owns.
"""

from __future__ import annotations

from collections import Counter
from typing import Dict, Iterator, Optional, Tuple

from .assembly import TraceTree, caller_callee_pairs
from .spans import CodeLocation, ResourceInfo, SpanRecord, extract_code_location

# Classes whose code location has an empty package path live in this pseudo
# package so every building has a district.
DEFAULT_PACKAGE = "(default)"

AppKey = Tuple[str, Optional[str]]
EdgeEnd = Tuple[AppKey, str, str]  # (app key, class fqn, method)
EdgeKey = Tuple[EdgeEnd, EdgeEnd]
NameEnd = Tuple[AppKey, str]  # (app key, span name)


class ClassEntity:
    __slots__ = ("fqn", "methods", "call_count", "synthetic")

    def __init__(self, fqn: str, synthetic: bool = False):
        self.fqn = fqn
        self.methods: set = set()
        self.call_count = 0
        self.synthetic = synthetic

    def copy(self) -> "ClassEntity":
        dup = ClassEntity(self.fqn, self.synthetic)
        dup.methods = set(self.methods)
        dup.call_count = self.call_count
        return dup


class PackageNode:
    __slots__ = ("name", "packages", "classes", "synthetic")

    def __init__(self, name: str, synthetic: bool = False):
        self.name = name
        self.packages: Dict[str, PackageNode] = {}
        self.classes: Dict[str, ClassEntity] = {}
        self.synthetic = synthetic

    def child(self, name: str, synthetic: bool = False) -> "PackageNode":
        node = self.packages.get(name)
        if node is None:
            node = PackageNode(name, synthetic)
            self.packages[name] = node
        return node

    def copy(self) -> "PackageNode":
        dup = PackageNode(self.name, self.synthetic)
        dup.packages = {name: node.copy() for name, node in self.packages.items()}
        dup.classes = {name: cls.copy() for name, cls in self.classes.items()}
        return dup

    def iter_classes(self) -> Iterator[ClassEntity]:
        for cls in self.classes.values():
            yield cls
        for node in self.packages.values():
            yield from node.iter_classes()


class Application:
    __slots__ = ("service_name", "instance_id", "root_packages",
                 "unresolved_counts", "synthetic_structure")

    def __init__(self, service_name: str, instance_id: Optional[str]):
        self.service_name = service_name
        self.instance_id = instance_id
        self.root_packages: Dict[str, PackageNode] = {}
        self.unresolved_counts: Counter = Counter()
        self.synthetic_structure = False

    @property
    def key(self) -> AppKey:
        return (self.service_name, self.instance_id)

    def root_package(self, name: str, synthetic: bool = False) -> PackageNode:
        node = self.root_packages.get(name)
        if node is None:
            node = PackageNode(name, synthetic)
            self.root_packages[name] = node
        return node

    def ensure_class(self, location: CodeLocation) -> ClassEntity:
        path = location.package_path or (DEFAULT_PACKAGE,)
        node = self.root_package(path[0], location.synthetic)
        for segment in path[1:]:
            node = node.child(segment, location.synthetic)
        cls = node.classes.get(location.class_name)
        if cls is None:
            cls = ClassEntity(location.fqn, location.synthetic)
            node.classes[location.class_name] = cls
        return cls

    def iter_classes(self) -> Iterator[ClassEntity]:
        for node in self.root_packages.values():
            yield from node.iter_classes()

    def copy(self) -> "Application":
        dup = Application(self.service_name, self.instance_id)
        dup.root_packages = {name: node.copy() for name, node in self.root_packages.items()}
        dup.unresolved_counts = Counter(self.unresolved_counts)
        dup.synthetic_structure = self.synthetic_structure
        return dup


class Landscape:
    """Applications, their structure, and aggregated communication edges."""

    __slots__ = ("window", "trace_count", "applications", "edges", "unresolved_pairs")

    def __init__(self, window: Optional[Tuple[int, int]] = None):
        if window is not None and window[1] <= window[0]:
            raise ValueError("window end must be greater than start")
        self.window = window
        self.trace_count = 0
        self.applications: Dict[AppKey, Application] = {}
        self.edges: Counter = Counter()  # EdgeKey -> call count
        self.unresolved_pairs: Counter = Counter()  # (NameEnd, NameEnd) -> call count

    # -- construction ------------------------------------------------------

    def ensure_application(self, resource: ResourceInfo) -> Application:
        key = resource.app_key
        app = self.applications.get(key)
        if app is None:
            app = Application(resource.service_name, resource.instance_id)
            self.applications[key] = app
        return app

    def fold_into(self, tree: TraceTree) -> None:
        """Accumulate one trace tree in place. Caller must own this value."""
        self.trace_count += 1
        locations: Dict[bytes, Optional[CodeLocation]] = {}
        apps: Dict[bytes, AppKey] = {}
        for span in tree.iter_spans():
            location = extract_code_location(span)
            locations[span.span_id] = location
            app = self.ensure_application(span.resource)
            apps[span.span_id] = app.key
            if location is not None:
                cls = app.ensure_class(location)
                cls.methods.add(location.method_name)
                cls.call_count += 1
            else:
                app.unresolved_counts[span.name] += 1
        for parent, child in caller_callee_pairs(tree):
            parent_loc = locations[parent.span_id]
            child_loc = locations[child.span_id]
            if parent_loc is not None and child_loc is not None:
                caller = (apps[parent.span_id], parent_loc.fqn, parent_loc.method_name)
                callee = (apps[child.span_id], child_loc.fqn, child_loc.method_name)
                self.edges[(caller, callee)] += 1
            elif parent_loc is None and child_loc is None:
                caller_name = (apps[parent.span_id], parent.name)
                callee_name = (apps[child.span_id], child.name)
                self.unresolved_pairs[(caller_name, callee_name)] += 1
            # mixed pairs contribute structure but no edge

    def copy(self) -> "Landscape":
        dup = Landscape(self.window)
        dup.trace_count = self.trace_count
        dup.applications = {key: app.copy() for key, app in self.applications.items()}
        dup.edges = Counter(self.edges)
        dup.unresolved_pairs = Counter(self.unresolved_pairs)
        return dup

    def is_empty(self) -> bool:
        return (not self.applications and not self.edges
                and not self.unresolved_pairs and self.trace_count == 0)

    # -- queries -----------------------------------------------------------

    def class_count(self) -> int:
        return sum(1 for app in self.applications.values() for _ in app.iter_classes())

    def total_edge_calls(self) -> int:
        return sum(self.edges.values())

    # -- equality / serialization ------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, Landscape):
            return NotImplemented
        return self.to_doc() == other.to_doc()

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def to_doc(self) -> dict:
        """Canonical dictionary form: deterministic, JSON-serializable."""
        apps = []
        for key in sorted(self.applications, key=_app_sort_key):
            app = self.applications[key]
            apps.append(
                {
                    "service_name": app.service_name,
                    "instance_id": app.instance_id,
                    "synthetic_structure": app.synthetic_structure,
                    "packages": [
                        _package_doc(app.root_packages[name])
                        for name in sorted(app.root_packages)
                    ],
                    "unresolved_span_names": {
                        name: count
                        for name, count in sorted(app.unresolved_counts.items())
                    },
                }
            )
        edges = []
        for edge_key in sorted(self.edges, key=_edge_sort_key):
            caller, callee = edge_key
            edges.append(
                {
                    "caller": _end_doc(caller),
                    "callee": _end_doc(callee),
                    "call_count": self.edges[edge_key],
                    "cross_application": caller[0] != callee[0],
                }
            )
        pairs = []
        for pair_key in sorted(self.unresolved_pairs, key=_pair_sort_key):
            caller, callee = pair_key
            pairs.append(
                {
                    "caller": _name_end_doc(caller),
                    "callee": _name_end_doc(callee),
                    "call_count": self.unresolved_pairs[pair_key],
                }
            )
        return {
            "window": list(self.window) if self.window else None,
            "trace_count": self.trace_count,
            "applications": apps,
            "edges": edges,
            "unresolved_pairs": pairs,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Landscape":
        window = doc.get("window")
        landscape = cls(tuple(window) if window else None)
        landscape.trace_count = int(doc.get("trace_count", 0))
        for app_doc in doc.get("applications", []):
            app = Application(app_doc["service_name"], app_doc.get("instance_id"))
            app.synthetic_structure = bool(app_doc.get("synthetic_structure", False))
            for pkg_doc in app_doc.get("packages", []):
                app.root_packages[pkg_doc["name"]] = _package_from_doc(pkg_doc)
            app.unresolved_counts = Counter(
                {name: int(count)
                 for name, count in app_doc.get("unresolved_span_names", {}).items()}
            )
            landscape.applications[app.key] = app
        for edge_doc in doc.get("edges", []):
            key = (_end_from_doc(edge_doc["caller"]), _end_from_doc(edge_doc["callee"]))
            landscape.edges[key] = int(edge_doc["call_count"])
        for pair_doc in doc.get("unresolved_pairs", []):
            key = (_name_end_from_doc(pair_doc["caller"]),
                   _name_end_from_doc(pair_doc["callee"]))
            landscape.unresolved_pairs[key] = int(pair_doc["call_count"])
        return landscape


def fold_tree(landscape: Landscape, tree: TraceTree) -> Landscape:
    """Pure fold: returns a new Landscape with the tree accumulated."""
    result = landscape.copy()
    result.fold_into(tree)
    return result


def merge(a: Landscape, b: Landscape) -> Landscape:
    """Union structure and add counts; windows must be disjoint or identical."""
    _check_windows(a.window, b.window)
    result = a.copy()
    result.window = _hull(a.window, b.window)
    result.trace_count += b.trace_count
    for key, app in b.applications.items():
        mine = result.applications.get(key)
        if mine is None:
            result.applications[key] = app.copy()
            continue
        for name, node in app.root_packages.items():
            _merge_package(mine.root_package(name, node.synthetic), node)
        mine.unresolved_counts.update(app.unresolved_counts)
        mine.synthetic_structure = mine.synthetic_structure or app.synthetic_structure
    result.edges.update(b.edges)
    result.unresolved_pairs.update(b.unresolved_pairs)
    return result


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _check_windows(a: Optional[Tuple[int, int]], b: Optional[Tuple[int, int]]) -> None:
    if a is None or b is None or a == b:
        return
    if a[0] < b[1] and b[0] < a[1]:
        raise ValueError(f"windows overlap but are not identical: {a} vs {b}")


def _hull(a: Optional[Tuple[int, int]], b: Optional[Tuple[int, int]]):
    if a is None:
        return b
    if b is None:
        return a
    return (min(a[0], b[0]), max(a[1], b[1]))


def _merge_package(target: PackageNode, source: PackageNode) -> None:
    target.synthetic = target.synthetic or source.synthetic
    for name, cls in source.classes.items():
        mine = target.classes.get(name)
        if mine is None:
            target.classes[name] = cls.copy()
        else:
            mine.methods |= cls.methods
            mine.call_count += cls.call_count
            mine.synthetic = mine.synthetic or cls.synthetic
    for name, node in source.packages.items():
        _merge_package(target.child(name, node.synthetic), node)


def _app_sort_key(key: AppKey):
    return (key[0], key[1] or "")


def _end_sort_key(end: EdgeEnd):
    return (end[0][0], end[0][1] or "", end[1], end[2])


def _edge_sort_key(edge: EdgeKey):
    return (_end_sort_key(edge[0]), _end_sort_key(edge[1]))


def _name_end_sort_key(end: NameEnd):
    return (end[0][0], end[0][1] or "", end[1])


def _pair_sort_key(pair):
    return (_name_end_sort_key(pair[0]), _name_end_sort_key(pair[1]))


def _end_doc(end: EdgeEnd) -> dict:
    (service, instance), fqn, method = end
    return {"service_name": service, "instance_id": instance, "class": fqn, "method": method}


def _end_from_doc(doc: dict) -> EdgeEnd:
    return ((doc["service_name"], doc.get("instance_id")), doc["class"], doc["method"])


def _name_end_doc(end: NameEnd) -> dict:
    (service, instance), name = end
    return {"service_name": service, "instance_id": instance, "span_name": name}


def _name_end_from_doc(doc: dict) -> NameEnd:
    return ((doc["service_name"], doc.get("instance_id")), doc["span_name"])


def _package_doc(node: PackageNode) -> dict:
    return {
        "name": node.name,
        "synthetic": node.synthetic,
        "packages": [_package_doc(node.packages[name]) for name in sorted(node.packages)],
        "classes": [
            {
                "fqn": cls.fqn,
                "methods": sorted(cls.methods),
                "call_count": cls.call_count,
                "synthetic": cls.synthetic,
            }
            for _, cls in sorted(node.classes.items())
        ],
    }


def _package_from_doc(doc: dict) -> PackageNode:
    node = PackageNode(doc["name"], bool(doc.get("synthetic", False)))
    for child_doc in doc.get("packages", []):
        node.packages[child_doc["name"]] = _package_from_doc(child_doc)
    for cls_doc in doc.get("classes", []):
        cls = ClassEntity(cls_doc["fqn"], bool(cls_doc.get("synthetic", False)))
        cls.methods = set(cls_doc.get("methods", []))
        cls.call_count = int(cls_doc.get("call_count", 0))
        class_name = cls.fqn.rsplit(".", 1)[-1]
        node.classes[class_name] = cls
    return node
