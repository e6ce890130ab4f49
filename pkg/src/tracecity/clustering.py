"""Synthetic structure for applications whose spans carry no code location.

Distributed-only instrumentation yields route-style span names and nothing
about source files, so the package tree would stay empty. Names are grouped
by token-set similarity into clusters, and each cluster becomes one synthetic
package/class whose methods are the member span names. Synthetic entities are
flagged so a viewer can render them distinctly from real code structure.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List

from .landscape import Application, ClassEntity, Landscape

DEFAULT_JACCARD_THRESHOLD = 0.5
SYNTHETIC_ROOT = "synthetic"
_FALLBACK_LABEL = "misc"  # clusters of names that tokenize to nothing

_SPLIT = re.compile(r"[^0-9A-Za-z]+")


def tokenize(name: str) -> List[str]:
    """Split on non-alphanumerics, lowercase, drop empties and pure numbers."""
    return [t.lower() for t in _SPLIT.split(name) if t and not t.isdigit()]


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


@dataclass(frozen=True)
class NameCluster:
    label: str
    members: frozenset
    token_set: frozenset


class _WorkingCluster:
    __slots__ = ("members", "token_set", "token_member_counts")

    def __init__(self):
        self.members: List[str] = []
        self.token_set: set = set()
        self.token_member_counts: Counter = Counter()

    def add(self, name: str, tokens: set) -> None:
        self.members.append(name)
        self.token_set |= tokens
        for token in tokens:
            self.token_member_counts[token] += 1

    def label(self) -> str:
        if not self.token_member_counts:
            return _FALLBACK_LABEL
        best_count = max(self.token_member_counts.values())
        return min(t for t, c in self.token_member_counts.items() if c == best_count)


def cluster_names(names: Iterable[str],
                  threshold: float = DEFAULT_JACCARD_THRESHOLD) -> List[NameCluster]:
    """Partition names into clusters by greedy first-fit on token-set Jaccard.

    Names are processed in lexicographic order and clusters are probed in
    founding order, so the result is independent of input container order.
    """
    clusters: List[_WorkingCluster] = []
    for name in sorted(set(names)):
        tokens = set(tokenize(name))
        for cluster in clusters:
            if jaccard(cluster.token_set, tokens) >= threshold:
                cluster.add(name, tokens)
                break
        else:
            fresh = _WorkingCluster()
            fresh.add(name, tokens)
            clusters.append(fresh)
    return [
        NameCluster(
            label=c.label(),
            members=frozenset(c.members),
            token_set=frozenset(c.token_set),
        )
        for c in clusters
    ]


def _camel(label: str) -> str:
    return label[:1].upper() + label[1:]


def synthesize_structure(app: Application, clusters: List[NameCluster]) -> Application:
    """Return the application extended with one synthetic class per cluster.

    The synthetic hierarchy is rooted at a package named ``synthetic`` with
    one child package per cluster; duplicate labels get numeric suffixes.
    Unresolved names are fully consumed. When the application has no
    unresolved names it is returned unchanged.
    """
    if not app.unresolved_counts:
        return app
    result = app.copy()
    root = result.root_package(SYNTHETIC_ROOT, synthetic=True)
    root.synthetic = True
    used: set = set(root.packages)
    for cluster in clusters:
        pkg_name = cluster.label
        suffix = 2
        while pkg_name in used:
            pkg_name = f"{cluster.label}{suffix}"
            suffix += 1
        used.add(pkg_name)
        node = root.child(pkg_name, synthetic=True)
        cls = ClassEntity(f"{SYNTHETIC_ROOT}.{pkg_name}.{_camel(pkg_name)}", synthetic=True)
        cls.methods = set(cluster.members)
        cls.call_count = sum(result.unresolved_counts[m] for m in cluster.members)
        node.classes[_camel(pkg_name)] = cls
    result.unresolved_counts.clear()
    result.synthetic_structure = True
    return result


def _class_by_member(app: Application) -> Dict[str, str]:
    mapping: Dict[str, str] = {}
    for cls in app.iter_classes():
        if cls.synthetic:
            for member in cls.methods:
                mapping[member] = cls.fqn
    return mapping


def synthesize_landscape(landscape: Landscape,
                         threshold: float = DEFAULT_JACCARD_THRESHOLD) -> Landscape:
    """Cluster every application's unresolved names and re-aggregate edges.

    Pairs between spans that both lacked a code location become edges between
    the synthetic classes their names were clustered into.
    """
    if not any(app.unresolved_counts for app in landscape.applications.values()):
        return landscape
    result = landscape.copy()
    member_maps: Dict[tuple, Dict[str, str]] = {}
    for key, app in list(result.applications.items()):
        if not app.unresolved_counts:
            continue
        clusters = cluster_names(app.unresolved_counts.keys(), threshold)
        synthesized = synthesize_structure(app, clusters)
        result.applications[key] = synthesized
        member_maps[key] = _class_by_member(synthesized)
    for (caller, callee), count in result.unresolved_pairs.items():
        caller_key, caller_name = caller
        callee_key, callee_name = callee
        caller_fqn = member_maps.get(caller_key, {}).get(caller_name)
        callee_fqn = member_maps.get(callee_key, {}).get(callee_name)
        if caller_fqn is None or callee_fqn is None:
            continue
        edge = ((caller_key, caller_fqn, caller_name), (callee_key, callee_fqn, callee_name))
        result.edges[edge] += count
    result.unresolved_pairs.clear()
    return result
