"""Deterministic software-city geometry.

Applications become foundations, packages nested districts, classes square
buildings and communication edges arcs between building centers. All
coordinates are absolute in abstract ground-plane units. Layout is a pure
function of the landscape: entities are visited in sorted order and sums run
in fixed order, so the serialized scene is byte-identical across runs.

Class footprint encodes method count, height call activity:
side = 1 + sqrt(#methods), height = 1 + ln(1 + calls). Arc width grows with
call count as 1 + log10(1 + calls). Rectangles are packed with a greedy
shelf packer; a squarified treemap could replace ``pack`` without touching
anything else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .landscape import AppKey, Application, ClassEntity, Landscape, PackageNode
from .landscape import _app_sort_key, _edge_sort_key  # shared deterministic orderings

GAP = 0.5

ROLE_FOUNDATION = "foundation"
ROLE_DISTRICT_EVEN = "district-even"
ROLE_DISTRICT_ODD = "district-odd"
ROLE_BUILDING = "building"
ROLE_ARC = "arc"
ROLE_SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Rect:
    x: float
    z: float
    width: float
    depth: float

    def to_list(self) -> list:
        return [self.x, self.z, self.width, self.depth]

    def contains(self, other: "Rect", margin: float = 0.0) -> bool:
        return (
            other.x >= self.x + margin
            and other.z >= self.z + margin
            and other.x + other.width <= self.x + self.width - margin + 1e-9
            and other.z + other.depth <= self.z + self.depth - margin + 1e-9
        )

    def overlaps(self, other: "Rect") -> bool:
        return (
            self.x < other.x + other.width
            and other.x < self.x + self.width
            and self.z < other.z + other.depth
            and other.z < self.z + self.depth
        )


@dataclass(frozen=True)
class Building:
    fqn: str
    rect: Rect
    height: float
    synthetic: bool

    @property
    def center(self) -> Tuple[float, float]:
        return (self.rect.x + self.rect.width / 2.0, self.rect.z + self.rect.depth / 2.0)


@dataclass(frozen=True)
class District:
    name: str
    rect: Rect
    elevation_level: int
    districts: tuple
    buildings: tuple
    synthetic: bool


@dataclass(frozen=True)
class Foundation:
    service_name: str
    instance_id: Optional[str]
    rect: Rect
    districts: tuple


@dataclass(frozen=True)
class Arc:
    from_center: Tuple[float, float]
    to_center: Tuple[float, float]
    width: float
    call_count: int
    cross_application: bool


@dataclass(frozen=True)
class CityScene:
    foundations: tuple
    arcs: tuple


def building_dimensions(cls: ClassEntity) -> Tuple[float, float]:
    """Footprint side and height for one class."""
    side = 1.0 + math.sqrt(len(cls.methods))
    height = 1.0 + math.log(1.0 + cls.call_count)
    return side, height


def arc_width(call_count: int) -> float:
    return 1.0 + math.log10(1.0 + call_count)


def pack(items: List[Tuple[str, float, float]]):
    """Greedy shelf packing of (name, width, depth) items.

    Items are placed largest-area first (ties by name) onto shelves whose
    summed item width stays within ceil(sqrt(total_area)) * 1.2; a uniform
    gap separates neighbors and surrounds the content. Returns a placement
    map of name -> (x, z) offsets and the bounding (width, depth).
    """
    if not items:
        return {}, (2 * GAP, 2 * GAP)
    order = sorted(items, key=lambda it: (-(it[1] * it[2]), it[0]))
    total_area = 0.0
    for _, width, depth in order:
        total_area += width * depth
    target = math.ceil(math.sqrt(total_area)) * 1.2

    placements: Dict[str, Tuple[float, float]] = {}
    cursor_x = 0.0
    shelf_items_width = 0.0
    shelf_z = 0.0
    shelf_depth = 0.0
    max_right = 0.0
    for name, width, depth in order:
        if shelf_items_width > 0 and shelf_items_width + width > target:
            shelf_z += shelf_depth + GAP
            cursor_x = 0.0
            shelf_items_width = 0.0
            shelf_depth = 0.0
        placements[name] = (GAP + cursor_x, GAP + shelf_z)
        max_right = max(max_right, cursor_x + width)
        cursor_x += width + GAP
        shelf_items_width += width
        shelf_depth = max(shelf_depth, depth)
    bounding = (max_right + 2 * GAP, shelf_z + shelf_depth + 2 * GAP)
    return placements, bounding


class _Sized:
    __slots__ = ("node", "width", "depth", "child_sizes", "class_dims", "placements")

    def __init__(self, node: PackageNode):
        self.node = node
        self.child_sizes: List[_Sized] = []
        self.class_dims: List[Tuple[ClassEntity, float, float]] = []
        self.placements: Dict[str, Tuple[float, float]] = {}
        self.width = 0.0
        self.depth = 0.0


def _measure_package(node: PackageNode) -> _Sized:
    sized = _Sized(node)
    items: List[Tuple[str, float, float]] = []
    for name in sorted(node.packages):
        child = _measure_package(node.packages[name])
        sized.child_sizes.append(child)
        items.append((f"p:{name}", child.width, child.depth))
    for name in sorted(node.classes):
        cls = node.classes[name]
        side, height = building_dimensions(cls)
        sized.class_dims.append((cls, side, height))
        items.append((f"c:{name}", side, side))
    sized.placements, (sized.width, sized.depth) = pack(items)
    return sized


def _place_package(sized: _Sized, origin: Tuple[float, float], level: int,
                   app_key: AppKey, centers: Dict) -> District:
    ox, oz = origin
    districts = []
    for child in sized.child_sizes:
        dx, dz = sized.placements[f"p:{child.node.name}"]
        districts.append(_place_package(child, (ox + dx, oz + dz), level + 1,
                                        app_key, centers))
    buildings = []
    for cls, side, height in sized.class_dims:
        class_name = cls.fqn.rsplit(".", 1)[-1]
        bx, bz = sized.placements[f"c:{class_name}"]
        building = Building(
            fqn=cls.fqn,
            rect=Rect(ox + bx, oz + bz, side, side),
            height=height,
            synthetic=cls.synthetic,
        )
        buildings.append(building)
        centers[(app_key, cls.fqn)] = building.center
    return District(
        name=sized.node.name,
        rect=Rect(ox, oz, sized.width, sized.depth),
        elevation_level=level,
        districts=tuple(districts),
        buildings=tuple(buildings),
        synthetic=sized.node.synthetic,
    )


def _measure_application(app: Application):
    roots = [_measure_package(app.root_packages[name]) for name in sorted(app.root_packages)]
    items = [(f"p:{sized.node.name}", sized.width, sized.depth) for sized in roots]
    placements, bounding = pack(items)
    return roots, placements, bounding


def layout(landscape: Landscape) -> CityScene:
    """Compute the full city scene for a landscape."""
    app_keys = sorted(landscape.applications, key=_app_sort_key)
    measured = {}
    ground_items = []
    for key in app_keys:
        app = landscape.applications[key]
        roots, placements, bounding = _measure_application(app)
        measured[key] = (roots, placements, bounding)
        ground_items.append((_ground_name(key), bounding[0], bounding[1]))
    ground_placements, _ = pack(ground_items)

    centers: Dict = {}
    foundations = []
    for key in app_keys:
        app = landscape.applications[key]
        roots, placements, (width, depth) = measured[key]
        fx, fz = ground_placements[_ground_name(key)]
        districts = []
        for sized in roots:
            dx, dz = placements[f"p:{sized.node.name}"]
            districts.append(_place_package(sized, (fx + dx, fz + dz), 1, key, centers))
        foundations.append(
            Foundation(
                service_name=app.service_name,
                instance_id=app.instance_id,
                rect=Rect(fx, fz, width, depth),
                districts=tuple(districts),
            )
        )

    arcs = []
    for edge_key in sorted(landscape.edges, key=_edge_sort_key):
        (caller_app, caller_fqn, _), (callee_app, callee_fqn, _) = edge_key
        try:
            from_center = centers[(caller_app, caller_fqn)]
            to_center = centers[(callee_app, callee_fqn)]
        except KeyError as exc:
            raise ValueError(f"edge references class without building: {exc}") from exc
        count = landscape.edges[edge_key]
        arcs.append(
            Arc(
                from_center=from_center,
                to_center=to_center,
                width=arc_width(count),
                call_count=count,
                cross_application=caller_app != callee_app,
            )
        )
    return CityScene(foundations=tuple(foundations), arcs=tuple(arcs))


def _ground_name(key: AppKey) -> str:
    return f"a:{key[0]}\x00{key[1] or ''}"


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _district_role(district: District) -> str:
    if district.synthetic:
        return ROLE_SYNTHETIC
    return ROLE_DISTRICT_EVEN if district.elevation_level % 2 == 0 else ROLE_DISTRICT_ODD


def _district_doc(district: District) -> dict:
    return {
        "name": district.name,
        "rect": district.rect.to_list(),
        "elevation_level": district.elevation_level,
        "synthetic": district.synthetic,
        "color_role": _district_role(district),
        "districts": [_district_doc(d) for d in district.districts],
        "buildings": [
            {
                "fqn": b.fqn,
                "rect": b.rect.to_list(),
                "height": b.height,
                "synthetic": b.synthetic,
                "color_role": ROLE_SYNTHETIC if b.synthetic else ROLE_BUILDING,
                "center": list(b.center),
            }
            for b in district.buildings
        ],
    }


def scene_to_doc(scene: CityScene) -> dict:
    return {
        "foundations": [
            {
                "service_name": f.service_name,
                "instance_id": f.instance_id,
                "rect": f.rect.to_list(),
                "color_role": ROLE_FOUNDATION,
                "districts": [_district_doc(d) for d in f.districts],
            }
            for f in scene.foundations
        ],
        "arcs": [
            {
                "from": list(a.from_center),
                "to": list(a.to_center),
                "width": a.width,
                "call_count": a.call_count,
                "cross_application": a.cross_application,
                "color_role": ROLE_ARC,
            }
            for a in scene.arcs
        ],
    }


def scene_to_json(scene: CityScene) -> bytes:
    return json.dumps(scene_to_doc(scene), separators=(",", ":")).encode("utf-8")
