"""View-hierarchy parsing and element selection.

Screens arrive as a screenshot plus a JSON tree of UI elements where every
node carries a class, pixel bounds, and a clickable attribute (the common
Android dump layout: ``bounds`` as ``[left, top, right, bottom]``, children
nested under ``children``). Selection mirrors a labeling study: walk up from
each leaf to the outermost clickable ancestor, treat that container as one
element, never select inside it, skip the status/navigation bar bands, and
cap both the clickable and non-clickable picks per screen.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .rng import RngStream

log = logging.getLogger("tapkit.hierarchy")

DEFAULT_EXCLUDE_TOP = 0.05
DEFAULT_EXCLUDE_BOTTOM = 0.05


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def intersects(self, other: "Rect") -> bool:
        return (
            self.x < other.right
            and other.x < self.right
            and self.y < other.bottom
            and other.y < self.bottom
        )


class HierarchyParseError(ValueError):
    """Malformed hierarchy document; message carries the offending node path."""


@dataclass
class ViewElement:
    """One node of the UI tree."""

    id: str
    class_name: str
    bounds: Rect
    clickable: bool
    text: str | None = None
    children: list = field(default_factory=list)

    def walk(self):
        """Preorder traversal of this subtree."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class ScreenRecord:
    """A parsed screen: pixels plus its element tree."""

    screen_id: str
    pixels: np.ndarray  # (H, W, 3) uint8
    root: ViewElement
    excluded_zones: list

    def elements(self) -> list:
        return list(self.root.walk())

    def find(self, element_id: str) -> ViewElement:
        for el in self.root.walk():
            if el.id == element_id:
                return el
        raise KeyError(f"no element {element_id!r} in screen {self.screen_id!r}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def default_excluded_zones(width: int, height: int,
                           top_fraction: float = DEFAULT_EXCLUDE_TOP,
                           bottom_fraction: float = DEFAULT_EXCLUDE_BOTTOM) -> list:
    """Status-bar and navigation-bar bands: top/bottom slices of the screen."""
    top = round(height * top_fraction)
    bottom = round(height * bottom_fraction)
    zones = []
    if top > 0:
        zones.append(Rect(0, 0, width, top))
    if bottom > 0:
        zones.append(Rect(0, height - bottom, width, bottom))
    return zones


def _simple_class_name(raw: str) -> str:
    name = raw.rsplit(".", 1)[-1]
    return name.rsplit("$", 1)[-1]


def _parse_bounds(value, path: str) -> Rect:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 4
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        raise HierarchyParseError(f"{path}: bounds must be [left, top, right, bottom], got {value!r}")
    left, top, right, bottom = (int(v) for v in value)
    return Rect(left, top, right - left, bottom - top)


def _parse_node(obj, path: str, parent_bounds: Rect | None) -> ViewElement | None:
    if not isinstance(obj, dict):
        raise HierarchyParseError(f"{path}: node must be an object, got {type(obj).__name__}")
    if "class" not in obj:
        raise HierarchyParseError(f"{path}: node has no class")
    if "bounds" not in obj:
        raise HierarchyParseError(f"{path}: node has no bounds")
    bounds = _parse_bounds(obj["bounds"], path)
    if bounds.w <= 0 or bounds.h <= 0:
        log.warning("dropping node %s: empty or inverted bounds %s", path, obj["bounds"])
        return None
    if parent_bounds is not None and not bounds.intersects(parent_bounds):
        log.warning("dropping node %s: bounds do not intersect parent", path)
        return None
    if "clickable" in obj:
        clickable = bool(obj["clickable"])
    else:
        log.warning("node %s missing clickable attribute, defaulting to false", path)
        clickable = False
    text = obj.get("text")
    if text is not None and not isinstance(text, str):
        raise HierarchyParseError(f"{path}: text must be a string")
    node = ViewElement(
        id=str(obj["id"]) if "id" in obj else path,
        class_name=_simple_class_name(str(obj["class"])),
        bounds=bounds,
        clickable=clickable,
        text=text,
    )
    raw_children = obj.get("children") or []
    if not isinstance(raw_children, list):
        raise HierarchyParseError(f"{path}: children must be a list")
    for i, child_obj in enumerate(raw_children):
        if child_obj is None:
            continue
        child = _parse_node(child_obj, f"{path}.{i}", bounds)
        if child is not None:
            node.children.append(child)
    return node


def parse_hierarchy(
    document,
    pixels: np.ndarray,
    screen_id: str = "screen",
    exclude_top: float = DEFAULT_EXCLUDE_TOP,
    exclude_bottom: float = DEFAULT_EXCLUDE_BOTTOM,
) -> ScreenRecord:
    """Build a :class:`ScreenRecord` from a JSON tree and its screenshot.

    ``document`` may be a parsed dict, a JSON string, or a path. A wrapper
    object with an ``activity.root`` or ``root`` key is unwrapped. Nodes with
    empty or inverted bounds are dropped with a warning; structurally
    malformed nodes raise :class:`HierarchyParseError` naming the node path.
    The screenshot dimensions must match the root bounds.
    """
    if isinstance(document, (str, Path)) and not str(document).lstrip().startswith("{"):
        document = json.loads(Path(document).read_text("utf-8"))
    elif isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise HierarchyParseError(f"root: not valid JSON ({exc})") from exc
    if not isinstance(document, dict):
        raise HierarchyParseError("root: document must be a JSON object")
    node_obj = document
    if "activity" in document and isinstance(document["activity"], dict):
        node_obj = document["activity"].get("root")
    elif "root" in document:
        node_obj = document["root"]
    root = _parse_node(node_obj, "0", None)
    if root is None:
        raise HierarchyParseError("0: root node has empty or inverted bounds")
    height, width = pixels.shape[:2]
    if (root.bounds.w, root.bounds.h) != (width, height):
        raise HierarchyParseError(
            f"0: root bounds {root.bounds.w}x{root.bounds.h} do not match "
            f"screenshot {width}x{height}"
        )
    zones = default_excluded_zones(width, height, exclude_top, exclude_bottom)
    return ScreenRecord(screen_id=screen_id, pixels=pixels, root=root, excluded_zones=zones)


# ---------------------------------------------------------------------------
# element selection
# ---------------------------------------------------------------------------


def _in_excluded_zone(element: ViewElement, zones) -> bool:
    return any(element.bounds.intersects(zone) for zone in zones)


def _sample(candidates: list, cap: int, rng: RngStream) -> list:
    """Seeded sample of up to ``cap`` elements; candidates are sorted by id
    first so the draw does not depend on tree traversal order."""
    ordered = sorted(candidates, key=lambda el: el.id)
    if len(ordered) <= cap:
        return ordered
    picks = rng.choice(len(ordered), size=cap, replace=False)
    return [ordered[i] for i in sorted(picks)]


def select_elements(
    screen: ScreenRecord,
    rng: RngStream,
    max_clickable: int = 5,
    max_nonclickable: int = 5,
) -> list:
    """Pick the elements a labeling pass would show for this screen.

    Clickable candidates are the outermost clickable ancestors reached by
    walking up from each leaf; a selected clickable container bars all of its
    descendants. Anything touching an excluded zone is skipped. Returns the
    union in document order.
    """
    # outermost clickable ancestor per leaf
    clickable_candidates: dict[str, ViewElement] = {}

    def descend(node: ViewElement, outermost: ViewElement | None):
        if outermost is None and node.clickable:
            outermost = node
        if not node.children:
            if outermost is not None:
                clickable_candidates.setdefault(outermost.id, outermost)
            return
        for child in node.children:
            descend(child, outermost)

    descend(screen.root, None)
    eligible_clickable = [
        el for el in clickable_candidates.values() if not _in_excluded_zone(el, screen.excluded_zones)
    ]
    chosen_clickable = _sample(eligible_clickable, max_clickable, rng.child("clickable"))

    barred: set[str] = set()
    for container in chosen_clickable:
        for el in container.walk():
            if el.id != container.id:
                barred.add(el.id)

    nonclickable = [
        el
        for el in screen.root.walk()
        if not el.clickable
        and el.id not in barred
        and not _in_excluded_zone(el, screen.excluded_zones)
    ]
    chosen_non = _sample(nonclickable, max_nonclickable, rng.child("nonclickable"))

    chosen_ids = {el.id for el in chosen_clickable} | {el.id for el in chosen_non}
    return [el for el in screen.root.walk() if el.id in chosen_ids]
