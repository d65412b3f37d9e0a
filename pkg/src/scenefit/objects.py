"""Object catalog: box-composite furniture specs and JSON catalog I/O.

Object frames have z=0 at the object bottom. Sittable objects place the front
edge of the sitting surface at x=0 with the body of the object extending into
-x, so a placement tx puts the perch point at tx.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass
class ObjectSpec:
    object_id: int
    name: str
    category: str
    boxes: list[tuple[float, float, float, float]]  # (cx, cz, hw, hh)

    def __post_init__(self):
        if not self.boxes:
            raise ValueError(f"object {self.name}: needs at least one box")
        for (cx, cz, hw, hh) in self.boxes:
            if hw <= 0 or hh <= 0:
                raise ValueError(f"object {self.name}: half-extents must be positive")
        bottom = min(cz - hh for (_, cz, _, hh) in self.boxes)
        if abs(bottom) > 1e-9:
            raise ValueError(f"object {self.name}: bottom face must sit at z=0, got {bottom}")

    @property
    def top_height(self) -> float:
        return max(cz + hh for (_, cz, _, hh) in self.boxes)


class ObjectSet:
    """Dense, uniquely indexed object list (index i in [0, N))."""

    def __init__(self, specs: list[ObjectSpec]):
        ids = [s.object_id for s in specs]
        if ids != list(range(len(specs))):
            raise ValueError("object ids must be dense and in order: 0..N-1")
        self.specs = list(specs)

    def __len__(self) -> int:
        return len(self.specs)

    def __getitem__(self, i: int) -> ObjectSpec:
        return self.specs[i]

    def __iter__(self):
        return iter(self.specs)


def seat_object(object_id: int, name: str, seat_height: float, depth: float = 0.22,
                back: bool = False, category: str = "chair") -> ObjectSpec:
    """A sittable object whose sitting surface spans x in [-depth, 0]."""
    hs = 0.025
    boxes = [(-depth / 2.0, seat_height - hs, depth / 2.0, hs)]
    base_h = seat_height - 2 * hs
    if base_h > 0.01:
        boxes.append((-depth / 2.0, base_h / 2.0, depth / 2.0 - 0.02, base_h / 2.0))
    if back:
        boxes.append((-depth - 0.04, seat_height + 0.22, 0.04, 0.25))
    return ObjectSpec(object_id, name, category, boxes)


def table_object(object_id: int, name: str, top_height: float = 0.74,
                 half_width: float = 0.40) -> ObjectSpec:
    top = (0.0, top_height - 0.02, half_width, 0.02)
    leg_h = (top_height - 0.04) / 2.0
    legs = [(-half_width + 0.05, leg_h, 0.025, leg_h), (half_width - 0.05, leg_h, 0.025, leg_h)]
    return ObjectSpec(object_id, name, "table", [top] + legs)


def default_catalog() -> ObjectSet:
    """Four objects: the 0.45 m chair is the correct answer for the sit demo."""
    return ObjectSet([
        seat_object(0, "footstool", 0.25, depth=0.20, category="stool"),
        seat_object(1, "chair", 0.45, depth=0.22, back=True),
        seat_object(2, "stool_high", 0.75, depth=0.20, category="stool"),
        table_object(3, "table", 0.74),
    ])


def save_catalog(objects: ObjectSet, path) -> None:
    doc = [{"id": s.object_id, "name": s.name, "category": s.category,
            "boxes": [{"cx": b[0], "cz": b[1], "hw": b[2], "hh": b[3]} for b in s.boxes]}
           for s in objects]
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def load_catalog(path) -> ObjectSet:
    with open(path) as f:
        doc = json.load(f)
    specs = []
    for rec in doc:
        for key in ("id", "name", "category", "boxes"):
            if key not in rec:
                raise ValueError(f"{path}: catalog entry missing '{key}'")
        boxes = [(b["cx"], b["cz"], b["hw"], b["hh"]) for b in rec["boxes"]]
        specs.append(ObjectSpec(rec["id"], rec["name"], rec["category"], boxes))
    return ObjectSet(specs)
