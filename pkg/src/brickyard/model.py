"""Brick, blueprint and storage domain types.

Wall frame: X along the wall left to right, Z up, origin at the left end of
layer 0. Bricks are boxes whose long axis is their local X.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .errors import MalformedBlueprint, NonAxisAligned
from .geometry import PlanarPose

BRICK_SECTION = 0.20
LENGTH_TOL = 1e-6


class BrickType(Enum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"
    ORANGE = "orange"

    @property
    def tag(self) -> str:
        return self.value

    @property
    def length(self) -> float:
        return _LENGTHS[self]

    @property
    def mass(self) -> float:
        return _MASSES[self]

    @property
    def cross_section(self) -> tuple[float, float]:
        return (BRICK_SECTION, BRICK_SECTION)

    @property
    def size(self) -> tuple[float, float, float]:
        return (self.length, BRICK_SECTION, BRICK_SECTION)

    @classmethod
    def parse(cls, v) -> BrickType:
        if isinstance(v, BrickType):
            return v
        return cls(str(v).lower())


_LENGTHS = {BrickType.RED: 0.30, BrickType.GREEN: 0.60, BrickType.BLUE: 1.20, BrickType.ORANGE: 1.80}
_MASSES = {BrickType.RED: 1.0, BrickType.GREEN: 1.5, BrickType.BLUE: 1.5, BrickType.ORANGE: 2.0}


@dataclass(frozen=True)
class Brick:
    """A brick resting at height ``z`` (bottom face) in a named parent frame."""

    id: int
    type: BrickType
    pose: PlanarPose = field(default_factory=PlanarPose)
    frame: str = "world"
    z: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.pose.yaw):
            raise ValueError("brick yaw must be finite")

    @property
    def size(self) -> tuple[float, float, float]:
        return self.type.size

    @property
    def center_z(self) -> float:
        return self.z + BRICK_SECTION / 2

    def moved(self, pose: PlanarPose | None = None, frame: str | None = None, z: float | None = None) -> Brick:
        return Brick(
            self.id,
            self.type,
            self.pose if pose is None else pose,
            self.frame if frame is None else frame,
            self.z if z is None else z,
        )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "type": self.type.tag,
            "pose": self.pose.to_list(),
            "frame": self.frame,
            "z": self.z,
        }

    @classmethod
    def from_json(cls, d) -> Brick:
        return cls(int(d["id"]), BrickType.parse(d["type"]), PlanarPose.from_list(d["pose"]),
                   d.get("frame", "world"), float(d.get("z", 0.0)))


def brick_footprint(b: Brick, tol: float = 1e-3) -> tuple[float, float]:
    """[x_min, x_max] of an axis-aligned brick along its parent X axis."""
    if abs(b.pose.yaw) > tol:
        raise NonAxisAligned(f"brick {b.id} yaw {b.pose.yaw:.4f} rad")
    half = b.type.length / 2
    return (b.pose.x - half, b.pose.x + half)


@dataclass(frozen=True)
class Blueprint:
    layers: tuple[tuple[BrickType, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "layers", tuple(tuple(BrickType.parse(t) for t in layer) for layer in self.layers)
        )

    @property
    def n_bricks(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def layer_length(self, k: int) -> float:
        return sum(t.length for t in self.layers[k])

    @property
    def width(self) -> float:
        return self.layer_length(0) if self.layers else 0.0

    def counts(self) -> dict[BrickType, int]:
        out: dict[BrickType, int] = {}
        for layer in self.layers:
            for t in layer:
                out[t] = out.get(t, 0) + 1
        return out

    def validate(self) -> None:
        if not self.layers or not self.layers[0]:
            raise MalformedBlueprint("blueprint has no bricks in layer 0")
        w = self.layer_length(0)
        for k in range(1, len(self.layers)):
            if abs(self.layer_length(k) - w) > LENGTH_TOL:
                raise MalformedBlueprint(
                    f"layer {k} length {self.layer_length(k):.3f} != layer 0 length {w:.3f}"
                )

    def to_json(self) -> dict:
        return {"layers": [[t.tag for t in layer] for layer in self.layers]}

    @classmethod
    def from_json(cls, d) -> Blueprint:
        return cls(tuple(tuple(layer) for layer in d["layers"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def blueprint_brick_centers(bp: Blueprint) -> list[tuple[int, int, float, BrickType]]:
    """(layer, index, x_center, type), layer-major and left to right."""
    bp.validate()
    out = []
    for k, layer in enumerate(bp.layers):
        x = 0.0
        for i, t in enumerate(layer):
            out.append((k, i, x + t.length / 2, t))
            x += t.length
    return out


def blueprint_bricks(bp: Blueprint, first_id: int = 0, x_offset: float = 0.0) -> list[Brick]:
    """Target bricks in the wall frame, ids assigned in center order."""
    return [
        Brick(first_id + n, t, PlanarPose(x_offset + x, 0.0, 0.0), "wall", k * BRICK_SECTION)
        for n, (k, _, x, t) in enumerate(blueprint_brick_centers(bp))
    ]


@dataclass(frozen=True)
class StorageRack:
    """Three sliding compartments, each dedicated to one small-brick type.

    Oranges span bins, so they are tracked as a rack-level count.
    """

    compartments: int = 3
    bins_per_compartment: int = 5
    per_bin_stack_limit: dict = field(
        default_factory=lambda: {BrickType.RED: 4, BrickType.GREEN: 2, BrickType.BLUE: 1}
    )
    rack_orange_capacity: int = 10
    compartment_types: tuple = (BrickType.RED, BrickType.GREEN, BrickType.BLUE)

    @property
    def n_bins(self) -> int:
        return self.compartments * self.bins_per_compartment

    def capacity(self, t: BrickType) -> int:
        if t is BrickType.ORANGE:
            return self.rack_orange_capacity
        n_comp = sum(1 for ct in self.compartment_types if ct is t)
        return n_comp * self.bins_per_compartment * self.per_bin_stack_limit[t]

    def admits(self, counts: dict) -> bool:
        """Whether a load fits: either oranges only, or small bricks only."""
        counts = {BrickType.parse(t): c for t, c in counts.items() if c}
        if any(c < 0 for c in counts.values()):
            return False
        if BrickType.ORANGE in counts and len(counts) > 1:
            return False
        return all(c <= self.capacity(t) for t, c in counts.items())


def count_types(types: Iterable) -> dict[BrickType, int]:
    out: dict[BrickType, int] = {}
    for t in types:
        t = BrickType.parse(t)
        out[t] = out.get(t, 0) + 1
    return out
