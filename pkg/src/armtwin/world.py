"""Ground-truth tabletop world: the environment the robot actually acts in.

Worlds are immutable values after load; scenario mutation happens by
spawning into copies. Objects are oriented boxes (pose + half-extents),
which keeps occlusion and collision queries analytic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from importlib import resources

from .errors import DuplicateId, OutsideWorkspace, SchemaError, ValidationError
from .geometry import Pose, Vec3, pose_from_json, pose_to_json
from .perception_types import CameraModel, camera_from_json, camera_to_json

BUILTIN_CATEGORIES = ("cup", "box", "bottle", "ball", "book")


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    category: str
    pose: Pose
    half_extents: Vec3
    graspable: bool = True

    def __post_init__(self):
        object.__setattr__(
            self, "half_extents", tuple(float(c) for c in self.half_extents)
        )
        if len(self.half_extents) != 3 or any(h <= 0 for h in self.half_extents):
            raise ValidationError(
                f"object {self.id!r}: half_extents must be 3 positive components"
            )


@dataclass(frozen=True)
class Workspace:
    min: Vec3
    max: Vec3

    def __post_init__(self):
        object.__setattr__(self, "min", tuple(float(c) for c in self.min))
        object.__setattr__(self, "max", tuple(float(c) for c in self.max))
        if any(lo >= hi for lo, hi in zip(self.min, self.max)):
            raise ValidationError("workspace min must be strictly below max")

    def contains(self, point) -> bool:
        return all(lo <= p <= hi for lo, p, hi in zip(self.min, point, self.max))


@dataclass(frozen=True)
class GroundTruthWorld:
    objects: tuple[ObjectInstance, ...]
    workspace: Workspace
    table_height: float
    chain_name: str
    robot_base: Pose
    main_camera: CameraModel

    def __post_init__(self):
        seen = set()
        for obj in self.objects:
            if obj.id in seen:
                raise DuplicateId(f"duplicate object id {obj.id!r}")
            seen.add(obj.id)
            if not self.workspace.contains(obj.pose.position):
                raise OutsideWorkspace(
                    f"object {obj.id!r} at {obj.pose.position} is outside the workspace"
                )

    def get(self, object_id: str) -> ObjectInstance | None:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None

    def categories(self) -> list[str]:
        found = {o.category for o in self.objects}
        return sorted(found.union(BUILTIN_CATEGORIES))


def world_from_json(doc: dict) -> GroundTruthWorld:
    try:
        ws = Workspace(tuple(doc["workspace"]["min"]), tuple(doc["workspace"]["max"]))
        objects = tuple(
            ObjectInstance(
                id=o["id"],
                category=o["category"],
                pose=pose_from_json(o["pose"]),
                half_extents=tuple(o["half_extents"]),
                graspable=bool(o.get("graspable", True)),
            )
            for o in doc["objects"]
        )
        return GroundTruthWorld(
            objects=objects,
            workspace=ws,
            table_height=float(doc["table_height"]),
            chain_name=doc["chain"],
            robot_base=pose_from_json(doc["robot_base"]),
            main_camera=camera_from_json(doc["main_camera"], camera_id="main"),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"bad world document: {exc!r}") from exc


def world_to_json(world: GroundTruthWorld) -> dict:
    return {
        "workspace": {"min": list(world.workspace.min), "max": list(world.workspace.max)},
        "table_height": world.table_height,
        "chain": world.chain_name,
        "robot_base": pose_to_json(world.robot_base),
        "main_camera": camera_to_json(world.main_camera),
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "pose": pose_to_json(o.pose),
                "half_extents": list(o.half_extents),
                "graspable": o.graspable,
            }
            for o in world.objects
        ],
    }


def load_world(text: str) -> GroundTruthWorld:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"world document is not valid JSON: {exc}") from exc
    return world_from_json(doc)


def load_world_file(path: str) -> GroundTruthWorld:
    with open(path, encoding="utf-8") as fh:
        return load_world(fh.read())


def load_builtin_world(name: str) -> GroundTruthWorld:
    ref = resources.files("armtwin.data.worlds").joinpath(f"{name}.json")
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no built-in world named {name!r}") from None
    return load_world(text)


def world_hash(world: GroundTruthWorld) -> str:
    """64-bit digest, order-independent over the object set."""
    doc = world_to_json(world)
    doc["objects"] = sorted(doc["objects"], key=lambda o: o["id"])
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canon.encode("utf-8"), digest_size=8).hexdigest()


def spawn_object(world: GroundTruthWorld, obj: ObjectInstance) -> GroundTruthWorld:
    """New world with obj added; the input world is untouched."""
    if world.get(obj.id) is not None:
        raise DuplicateId(f"object id {obj.id!r} already present")
    if not world.workspace.contains(obj.pose.position):
        raise OutsideWorkspace(f"object {obj.id!r} would land outside the workspace")
    return replace(world, objects=world.objects + (obj,))


def move_truth_object(
    world: GroundTruthWorld, object_id: str, pose: Pose
) -> GroundTruthWorld:
    """Used by execution to settle a placed object; value semantics."""
    target = world.get(object_id)
    if target is None:
        raise ValidationError(f"no object {object_id!r} in world")
    moved = tuple(
        replace(o, pose=pose) if o.id == object_id else o for o in world.objects
    )
    return replace(world, objects=moved)
