"""The robot's believed scene: built from detections, corrected by the operator.

Operator edits win over perception: any user-added or user-moved object is
pinned, and later detections may refresh its last_seen stamp but never its
pose. All mutations return new scenes with the revision counter bumped.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

from .errors import OutsideWorkspace, UnknownId
from .geometry import Pose, Vec3, pose_from_json, pose_to_json
from .perception_types import DetectionSet
from .world import GroundTruthWorld, Workspace

ASSOCIATION_GATE_M = 0.05  # detection-to-belief association radius
MATCH_CAP_M = 0.15  # belief-to-truth matching cap for diffs


@dataclass(frozen=True)
class BeliefObject:
    id: str
    category: str
    pose: Pose
    half_extents: Vec3
    provenance: str  # "detected" | "user_added"
    last_seen: int | None = None
    pinned: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "half_extents", tuple(float(c) for c in self.half_extents)
        )
        if self.provenance not in ("detected", "user_added"):
            raise ValueError(f"bad provenance {self.provenance!r}")
        # user_added if and only if pinned... except detected objects that the
        # operator moved, which flip provenance to user_added and pin together
        if (self.provenance == "user_added") != self.pinned:
            raise ValueError("user_added objects must be pinned and vice versa")


@dataclass(frozen=True)
class BeliefScene:
    objects: tuple[BeliefObject, ...] = ()
    revision: int = 0

    def get(self, object_id: str) -> BeliefObject | None:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None


@dataclass(frozen=True)
class BeliefDiff:
    missed_ids: tuple[str, ...]
    spurious_ids: tuple[str, ...]
    placement_errors: dict[str, float]  # truth id -> center distance, matched pairs

    @property
    def missed(self) -> int:
        return len(self.missed_ids)

    @property
    def spurious(self) -> int:
        return len(self.spurious_ids)


def _dist(a, b) -> float:
    return math.dist(a, b)


def integrate_detections(scene: BeliefScene, ds: DetectionSet) -> BeliefScene:
    """Associate detections to believed objects; mint new ones when unmatched.

    Nearest same-category object within the gate wins; pinned objects only
    refresh last_seen. Revision bumps once iff anything changed.
    """
    objects = list(scene.objects)
    changed = False
    for index, det in enumerate(ds.items):
        best_i = None
        best_d = ASSOCIATION_GATE_M
        for i, obj in enumerate(objects):
            if obj.category != det.category:
                continue
            d = _dist(obj.pose.position, det.position)
            if d < best_d:
                best_d = d
                best_i = i
        if best_i is None:
            objects.append(
                BeliefObject(
                    id=f"det-{ds.camera}-{ds.seq}-{index}",
                    category=det.category,
                    pose=Pose(det.position),
                    half_extents=tuple(s / 2.0 for s in det.est_size),
                    provenance="detected",
                    last_seen=ds.stamp_ms,
                )
            )
            changed = True
            continue
        obj = objects[best_i]
        if obj.pinned:
            if obj.last_seen != ds.stamp_ms:
                objects[best_i] = replace(obj, last_seen=ds.stamp_ms)
                changed = True
        else:
            updated = replace(
                obj,
                pose=Pose(det.position, obj.pose.quat),
                half_extents=tuple(s / 2.0 for s in det.est_size),
                last_seen=ds.stamp_ms,
            )
            if updated != obj:
                objects[best_i] = updated
                changed = True
    if not changed:
        return scene
    return BeliefScene(tuple(objects), scene.revision + 1)


def add_user_object(
    scene: BeliefScene,
    category: str,
    pose: Pose,
    half_extents,
    workspace: Workspace,
    object_id: str | None = None,
) -> BeliefScene:
    if not workspace.contains(pose.position):
        raise OutsideWorkspace(f"cannot add object at {pose.position}: outside workspace")
    new_id = object_id if object_id is not None else f"user-{scene.revision + 1}"
    if scene.get(new_id) is not None:
        raise UnknownId(f"belief object id {new_id!r} already in use")
    obj = BeliefObject(
        id=new_id,
        category=category,
        pose=pose,
        half_extents=tuple(half_extents),
        provenance="user_added",
        pinned=True,
    )
    return BeliefScene(scene.objects + (obj,), scene.revision + 1)


def move_object(scene: BeliefScene, object_id: str, new_pose: Pose) -> BeliefScene:
    """Operator override: moving any object pins it against future detections."""
    target = scene.get(object_id)
    if target is None:
        raise UnknownId(f"no belief object {object_id!r}")
    moved = replace(target, pose=new_pose, provenance="user_added", pinned=True)
    objects = tuple(moved if o.id == object_id else o for o in scene.objects)
    return BeliefScene(objects, scene.revision + 1)


def remove_object(scene: BeliefScene, object_id: str) -> BeliefScene:
    if scene.get(object_id) is None:
        raise UnknownId(f"no belief object {object_id!r}")
    objects = tuple(o for o in scene.objects if o.id != object_id)
    return BeliefScene(objects, scene.revision + 1)


def belief_diff(scene: BeliefScene, world: GroundTruthWorld) -> BeliefDiff:
    """Greedy one-to-one matching by category, then ascending center distance."""
    pairs = []
    for t in world.objects:
        for b in scene.objects:
            if b.category != t.category:
                continue
            d = _dist(t.pose.position, b.pose.position)
            if d <= MATCH_CAP_M:
                pairs.append((d, t.id, b.id))
    pairs.sort()
    matched_truth: dict[str, float] = {}
    used_belief = set()
    for d, tid, bid in pairs:
        if tid in matched_truth or bid in used_belief:
            continue
        matched_truth[tid] = d
        used_belief.add(bid)
    missed = tuple(t.id for t in world.objects if t.id not in matched_truth)
    spurious = tuple(b.id for b in scene.objects if b.id not in used_belief)
    return BeliefDiff(missed, spurious, matched_truth)


# --- serialization ---------------------------------------------------------

def belief_object_to_json(obj: BeliefObject) -> dict:
    return {
        "id": obj.id,
        "category": obj.category,
        "pose": pose_to_json(obj.pose),
        "half_extents": list(obj.half_extents),
        "provenance": obj.provenance,
        "last_seen": obj.last_seen,
        "pinned": obj.pinned,
    }


def belief_object_from_json(doc: dict) -> BeliefObject:
    return BeliefObject(
        id=doc["id"],
        category=doc["category"],
        pose=pose_from_json(doc["pose"]),
        half_extents=tuple(doc["half_extents"]),
        provenance=doc["provenance"],
        last_seen=doc["last_seen"],
        pinned=bool(doc["pinned"]),
    )


def scene_to_json(scene: BeliefScene) -> dict:
    return {
        "revision": scene.revision,
        "objects": [belief_object_to_json(o) for o in scene.objects],
    }


def scene_from_json(doc: dict) -> BeliefScene:
    return BeliefScene(
        objects=tuple(belief_object_from_json(o) for o in doc["objects"]),
        revision=int(doc["revision"]),
    )


def scene_digest(scene: BeliefScene) -> str:
    """64-bit digest over the canonical scene form, object order normalized."""
    doc = scene_to_json(scene)
    doc["objects"] = sorted(doc["objects"], key=lambda o: o["id"])
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canon.encode("utf-8"), digest_size=8).hexdigest()
