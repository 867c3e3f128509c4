"""Wire protocol: compact canonical JSON envelopes.

One envelope per frame (WebSocket text frame or TCP line):
`{"type":...,"seq":...,"stamp_ms":...,"payload":{...}}` with fixed field
order and no insignificant whitespace. Detection items travel as positional
arrays to keep a 10-object detection message under the 2 KiB budget.
decode() never raises anything but DecodeError on hostile input.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

from .belief import BeliefScene, scene_from_json, scene_to_json
from .errors import DecodeError
from .geometry import Pose, pose_from_json, pose_to_json
from .perception_types import Detection, DetectionSet
from .planner import Trajectory, trajectory_from_json, trajectory_to_json

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class Envelope:
    type: str
    seq: int
    stamp_ms: int
    payload: object


# --- payload variants without a domain type of their own -------------------

@dataclass(frozen=True)
class SceneState:
    scene: BeliefScene
    phase: str
    digest: str


@dataclass(frozen=True)
class Passthrough:
    """Empty fields mean 'please render one'; filled fields carry the PGM."""

    width: int | None = None
    height: int | None = None
    data_b64: str | None = None

    @property
    def is_request(self) -> bool:
        return self.data_b64 is None

    def pgm_bytes(self) -> bytes:
        if self.data_b64 is None:
            raise ValueError("passthrough request carries no image")
        return base64.b64decode(self.data_b64)


@dataclass(frozen=True)
class AddObject:
    category: str
    pose: Pose
    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class MoveObject:
    id: str
    pose: Pose


@dataclass(frozen=True)
class RemoveObject:
    id: str


@dataclass(frozen=True)
class MoveArm:
    q: tuple[float, ...]


@dataclass(frozen=True)
class SelectAndPlan:
    target_object_id: str
    place_pose: Pose
    pregrasp_offset: float
    seed: int


@dataclass(frozen=True)
class EditWaypoint:
    index: int
    position: tuple[float, float, float]


@dataclass(frozen=True)
class ResetVirtual:
    pass


@dataclass(frozen=True)
class Execute:
    pass


@dataclass(frozen=True)
class ExecResult:
    outcome: str
    duration_steps: int
    collided_object_id: str | None
    collision_segment: int | None
    collision_config: tuple[float, ...] | None
    world_digest: str


@dataclass(frozen=True)
class ErrorInfo:
    code: str
    text: str


@dataclass(frozen=True)
class TrialControl:
    action: str  # "start" | "stop"
    trial_index: int
    forced_miss_object: str | None = None
    interface_label: str | None = None


# --- per-type encoders/decoders ---------------------------------------------

def _enc_detection_set(ds: DetectionSet) -> dict:
    return {
        "camera": ds.camera,
        "robot_config": list(ds.robot_config),
        "seq": ds.seq,
        "stamp_ms": ds.stamp_ms,
        "items": [
            [d.category, list(d.position), list(d.est_size), d.confidence]
            for d in ds.items
        ],
    }


def _dec_detection_set(doc: dict) -> DetectionSet:
    camera = doc["camera"]
    return DetectionSet(
        items=tuple(
            Detection(
                category=item[0],
                position=tuple(item[1]),
                est_size=tuple(item[2]),
                confidence=float(item[3]),
                camera=camera,
            )
            for item in doc["items"]
        ),
        camera=camera,
        robot_config=tuple(float(v) for v in doc["robot_config"]),
        seq=int(doc["seq"]),
        stamp_ms=int(doc["stamp_ms"]),
    )


def _enc_scene_state(s: SceneState) -> dict:
    doc = scene_to_json(s.scene)
    return {"revision": doc["revision"], "objects": doc["objects"],
            "phase": s.phase, "digest": s.digest}


def _dec_scene_state(doc: dict) -> SceneState:
    return SceneState(
        scene=scene_from_json(doc), phase=doc["phase"], digest=doc["digest"]
    )


def _enc_passthrough(p: Passthrough) -> dict:
    if p.is_request:
        return {}
    return {"width": p.width, "height": p.height, "data": p.data_b64}


def _dec_passthrough(doc: dict) -> Passthrough:
    if not doc:
        return Passthrough()
    return Passthrough(
        width=int(doc["width"]), height=int(doc["height"]), data_b64=doc["data"]
    )


_REGISTRY: dict[str, tuple[type, object, object]] = {
    "detection_set": (DetectionSet, _enc_detection_set, _dec_detection_set),
    "scene_state": (SceneState, _enc_scene_state, _dec_scene_state),
    "passthrough": (Passthrough, _enc_passthrough, _dec_passthrough),
    "add_object": (
        AddObject,
        lambda p: {"category": p.category, "pose": pose_to_json(p.pose),
                   "half_extents": list(p.half_extents)},
        lambda d: AddObject(d["category"], pose_from_json(d["pose"]),
                            tuple(float(v) for v in d["half_extents"])),
    ),
    "move_object": (
        MoveObject,
        lambda p: {"id": p.id, "pose": pose_to_json(p.pose)},
        lambda d: MoveObject(d["id"], pose_from_json(d["pose"])),
    ),
    "remove_object": (
        RemoveObject,
        lambda p: {"id": p.id},
        lambda d: RemoveObject(d["id"]),
    ),
    "move_arm": (
        MoveArm,
        lambda p: {"q": list(p.q)},
        lambda d: MoveArm(tuple(float(v) for v in d["q"])),
    ),
    "select_and_plan": (
        SelectAndPlan,
        lambda p: {"target_object_id": p.target_object_id,
                   "place_pose": pose_to_json(p.place_pose),
                   "pregrasp_offset": p.pregrasp_offset, "seed": p.seed},
        lambda d: SelectAndPlan(d["target_object_id"],
                                pose_from_json(d["place_pose"]),
                                float(d["pregrasp_offset"]), int(d["seed"])),
    ),
    "trajectory": (Trajectory, trajectory_to_json, trajectory_from_json),
    "edit_waypoint": (
        EditWaypoint,
        lambda p: {"index": p.index, "position": list(p.position)},
        lambda d: EditWaypoint(int(d["index"]),
                               tuple(float(v) for v in d["position"])),
    ),
    "reset_virtual": (ResetVirtual, lambda p: {}, lambda d: ResetVirtual()),
    "execute": (Execute, lambda p: {}, lambda d: Execute()),
    "execution_result": (
        ExecResult,
        lambda p: {"outcome": p.outcome, "duration_steps": p.duration_steps,
                   "collided_object_id": p.collided_object_id,
                   "collision_segment": p.collision_segment,
                   "collision_config": (None if p.collision_config is None
                                        else list(p.collision_config)),
                   "world_digest": p.world_digest},
        lambda d: ExecResult(
            d["outcome"], int(d["duration_steps"]), d["collided_object_id"],
            d["collision_segment"],
            None if d["collision_config"] is None
            else tuple(float(v) for v in d["collision_config"]),
            d["world_digest"]),
    ),
    "error": (
        ErrorInfo,
        lambda p: {"code": p.code, "text": p.text},
        lambda d: ErrorInfo(d["code"], d["text"]),
    ),
    "trial_control": (
        TrialControl,
        lambda p: {"action": p.action, "trial_index": p.trial_index,
                   "forced_miss_object": p.forced_miss_object,
                   "interface_label": p.interface_label},
        lambda d: TrialControl(d["action"], int(d["trial_index"]),
                               d["forced_miss_object"], d["interface_label"]),
    ),
}

_TAG_BY_CLASS = {cls: tag for tag, (cls, _, _) in _REGISTRY.items()}


def tag_of(payload: object) -> str:
    tag = _TAG_BY_CLASS.get(type(payload))
    if tag is None:
        raise DecodeError(f"no wire tag for payload type {type(payload).__name__}")
    return tag


def make_envelope(payload: object, seq: int, stamp_ms: int) -> Envelope:
    return Envelope(type=tag_of(payload), seq=seq, stamp_ms=stamp_ms, payload=payload)


def encode(env: Envelope) -> bytes:
    entry = _REGISTRY.get(env.type)
    if entry is None:
        raise DecodeError(f"unknown envelope type {env.type!r}")
    _, enc, _ = entry
    doc = {
        "type": env.type,
        "seq": env.seq,
        "stamp_ms": env.stamp_ms,
        "payload": enc(env.payload),
    }
    return json.dumps(doc, separators=(",", ":"), allow_nan=False).encode("utf-8")


def decode(data: bytes | str) -> Envelope:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DecodeError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DecodeError("frame must be a JSON object")
    try:
        tag = doc["type"]
        seq = doc["seq"]
        stamp = doc["stamp_ms"]
        payload_doc = doc["payload"]
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"missing envelope field: {exc!r}") from exc
    entry = _REGISTRY.get(tag)
    if entry is None:
        raise DecodeError(f"unknown envelope type {tag!r}")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise DecodeError("seq must be a non-negative integer")
    if not isinstance(stamp, int) or isinstance(stamp, bool) or stamp < 0:
        raise DecodeError("stamp_ms must be a non-negative integer")
    _, _, dec = entry
    try:
        payload = dec(payload_doc)
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"bad {tag} payload: {exc!r}") from exc
    return Envelope(type=tag, seq=seq, stamp_ms=stamp, payload=payload)
