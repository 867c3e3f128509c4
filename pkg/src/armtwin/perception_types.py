"""Camera and detection value types, shared by world files and the sensor."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SchemaError, ValidationError
from .geometry import Pose, Vec3, pose_from_json, pose_to_json


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera. pose maps camera frame to world; +z is the optical axis."""

    id: str
    pose: Pose
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("camera focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("camera principal point must lie inside the image")


def camera_from_json(doc: dict, camera_id: str | None = None) -> CameraModel:
    try:
        return CameraModel(
            id=camera_id if camera_id is not None else doc["id"],
            pose=pose_from_json(doc["pose"]),
            fx=float(doc["fx"]),
            fy=float(doc["fy"]),
            cx=float(doc["cx"]),
            cy=float(doc["cy"]),
            width=int(doc["width"]),
            height=int(doc["height"]),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad camera document: {exc!r}") from exc


def camera_to_json(cam: CameraModel) -> dict:
    return {
        "id": cam.id,
        "pose": pose_to_json(cam.pose),
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
    }


@dataclass(frozen=True)
class PerceptionConfig:
    p_miss: float = 0.05
    pos_sigma: float = 0.005
    size_sigma: float = 0.05
    tau_occ: float = 0.5
    forced_miss: frozenset[tuple[str, str]] = frozenset()  # (object id, camera id)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_miss <= 1.0 or not 0.0 <= self.tau_occ <= 1.0:
            raise ValidationError("p_miss and tau_occ must be in [0, 1]")
        if self.pos_sigma < 0 or self.size_sigma < 0:
            raise ValidationError("noise sigmas must be non-negative")
        object.__setattr__(
            self, "forced_miss", frozenset(tuple(p) for p in self.forced_miss)
        )


def perception_config_to_json(cfg: PerceptionConfig) -> dict:
    return {
        "p_miss": cfg.p_miss,
        "pos_sigma": cfg.pos_sigma,
        "size_sigma": cfg.size_sigma,
        "tau_occ": cfg.tau_occ,
        "forced_miss": sorted(list(p) for p in cfg.forced_miss),
        "seed": cfg.seed,
    }


def perception_config_from_json(doc: dict) -> PerceptionConfig:
    try:
        return PerceptionConfig(
            p_miss=float(doc["p_miss"]),
            pos_sigma=float(doc["pos_sigma"]),
            size_sigma=float(doc["size_sigma"]),
            tau_occ=float(doc["tau_occ"]),
            forced_miss=frozenset((p[0], p[1]) for p in doc["forced_miss"]),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"bad perception config: {exc!r}") from exc


@dataclass(frozen=True)
class Detection:
    category: str
    position: Vec3  # world frame, noisy
    est_size: Vec3  # full extents (2 * half_extents), noisy
    confidence: float
    camera: str

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "est_size", tuple(float(c) for c in self.est_size))
        if any(s <= 0 for s in self.est_size):
            raise ValidationError("detection est_size components must be positive")


@dataclass(frozen=True)
class DetectionSet:
    items: tuple[Detection, ...]
    camera: str
    robot_config: tuple[float, ...]
    seq: int
    stamp_ms: int
