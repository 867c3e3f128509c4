"""Serial-arm kinematics for revolute chains described by a JSON chain file.

Forward kinematics walks origin-transform-then-joint-rotation per joint and
appends a fixed tool offset. IK is damped least squares with per-iteration
step capping and joint-limit clamping. The numeric Jacobian (central
differences) is the published operation; IK internally uses the analytic
geometric Jacobian for speed, and the tests cross-check the two.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import NotConverged, SchemaError, ValidationError
from .geometry import (
    Pose,
    Quat,
    Vec3,
    pose_from_json,
    pose_to_json,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    quat_to_rotvec,
    quat_conj,
)

JointConfig = tuple[float, ...]


@dataclass(frozen=True)
class JointSpec:
    name: str
    axis: Vec3
    origin: Pose
    limits: tuple[float, float]
    kind: str = "revolute"

    def __post_init__(self):
        ax, ay, az = self.axis
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if abs(n - 1.0) > 1e-9:
            raise ValidationError(f"joint {self.name!r} axis must be unit length")
        if not self.limits[0] < self.limits[1]:
            raise ValidationError(f"joint {self.name!r} limits must satisfy min < max")
        if self.kind != "revolute":
            raise ValidationError(
                f"joint {self.name!r}: only revolute joints are supported, got {self.kind!r}"
            )


@dataclass(frozen=True)
class KinematicChain:
    name: str
    joints: tuple[JointSpec, ...]
    link_radii: tuple[float, ...]
    ee_offset: Pose = Pose()
    camera_mount: Pose = Pose((0.0, 0.0, 0.05))

    def __post_init__(self):
        if not self.joints:
            raise ValidationError("chain needs at least one joint")
        if len(self.link_radii) != len(self.joints):
            raise ValidationError("link_radii length must equal joint count")
        if any(r <= 0 for r in self.link_radii):
            raise ValidationError("all link radii must be positive")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def check_config(self, q: JointConfig) -> None:
        if len(q) != self.n_joints:
            raise ValidationError(
                f"config length {len(q)} does not match chain {self.name!r} "
                f"with {self.n_joints} joints"
            )

    def clamp(self, q) -> JointConfig:
        return tuple(
            float(min(max(v, j.limits[0]), j.limits[1]))
            for v, j in zip(q, self.joints)
        )

    def within_limits(self, q: JointConfig) -> bool:
        return all(j.limits[0] <= v <= j.limits[1] for v, j in zip(q, self.joints))

    def random_config(self, rng: np.random.Generator) -> JointConfig:
        return tuple(
            float(rng.uniform(j.limits[0], j.limits[1])) for j in self.joints
        )


def forward_kinematics(
    chain: KinematicChain, q: JointConfig
) -> tuple[Pose, list[Pose]]:
    """End-effector pose and one frame per joint (origin after that joint)."""
    chain.check_config(q)
    px, py, pz = 0.0, 0.0, 0.0
    quat: Quat = (1.0, 0.0, 0.0, 0.0)
    frames: list[Pose] = []
    for spec, angle in zip(chain.joints, q):
        ox, oy, oz = quat_rotate(quat, spec.origin.position)
        px, py, pz = px + ox, py + oy, pz + oz
        quat = quat_mul(quat, spec.origin.quat)
        quat = quat_mul(quat, quat_from_axis_angle(spec.axis, angle))
        frames.append(Pose((px, py, pz), quat))
    ox, oy, oz = quat_rotate(quat, chain.ee_offset.position)
    ee = Pose((px + ox, py + oy, pz + oz), quat_mul(quat, chain.ee_offset.quat))
    return ee, frames


def link_segments(
    chain: KinematicChain, q: JointConfig
) -> list[tuple[Vec3, Vec3, float]]:
    """Collision capsules: (start, end, radius) per link.

    Link i spans joint frame i to frame i+1; the last link runs from the last
    joint to the tool point. The base pedestal below the first joint is not
    modeled.
    """
    ee, frames = forward_kinematics(chain, q)
    points = [f.position for f in frames] + [ee.position]
    return [
        (points[i], points[i + 1], chain.link_radii[i])
        for i in range(chain.n_joints)
    ]


def numeric_jacobian(chain: KinematicChain, q: JointConfig) -> np.ndarray:
    """6 x n end-effector Jacobian by central differences (h = 1e-6 rad).

    Rows 0-2: linear velocity, rows 3-5: angular velocity, per unit joint rate.
    """
    chain.check_config(q)
    h = 1e-6
    n = chain.n_joints
    jac = np.zeros((6, n))
    for i in range(n):
        qp = list(q)
        qm = list(q)
        qp[i] += h
        qm[i] -= h
        ee_p, _ = forward_kinematics(chain, tuple(qp))
        ee_m, _ = forward_kinematics(chain, tuple(qm))
        for r in range(3):
            jac[r, i] = (ee_p.position[r] - ee_m.position[r]) / (2.0 * h)
        dq = quat_mul(ee_p.quat, quat_conj(ee_m.quat))
        rv = quat_to_rotvec(dq)
        for r in range(3):
            jac[3 + r, i] = rv[r] / (2.0 * h)
    return jac


def analytic_jacobian(chain: KinematicChain, q: JointConfig) -> np.ndarray:
    """Geometric Jacobian for revolute joints: col i = [z_i x (p_ee - p_i); z_i]."""
    ee, frames = forward_kinematics(chain, q)
    ex, ey, ez = ee.position
    n = chain.n_joints
    jac = np.zeros((6, n))
    for i, (spec, frame) in enumerate(zip(chain.joints, frames)):
        # world axis of joint i: the frame already includes this joint's own
        # rotation, which leaves its axis unchanged
        ax, ay, az = quat_rotate(frame.quat, spec.axis)
        px, py, pz = frame.position
        rx, ry, rz = ex - px, ey - py, ez - pz
        jac[0, i] = ay * rz - az * ry
        jac[1, i] = az * rx - ax * rz
        jac[2, i] = ax * ry - ay * rx
        jac[3, i] = ax
        jac[4, i] = ay
        jac[5, i] = az
    return jac


@dataclass(frozen=True)
class IkOptions:
    pos_tol: float = 1e-3
    ang_tol: float = 1e-2
    damping: float = 0.1
    max_iters: int = 200
    step_cap: float = 0.2
    position_only: bool = False
    orientation_weight: float = 0.1  # soft orientation pull in position_only mode


def _pose_error(current: Pose, target: Pose) -> tuple[np.ndarray, float, float]:
    dp = np.array(target.position) - np.array(current.position)
    rv = quat_to_rotvec(quat_mul(target.quat, quat_conj(current.quat)))
    pos_err = float(np.linalg.norm(dp))
    ang_err = math.sqrt(rv[0] ** 2 + rv[1] ** 2 + rv[2] ** 2)
    return np.concatenate([dp, rv]), pos_err, ang_err


def solve_ik(
    chain: KinematicChain,
    target: Pose,
    seed: JointConfig,
    opts: IkOptions = IkOptions(),
) -> JointConfig:
    """Damped-least-squares IK; raises NotConverged with the residual.

    Each iteration solves dq = J^T (J J^T + lambda^2 I)^-1 e, caps the step at
    opts.step_cap per joint, and clamps to joint limits, so any returned
    config satisfies the limits exactly.
    """
    chain.check_config(seed)
    q = chain.clamp(seed)
    lam2 = opts.damping * opts.damping
    pos_err = ang_err = math.inf
    for _ in range(opts.max_iters):
        ee, _ = forward_kinematics(chain, q)
        err, pos_err, ang_err = _pose_error(ee, target)
        if pos_err < opts.pos_tol and (opts.position_only or ang_err < opts.ang_tol):
            return q
        jac = analytic_jacobian(chain, q)
        if opts.position_only:
            w = opts.orientation_weight
            jac = np.vstack([jac[:3], w * jac[3:]])
            err = np.concatenate([err[:3], w * err[3:]])
        jjt = jac @ jac.T + lam2 * np.eye(jac.shape[0])
        dq = jac.T @ np.linalg.solve(jjt, err)
        step = np.clip(dq, -opts.step_cap, opts.step_cap)
        q = chain.clamp(tuple(v + d for v, d in zip(q, step)))
    raise NotConverged(pos_err, ang_err, opts.max_iters)


def solve_ik_restarts(
    chain: KinematicChain,
    target: Pose,
    seed: JointConfig,
    rng: np.random.Generator,
    opts: IkOptions = IkOptions(),
    attempts: int = 12,
    jitter: float = 0.4,
) -> JointConfig:
    """solve_ik with seeded random restarts around (and beyond) the seed."""
    last: NotConverged | None = None
    for attempt in range(attempts):
        if attempt == 0:
            start = seed
        elif attempt < attempts // 2:
            start = chain.clamp(
                tuple(v + float(d) for v, d in zip(seed, rng.uniform(-jitter, jitter, chain.n_joints)))
            )
        else:
            start = chain.random_config(rng)
        try:
            return solve_ik(chain, target, start, opts)
        except NotConverged as exc:
            last = exc
    assert last is not None
    raise last


# --- chain files -------------------------------------------------------------

def chain_from_json(doc: dict) -> KinematicChain:
    try:
        joints = tuple(
            JointSpec(
                name=j["name"],
                axis=tuple(float(c) for c in j["axis"]),
                origin=pose_from_json(j["origin"]),
                limits=(float(j["limits"][0]), float(j["limits"][1])),
                kind=j.get("kind", "revolute"),
            )
            for j in doc["joints"]
        )
        return KinematicChain(
            name=doc["name"],
            joints=joints,
            link_radii=tuple(float(r) for r in doc["link_radii"]),
            ee_offset=pose_from_json(doc["ee_offset"]),
            camera_mount=pose_from_json(doc["camera_mount"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"bad chain document: {exc!r}") from exc


def chain_to_json(chain: KinematicChain) -> dict:
    return {
        "name": chain.name,
        "joints": [
            {
                "name": j.name,
                "axis": list(j.axis),
                "origin": pose_to_json(j.origin),
                "limits": list(j.limits),
                "kind": j.kind,
            }
            for j in chain.joints
        ],
        "link_radii": list(chain.link_radii),
        "ee_offset": pose_to_json(chain.ee_offset),
        "camera_mount": pose_to_json(chain.camera_mount),
    }


def load_chain_file(path: str) -> KinematicChain:
    with open(path, encoding="utf-8") as fh:
        return chain_from_json(json.load(fh))


def load_builtin_chain(name: str) -> KinematicChain:
    """Chains shipped with the package: 'planar3' and 'arm7'."""
    ref = resources.files("armtwin.data.chains").joinpath(f"{name}.json")
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no built-in chain named {name!r}") from None
    return chain_from_json(json.loads(text))
