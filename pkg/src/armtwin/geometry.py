"""Rigid-body math: unit quaternions and poses.

Conventions: quaternions are (w, x, y, z), positions are meters, and a Pose
maps points from its local frame into its parent frame. Vectors are stored
as plain float tuples so poses stay hashable and cheap in kinematics loops;
callers that want numpy views convert at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

IDENTITY_QUAT: Quat = (1.0, 0.0, 0.0, 0.0)


def quat_normalize(q) -> Quat:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion cannot be normalized")
    return (w / n, x / n, y / n, z / n)


def quat_mul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q: Quat) -> Quat:
    w, x, y, z = q
    return (w, -x, -y, -z)


def quat_rotate(q: Quat, v) -> Vec3:
    """Rotate vector v by quaternion q (q v q*)."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * (q_vec x v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w*t + q_vec x t
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_from_axis_angle(axis, angle: float) -> Quat:
    ax, ay, az = axis
    half = 0.5 * angle
    s = math.sin(half)
    return (math.cos(half), ax * s, ay * s, az * s)


def quat_angle(q: Quat) -> float:
    """Rotation angle of q in [0, pi]."""
    w = min(1.0, max(-1.0, q[0]))
    return 2.0 * math.acos(abs(w))


def quat_angle_between(a: Quat, b: Quat) -> float:
    """Angle of the relative rotation taking a to b."""
    return quat_angle(quat_mul(b, quat_conj(a)))


def quat_to_rotvec(q: Quat) -> Vec3:
    """Rotation vector (axis * angle) of q; zero vector for identity."""
    w, x, y, z = q
    if w < 0.0:  # take the short way around
        w, x, y, z = -w, -x, -y, -z
    n = math.sqrt(x * x + y * y + z * z)
    if n < 1e-12:
        return (2.0 * x, 2.0 * y, 2.0 * z)  # small-angle: sin(t/2) ~ t/2
    angle = 2.0 * math.atan2(n, w)
    return (x / n * angle, y / n * angle, z / n * angle)


def quat_to_matrix(q: Quat) -> list[list[float]]:
    w, x, y, z = q
    return [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]


@dataclass(frozen=True)
class Pose:
    """Position + unit-quaternion orientation; quat renormalized on build."""

    position: Vec3 = (0.0, 0.0, 0.0)
    quat: Quat = IDENTITY_QUAT

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "quat", quat_normalize(self.quat))
        if len(self.position) != 3:
            raise ValueError("position must have 3 components")

    def apply(self, point) -> Vec3:
        """Map a point from this pose's frame into the parent frame."""
        rx, ry, rz = quat_rotate(self.quat, point)
        px, py, pz = self.position
        return (px + rx, py + ry, pz + rz)

    def inverse(self) -> Pose:
        qi = quat_conj(self.quat)
        ix, iy, iz = quat_rotate(qi, self.position)
        return Pose((-ix, -iy, -iz), qi)

    def compose(self, other: Pose) -> Pose:
        return Pose(self.apply(other.position), quat_mul(self.quat, other.quat))


IDENTITY_POSE = Pose()


def compose_pose(a: Pose, b: Pose) -> Pose:
    """a ∘ b: apply b in a's frame."""
    return a.compose(b)


def pose_from_json(doc: dict) -> Pose:
    from .errors import SchemaError

    if not isinstance(doc, dict) or "pos" not in doc or "quat" not in doc:
        raise SchemaError(f"pose document needs 'pos' and 'quat': {doc!r}")
    pos = doc["pos"]
    quat = doc["quat"]
    if len(pos) != 3 or len(quat) != 4:
        raise SchemaError("pose 'pos' must be length 3 and 'quat' length 4")
    return Pose(tuple(float(c) for c in pos), tuple(float(c) for c in quat))


def pose_to_json(p: Pose) -> dict:
    return {"pos": list(p.position), "quat": list(p.quat)}
