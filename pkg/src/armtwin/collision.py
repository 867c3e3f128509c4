"""Collision primitives: arm links as capsules, objects as oriented boxes.

segment_box_distance is exact: in the box frame the squared distance along
the segment is piecewise quadratic with breakpoints where the segment crosses
a slab face, so each piece is minimized in closed form. collide_config adds a
bounding-sphere reject so planner loops rarely pay for the exact test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Pose, Vec3, quat_rotate
from .kinematics import JointConfig, KinematicChain, link_segments


@dataclass(frozen=True)
class Hit:
    object_id: str
    link_index: int


def _point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> float:
    ax, ay, az = a
    dx, dy, dz = b[0] - ax, b[1] - ay, b[2] - az
    px, py, pz = p[0] - ax, p[1] - ay, p[2] - az
    dd = dx * dx + dy * dy + dz * dz
    t = 0.0 if dd == 0.0 else (px * dx + py * dy + pz * dz) / dd
    t = min(1.0, max(0.0, t))
    ex, ey, ez = px - t * dx, py - t * dy, pz - t * dz
    return math.sqrt(ex * ex + ey * ey + ez * ez)


def segment_box_distance(
    p0: Vec3, p1: Vec3, box_pose: Pose, half_extents: Vec3
) -> float:
    """Exact distance between segment [p0, p1] and an oriented box; 0 inside."""
    inv = box_pose.inverse()
    a = inv.apply(p0)
    b = inv.apply(p1)
    d = (b[0] - a[0], b[1] - a[1], b[2] - a[2])

    ts = [0.0, 1.0]
    for ai, di, h in zip(a, d, half_extents):
        if di != 0.0:
            for face in (h, -h):
                t = (face - ai) / di
                if 0.0 < t < 1.0:
                    ts.append(t)
    ts.sort()

    best = math.inf
    for ta, tb in zip(ts, ts[1:]):
        if tb - ta <= 0.0:
            continue
        tm = 0.5 * (ta + tb)
        qa = qb = qc = 0.0  # accumulated A t^2 + B t + C on this piece
        for ai, di, h in zip(a, d, half_extents):
            x = ai + tm * di
            if x > h:
                c0 = ai - h
            elif x < -h:
                c0 = ai + h
            else:
                continue
            qa += di * di
            qb += 2.0 * di * c0
            qc += c0 * c0
        if qa == 0.0 and qb == 0.0:
            best = min(best, qc)
            continue
        candidates = [ta, tb]
        if qa > 0.0:
            tv = -qb / (2.0 * qa)
            if ta < tv < tb:
                candidates.append(tv)
        for t in candidates:
            best = min(best, qa * t * t + qb * t + qc)
        if best <= 0.0:
            return 0.0
    return math.sqrt(max(0.0, best))


def boxes_overlap(
    pose_a: Pose, he_a: Vec3, pose_b: Pose, he_b: Vec3
) -> bool:
    """Oriented box vs oriented box via the separating axis theorem."""
    ra = [quat_rotate(pose_a.quat, ax) for ax in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
    rb = [quat_rotate(pose_b.quat, ax) for ax in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
    t = tuple(pb - pa for pa, pb in zip(pose_a.position, pose_b.position))

    axes = list(ra) + list(rb)
    for u in ra:
        for v in rb:
            cx = u[1] * v[2] - u[2] * v[1]
            cy = u[2] * v[0] - u[0] * v[2]
            cz = u[0] * v[1] - u[1] * v[0]
            n = math.sqrt(cx * cx + cy * cy + cz * cz)
            if n > 1e-9:
                axes.append((cx / n, cy / n, cz / n))

    for axis in axes:
        proj_t = abs(sum(c * c2 for c, c2 in zip(t, axis)))
        proj_a = sum(h * abs(sum(c * c2 for c, c2 in zip(u, axis))) for h, u in zip(he_a, ra))
        proj_b = sum(h * abs(sum(c * c2 for c, c2 in zip(v, axis))) for h, v in zip(he_b, rb))
        if proj_t > proj_a + proj_b:
            return False
    return True


@dataclass(frozen=True)
class _PreparedBox:
    object_id: str
    pose: Pose
    half_extents: Vec3
    bounding_radius: float


def prepare_obstacles(obstacles) -> list[_PreparedBox]:
    """Precompute bounding radii; obstacles need .id, .pose, .half_extents."""
    prepared = []
    for obs in obstacles:
        he = obs.half_extents
        prepared.append(
            _PreparedBox(
                object_id=obs.id,
                pose=obs.pose,
                half_extents=he,
                bounding_radius=math.sqrt(he[0] ** 2 + he[1] ** 2 + he[2] ** 2),
            )
        )
    return prepared


def collide_config(
    chain: KinematicChain,
    q: JointConfig,
    obstacles,
    ignore_ids: frozenset[str] | set[str] = frozenset(),
) -> Hit | None:
    """First capsule-vs-box overlap of the arm at q, or None if clear."""
    if obstacles and not isinstance(obstacles[0], _PreparedBox):
        obstacles = prepare_obstacles(obstacles)
    segments = link_segments(chain, q)
    for link_index, (a, b, radius) in enumerate(segments):
        for box in obstacles:
            if box.object_id in ignore_ids:
                continue
            # cheap reject: capsule axis vs bounding sphere
            if (
                _point_segment_distance(box.pose.position, a, b)
                > radius + box.bounding_radius
            ):
                continue
            if segment_box_distance(a, b, box.pose, box.half_extents) < radius:
                return Hit(box.object_id, link_index)
    return None
