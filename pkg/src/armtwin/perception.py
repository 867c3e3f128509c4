"""Deliberately fallible object detector over the ground-truth world.

Two pinhole cameras sense oriented-box objects. A detection survives only if
the object center projects into the image, its occlusion fraction stays under
the threshold, it is not on the forced-miss list, and a keyed Bernoulli draw
passes. Noise draws are keyed by (seed, seq, object id, camera id), never by
stream position, so sensing is order-independent and replayable.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .geometry import Pose, Vec3
from .kinematics import JointConfig, KinematicChain, forward_kinematics
from .perception_types import CameraModel, Detection, DetectionSet, PerceptionConfig
from .world import GroundTruthWorld, ObjectInstance

BEHIND = "behind"

# offsets in {-1,0,1}^3 minus the center: 8 corners, 12 edge midpoints,
# 6 face centers
_SAMPLE_OFFSETS = [
    (i, j, k)
    for i in (-1, 0, 1)
    for j in (-1, 0, 1)
    for k in (-1, 0, 1)
    if (i, j, k) != (0, 0, 0)
]


def arm_camera(
    chain: KinematicChain, q: JointConfig, template: CameraModel
) -> CameraModel:
    """Secondary camera: end-effector pose composed with the chain's mount."""
    ee, _ = forward_kinematics(chain, q)
    pose = ee.compose(chain.camera_mount)
    return CameraModel(
        id="arm",
        pose=pose,
        fx=template.fx,
        fy=template.fy,
        cx=template.cx,
        cy=template.cy,
        width=template.width,
        height=template.height,
    )


def project_to_image(cam: CameraModel, point) -> tuple[float, float] | str:
    """Pixel (u, v) of a world point, or BEHIND if depth is not positive."""
    local = cam.pose.inverse().apply(point)
    x, y, z = local
    if z <= 0.0:
        return BEHIND
    return (cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy)


def _ray_hits_box(
    origin: Vec3, sample: Vec3, box_pose: Pose, half_extents: Vec3
) -> bool:
    """True if the box blocks the ray strictly before the sample point.

    Slab test in the box frame over the segment param t in [0, 1), where
    t = 1 is the sample point itself.
    """
    inv = box_pose.inverse()
    o = inv.apply(origin)
    s = inv.apply(sample)
    t0, t1 = 0.0, 1.0
    for oi, si, h in zip(o, s, half_extents):
        d = si - oi
        if abs(d) < 1e-15:
            if not -h <= oi <= h:
                return False
            continue
        ta = (-h - oi) / d
        tb = (h - oi) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return t0 < 1.0 and t1 > 0.0


def occlusion_fraction(
    world: GroundTruthWorld, cam: CameraModel, target: ObjectInstance
) -> float:
    """Fraction of the target's 26 canonical sample points hidden by others."""
    origin = cam.pose.position
    hx, hy, hz = target.half_extents
    blocked = 0
    for ox, oy, oz in _SAMPLE_OFFSETS:
        sample = target.pose.apply((ox * hx, oy * hy, oz * hz))
        for other in world.objects:
            if other.id == target.id:
                continue
            if _ray_hits_box(origin, sample, other.pose, other.half_extents):
                blocked += 1
                break
    return blocked / len(_SAMPLE_OFFSETS)


def _keyed_rng(seed: int, seq: int, object_id: str, camera_id: str) -> np.random.Generator:
    key = f"{seed}|{seq}|{object_id}|{camera_id}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=16).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


def sense(
    world: GroundTruthWorld,
    cam: CameraModel,
    cfg: PerceptionConfig,
    q: JointConfig,
    seq: int,
    stamp_ms: int,
) -> DetectionSet:
    """One detector pass; pure function of its arguments."""
    items = []
    for obj in world.objects:
        pixel = project_to_image(cam, obj.pose.position)
        if pixel == BEHIND:
            continue
        u, v = pixel
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            continue
        occ = occlusion_fraction(world, cam, obj)
        if occ >= cfg.tau_occ:
            continue
        if (obj.id, cam.id) in cfg.forced_miss:
            continue
        rng = _keyed_rng(cfg.seed, seq, obj.id, cam.id)
        if rng.uniform() < cfg.p_miss:
            continue
        pos_noise = rng.normal(0.0, 1.0, 3) * cfg.pos_sigma
        size_noise = rng.normal(0.0, 1.0, 3) * cfg.size_sigma
        position = tuple(
            c + float(n) for c, n in zip(obj.pose.position, pos_noise)
        )
        est_size = tuple(
            2.0 * h * max(1e-3, 1.0 + float(n))
            for h, n in zip(obj.half_extents, size_noise)
        )
        items.append(
            Detection(
                category=obj.category,
                position=position,
                est_size=est_size,
                confidence=1.0 - occ,
                camera=cam.id,
            )
        )
    return DetectionSet(
        items=tuple(items),
        camera=cam.id,
        robot_config=tuple(q),
        seq=seq,
        stamp_ms=stamp_ms,
    )


# --- passthrough ---------------------------------------------------------

def _convex_hull_2d(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Monotone chain; returns counter-clockwise hull."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def render_passthrough(world: GroundTruthWorld, resolution: tuple[int, int]) -> bytes:
    """Top-down silhouette of object footprints as a binary PGM (P5).

    The workspace x/y bounds map to the full raster; +y is the top row.
    Object pixels are 255, background 0.
    """
    w, h = resolution
    xmin, ymin, _ = world.workspace.min
    xmax, ymax, _ = world.workspace.max
    img = np.zeros((h, w), dtype=np.uint8)
    xs = xmin + (np.arange(w) + 0.5) * (xmax - xmin) / w
    ys = ymax - (np.arange(h) + 0.5) * (ymax - ymin) / h
    for obj in world.objects:
        hx, hy, hz = obj.half_extents
        corners = [
            obj.pose.apply((sx * hx, sy * hy, sz * hz))
            for sx in (-1, 1)
            for sy in (-1, 1)
            for sz in (-1, 1)
        ]
        hull = _convex_hull_2d([(c[0], c[1]) for c in corners])
        if len(hull) < 3:
            continue
        cmin_x = min(p[0] for p in hull)
        cmax_x = max(p[0] for p in hull)
        cmin_y = min(p[1] for p in hull)
        cmax_y = max(p[1] for p in hull)
        col_mask = (xs >= cmin_x) & (xs <= cmax_x)
        row_mask = (ys >= cmin_y) & (ys <= cmax_y)
        cols = np.nonzero(col_mask)[0]
        rows = np.nonzero(row_mask)[0]
        if cols.size == 0 or rows.size == 0:
            continue
        gx, gy = np.meshgrid(xs[cols], ys[rows])
        inside = np.ones_like(gx, dtype=bool)
        n = len(hull)
        for i in range(n):
            ax, ay = hull[i]
            bx, by = hull[(i + 1) % n]
            inside &= (bx - ax) * (gy - ay) - (by - ay) * (gx - ax) >= 0.0
        img[np.ix_(rows, cols)] |= inside.astype(np.uint8) * 255
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    return header + img.tobytes()


def parse_pgm(data: bytes) -> tuple[int, int, bytes]:
    """(width, height, pixels) of a binary PGM produced by render_passthrough."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError("not a render_passthrough PGM")
    w, h = (int(tok) for tok in parts[1].split())
    pixels = parts[3]
    if len(pixels) != w * h:
        raise ValueError("PGM payload size mismatch")
    return w, h, pixels
