"""The reality gate: sweep an approved trajectory against the ground truth.

The belief never enters here. Objects the belief missed are still obstacles;
a believed object that does not exist drops the grasp. The sweep is written
independently of the planner's validator on purpose, so the two act as
cross-checks over the shared collision primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .collision import Hit, boxes_overlap, collide_config, prepare_obstacles
from .geometry import Pose, compose_pose
from .kinematics import KinematicChain, forward_kinematics
from .planner import Trajectory
from .world import GroundTruthWorld, move_truth_object

SWEEP_STEP = 0.02  # per-joint interpolation, radians
GRASP_TOLERANCE_M = 0.05  # believed grasp center must be this close to a real object

SUCCESS = "success"
COLLISION = "collision"
DROP_VIOLATION = "drop_violation"


@dataclass(frozen=True)
class ExecutionResult:
    outcome: str  # SUCCESS | COLLISION | DROP_VIOLATION
    final_world: GroundTruthWorld
    duration_steps: int
    collided_object_id: str | None = None
    collision_segment: int | None = None
    collision_config: tuple[float, ...] | None = None


def _resolve_true_target(traj: Trajectory, world: GroundTruthWorld):
    """The real object the gripper would close on, or None if it grabs air."""
    believed_center = compose_pose(
        traj.waypoints[traj.grasp_index].ee, traj.attach_rel
    ).position
    best = None
    best_d = GRASP_TOLERANCE_M
    for obj in world.objects:
        d = math.dist(obj.pose.position, believed_center)
        if d < best_d:
            best = obj
            best_d = d
    return best


def execute_on_real(
    chain: KinematicChain, traj: Trajectory, world: GroundTruthWorld
) -> ExecutionResult:
    """Dense kinematic sweep against every ground-truth object.

    The first contact stops the robot: on collision the world keeps all
    pre-execution poses. On a clean sweep the target lands at the place pose.
    """
    true_target = _resolve_true_target(traj, world)
    if true_target is None:
        return ExecutionResult(
            outcome=DROP_VIOLATION, final_world=world, duration_steps=0
        )

    grasp_ee = traj.waypoints[traj.grasp_index].ee
    attach_rel_true = compose_pose(grasp_ee.inverse(), true_target.pose)
    prepared = prepare_obstacles(world.objects)
    steps = 0

    for k in range(len(traj.waypoints) - 1):
        q0 = traj.waypoints[k].q
        q1 = traj.waypoints[k + 1].q
        ignore = frozenset([true_target.id]) if k >= traj.approach_index else frozenset()
        attached = k >= traj.grasp_index
        n = max(1, math.ceil(max(abs(a - b) for a, b in zip(q0, q1)) / SWEEP_STEP))
        start_i = 0 if k == 0 else 1  # segment start already swept as previous end
        for i in range(start_i, n + 1):
            t = i / n
            q = tuple(a + (b - a) * t for a, b in zip(q0, q1))
            steps += 1
            hit = collide_config(chain, q, prepared, ignore)
            if hit is None and attached:
                ee, _ = forward_kinematics(chain, q)
                box_pose = compose_pose(ee, attach_rel_true)
                for obs in prepared:
                    if obs.object_id == true_target.id:
                        continue
                    if boxes_overlap(
                        box_pose, true_target.half_extents, obs.pose, obs.half_extents
                    ):
                        hit = Hit(obs.object_id, -1)
                        break
            if hit is not None:
                return ExecutionResult(
                    outcome=COLLISION,
                    final_world=world,
                    duration_steps=steps,
                    collided_object_id=hit.object_id,
                    collision_segment=k,
                    collision_config=q,
                )

    final_world = move_truth_object(world, true_target.id, traj.place_pose)
    return ExecutionResult(
        outcome=SUCCESS, final_world=final_world, duration_steps=steps
    )
