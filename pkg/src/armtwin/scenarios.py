"""Golden scenarios: scripted operators driving the full loop over the wire.

Each scenario boots a real server on loopback, connects a TCP client, and
plays one trial: the detector is forced to miss an obstacle sitting across
the carry corridor, the scripted operator corrects it (or doesn't), plans a
pick-and-place, and executes against ground truth. Policies double as the
reference clients for the protocol.
"""

from __future__ import annotations

import asyncio
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .client import TwinClient
from .errors import UnknownScenario
from .execution import ExecutionResult
from .geometry import Pose
from .kinematics import KinematicChain, load_builtin_chain, solve_ik_restarts
from .perception_types import PerceptionConfig
from .planner import TOOL_DOWN
from .protocol import (
    AddObject,
    Execute,
    MoveArm,
    SelectAndPlan,
    TrialControl,
)
from .server import TwinServer
from .session import Session
from .study import TrialRecord, TrialSpec, finalize_trial, forced_miss_for, trial_slices
from .world import GroundTruthWorld, load_builtin_world

SCENARIO_WORLD = "corridor3"
TARGET_CATEGORY = "cup"
MISSED_ID = "hidden_box"
PLACE_POSE = Pose((0.42, 0.3, 0.05))

CAMERA_MOVER = "camera_mover"
OBJECT_ADDER = "object_adder"
NO_CORRECTION = "no_correction"


@dataclass(frozen=True)
class ScriptedPolicy:
    name: str  # camera_mover | object_adder | no_correction
    probe_targets: tuple[tuple[float, float, float], ...] = (
        (0.42, 0.0, 0.5),
        (0.42, -0.08, 0.45),
    )
    placement_jitter_sigma: float = 0.003

    def __post_init__(self):
        if self.name not in (CAMERA_MOVER, OBJECT_ADDER, NO_CORRECTION):
            raise UnknownScenario(f"no scripted policy named {self.name!r}")


SCENARIOS = {
    "undetected_obstacle_uncorrected": ScriptedPolicy(NO_CORRECTION),
    "undetected_obstacle_object_adder": ScriptedPolicy(OBJECT_ADDER),
    "undetected_obstacle_camera_mover": ScriptedPolicy(CAMERA_MOVER),
}


@dataclass
class ScenarioOutcome:
    result: ExecutionResult
    record: TrialRecord
    log_path: str


def probe_configs_for(
    chain: KinematicChain,
    targets,
    seed: int,
    seed_config: tuple[float, ...],
) -> list[tuple[float, ...]]:
    """Tool-down IK solutions above each probe point, deterministic per seed."""
    rng = np.random.default_rng([seed, 99])
    configs = []
    for point in targets:
        q = solve_ik_restarts(chain, Pose(tuple(point), TOOL_DOWN), seed_config, rng)
        configs.append(q)
    return configs


def run_scenario(name: str, seed: int, log_path: str | None = None) -> ScenarioOutcome:
    """Run one golden scenario end to end; fully deterministic per seed."""
    policy = SCENARIOS.get(name)
    if policy is None:
        raise UnknownScenario(
            f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}"
        )
    if log_path is None:
        log_path = str(
            Path(tempfile.mkdtemp(prefix="armtwin-")) / f"{name}-{seed}.log"
        )
    return asyncio.run(_run_async(policy, name, seed, log_path))


async def _run_async(
    policy: ScriptedPolicy, name: str, seed: int, log_path: str
) -> ScenarioOutcome:
    world = load_builtin_world(SCENARIO_WORLD)
    chain = load_builtin_chain(world.chain_name)
    spec = TrialSpec(
        trial_index=1,
        world_name=SCENARIO_WORLD,
        forced_miss_object=MISSED_ID,
        interface_label="vr",
        seed=seed,
    )
    cfg = PerceptionConfig(
        p_miss=0.0, pos_sigma=0.0, size_sigma=0.0,
        forced_miss=forced_miss_for(spec), seed=seed,
    )
    session = Session(world, chain, cfg, session_seed=seed)
    server = TwinServer(session, log_path)
    await server.start()
    client = TwinClient()
    try:
        await client.connect(server.host, server.tcp_port)
        hello = await client.recv_type("scene_state")
        target_id = _category_id(hello.payload.scene, TARGET_CATEGORY)
        await client.command(TrialControl("start", spec.trial_index,
                                          spec.forced_miss_object,
                                          spec.interface_label),
                             reply_types=("trial_control",))

        if policy.name == OBJECT_ADDER:
            await _correct_by_adding(client, policy, world, seed)
        elif policy.name == CAMERA_MOVER:
            await _correct_by_probing(client, policy, chain, session, seed)

        plan_env = await client.command(
            SelectAndPlan(
                target_object_id=target_id,
                place_pose=PLACE_POSE,
                pregrasp_offset=0.10,
                seed=seed,
            ),
            reply_types=("trajectory",),
            timeout=120.0,
        )
        if plan_env.type == "error":
            raise RuntimeError(f"planning failed in scenario: {plan_env.payload}")
        await client.recv_type("scene_state")  # phase change to planned

        result_env = await client.command(
            Execute(), reply_types=("execution_result",), timeout=120.0
        )
        if result_env.type == "error":
            raise RuntimeError(f"execute rejected: {result_env.payload}")

        await client.command(TrialControl("stop", spec.trial_index,
                                          spec.forced_miss_object,
                                          spec.interface_label),
                             reply_types=("trial_control",))
    finally:
        await client.close()
        await server.stop()

    record = finalize_trial(trial_slices(session.applied)[0], spec, world)
    return ScenarioOutcome(
        result=session.exec_results[-1], record=record, log_path=log_path
    )


def _category_id(scene, category: str) -> str:
    for obj in scene.objects:
        if obj.category == category:
            return obj.id
    raise RuntimeError(f"no believed object of category {category!r}")


async def _correct_by_adding(
    client: TwinClient, policy: ScriptedPolicy, world: GroundTruthWorld, seed: int
) -> None:
    missed = world.get(MISSED_ID)
    rng = np.random.default_rng([seed, 7])
    jitter = rng.normal(0.0, policy.placement_jitter_sigma, 3)
    pos = tuple(c + float(j) for c, j in zip(missed.pose.position, jitter))
    reply = await client.command(
        AddObject(
            category=missed.category,
            pose=Pose(pos, missed.pose.quat),
            half_extents=missed.half_extents,
        )
    )
    if reply.type == "error":
        raise RuntimeError(f"add_object rejected: {reply.payload}")


async def _correct_by_probing(
    client: TwinClient,
    policy: ScriptedPolicy,
    chain: KinematicChain,
    session: Session,
    seed: int,
) -> None:
    home = session.arm_q
    probes = probe_configs_for(chain, policy.probe_targets, seed, home)
    for q in probes:
        reply = await client.command(MoveArm(tuple(q)), reply_types=("detection_set",))
        if reply.type == "error":
            raise RuntimeError(f"move_arm rejected: {reply.payload}")
        scene_env = await client.recv_type("scene_state")
        seen = any(
            obj.category == "box"
            and math.dist(obj.pose.position, (0.42, 0.0, 0.14)) < 0.15
            for obj in scene_env.payload.scene.objects
        )
        if seen:
            return
    raise RuntimeError("no probe config revealed the missed obstacle")
