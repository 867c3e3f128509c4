"""Session state machine, append-only command log, and deterministic replay.

The session is the single-writer core behind the server: every envelope the
node receives (operator commands, detector output, robot results) is applied
here in one order and appended to the log. Time is a logical millisecond
counter advanced per applied envelope, so a recorded session replays
bit-identically regardless of wall clock.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass

from . import belief as beliefmod
from .belief import BeliefScene, scene_digest
from .errors import (
    ArmTwinError,
    DigestMismatch,
    IllegalInPhase,
    LogCorrupt,
    StaleRevision,
    ValidationError,
)
from .execution import ExecutionResult, execute_on_real
from .kinematics import KinematicChain, chain_from_json, chain_to_json
from .perception import arm_camera, render_passthrough, sense
from .perception_types import (
    PerceptionConfig,
    perception_config_from_json,
    perception_config_to_json,
)
from .planner import PlanRequest, Trajectory, edit_waypoint, plan_pick_place
from .protocol import (
    AddObject,
    EditWaypoint,
    Envelope,
    ErrorInfo,
    ExecResult,
    Execute,
    MoveArm,
    MoveObject,
    Passthrough,
    RemoveObject,
    ResetVirtual,
    SceneState,
    SelectAndPlan,
    TrialControl,
    PROTOCOL_VERSION,
    make_envelope,
)
from .world import GroundTruthWorld, world_hash

PERCEIVE = "perceive"
REVIEW = "review"
PLANNED = "planned"
EXECUTED = "executed"

PASSTHROUGH_RESOLUTION = (160, 160)

HOME_CONFIGS = {
    "arm7": (0.0, 0.6, 0.0, 1.2, 0.0, 1.3, 0.0),
    "planar3": (0.4, -0.6, 0.3),
}

# which envelope types a client may send in which phase
_CORRECTIONS = ("add_object", "move_object", "remove_object", "move_arm")
_PHASE_RULES = {
    "detection_set": (PERCEIVE, REVIEW),
    "add_object": (PERCEIVE, REVIEW),
    "move_object": (PERCEIVE, REVIEW),
    "remove_object": (PERCEIVE, REVIEW),
    "move_arm": (PERCEIVE, REVIEW),
    "select_and_plan": (REVIEW,),
    "edit_waypoint": (PLANNED,),
    "execute": (PLANNED,),
    "reset_virtual": (PLANNED, EXECUTED),
    "execution_result": (EXECUTED,),  # robot-side record echoed into the log
    "trial_control": (PERCEIVE, REVIEW, PLANNED, EXECUTED),
    "passthrough": (PERCEIVE, REVIEW, PLANNED, EXECUTED),
}

BROADCAST = "all"
TO_SENDER = "sender"


@dataclass
class TrialMarker:
    action: str
    trial_index: int
    stamp_ms: int


class Session:
    """Deterministic single-writer session over one world and one chain."""

    def __init__(
        self,
        world: GroundTruthWorld,
        chain: KinematicChain,
        perception_config: PerceptionConfig,
        session_seed: int,
        start_config: tuple[float, ...] | None = None,
        verify_replayed_senses: bool = False,
    ):
        self.world = world
        self.chain = chain
        self.perception_config = perception_config
        self.session_seed = session_seed
        self.scene = BeliefScene()
        self.phase = PERCEIVE
        self.trajectory: Trajectory | None = None
        self.arm_q = (
            tuple(start_config)
            if start_config is not None
            else HOME_CONFIGS.get(chain.name, (0.0,) * chain.n_joints)
        )
        self.clock_ms = 0
        self.sense_seq = 0
        self.out_seq = 0
        self.exec_results: list[ExecutionResult] = []
        self.trial_markers: list[TrialMarker] = []
        self.applied: list[Envelope] = []
        self.verify_replayed_senses = verify_replayed_senses

    # --- outbound helpers ---------------------------------------------------

    def _out(self, payload) -> Envelope:
        self.out_seq += 1
        return make_envelope(payload, seq=self.out_seq, stamp_ms=self.clock_ms)

    def _scene_msg(self) -> Envelope:
        return self._out(
            SceneState(self.scene, self.phase, scene_digest(self.scene))
        )

    def _error(self, exc: ArmTwinError) -> Envelope:
        return self._out(ErrorInfo(code=exc.code(), text=str(exc)))

    # --- sensing ------------------------------------------------------------

    def next_main_sense(self) -> Envelope:
        """DetectionSet envelope from the fixed camera at the current config."""
        self.sense_seq += 1
        ds = sense(
            self.world, self.world.main_camera, self.perception_config,
            self.arm_q, self.sense_seq, self.clock_ms,
        )
        return make_envelope(ds, seq=self.sense_seq, stamp_ms=self.clock_ms)

    def next_arm_sense(self) -> Envelope:
        self.sense_seq += 1
        cam = arm_camera(self.chain, self.arm_q, self.world.main_camera)
        ds = sense(
            self.world, cam, self.perception_config,
            self.arm_q, self.sense_seq, self.clock_ms,
        )
        return make_envelope(ds, seq=self.sense_seq, stamp_ms=self.clock_ms)

    def _verify_sense(self, ds) -> None:
        """Replay integrity: a logged DetectionSet must be re-derivable."""
        if ds.camera == "main":
            cam = self.world.main_camera
        elif ds.camera == "arm":
            cam = arm_camera(self.chain, ds.robot_config, self.world.main_camera)
        else:
            raise LogCorrupt(f"unknown camera {ds.camera!r} in logged detection set")
        if tuple(ds.robot_config) != tuple(self.arm_q):
            raise LogCorrupt(
                "logged detection set was sensed at a different arm config"
            )
        expected = sense(
            self.world, cam, self.perception_config,
            ds.robot_config, ds.seq, ds.stamp_ms,
        )
        if expected != ds:
            raise LogCorrupt("logged detection set does not match re-derived sense")

    # --- command application --------------------------------------------------

    def apply(self, env: Envelope) -> list[tuple[Envelope, str]]:
        """Apply one received envelope; returns (outbound, audience) pairs.

        Domain errors never change state; they come back as ErrorMsg to the
        sender. Structural problems (malformed replay logs) raise.
        """
        self.clock_ms += 1
        self.applied.append(env)
        allowed = _PHASE_RULES.get(env.type)
        if allowed is None:
            return [(self._error(IllegalInPhase(env.type, self.phase)), TO_SENDER)]
        if self.phase not in allowed:
            return [(self._error(IllegalInPhase(env.type, self.phase)), TO_SENDER)]
        try:
            return self._dispatch(env)
        except ArmTwinError as exc:
            return [(self._error(exc), TO_SENDER)]

    def _dispatch(self, env: Envelope) -> list[tuple[Envelope, str]]:
        p = env.payload

        if env.type == "detection_set":
            if self.verify_replayed_senses:
                self._verify_sense(p)
            if p.seq > self.sense_seq:
                self.sense_seq = p.seq
            self.scene = beliefmod.integrate_detections(self.scene, p)
            if self.phase == PERCEIVE:
                self.phase = REVIEW
            return [(env, BROADCAST), (self._scene_msg(), BROADCAST)]

        if isinstance(p, AddObject):
            self.scene = beliefmod.add_user_object(
                self.scene, p.category, p.pose, p.half_extents,
                self.world.workspace,
            )
            return [(self._scene_msg(), BROADCAST)]

        if isinstance(p, MoveObject):
            self.scene = beliefmod.move_object(self.scene, p.id, p.pose)
            return [(self._scene_msg(), BROADCAST)]

        if isinstance(p, RemoveObject):
            self.scene = beliefmod.remove_object(self.scene, p.id)
            return [(self._scene_msg(), BROADCAST)]

        if isinstance(p, MoveArm):
            self.chain.check_config(p.q)
            if not self.chain.within_limits(p.q):
                raise ValidationError("requested arm config violates joint limits")
            self.arm_q = tuple(p.q)
            return []

        if isinstance(p, SelectAndPlan):
            req = PlanRequest(p.target_object_id, p.place_pose, p.pregrasp_offset)
            traj = plan_pick_place(self.chain, self.scene, req, self.arm_q, p.seed)
            self.trajectory = traj
            self.phase = PLANNED
            return [(self._out(traj), BROADCAST), (self._scene_msg(), BROADCAST)]

        if isinstance(p, EditWaypoint):
            assert self.trajectory is not None
            self.trajectory = edit_waypoint(
                self.chain, self.trajectory, p.index, p.position, self.scene
            )
            return [(self._out(self.trajectory), BROADCAST)]

        if isinstance(p, ResetVirtual):
            self.trajectory = None
            self.phase = REVIEW
            return [(self._scene_msg(), BROADCAST)]

        if isinstance(p, Execute):
            traj = self.trajectory
            assert traj is not None
            if traj.plan_revision != self.scene.revision:
                raise StaleRevision(
                    f"trajectory planned at revision {traj.plan_revision}, "
                    f"belief is at {self.scene.revision}"
                )
            result = execute_on_real(self.chain, traj, self.world)
            self.exec_results.append(result)
            self.world = result.final_world
            self.phase = EXECUTED
            if result.outcome == "success":
                target = self.scene.get(traj.target_object_id)
                if target is not None:
                    objects = tuple(
                        o if o.id != target.id
                        else beliefmod.BeliefObject(
                            id=o.id, category=o.category, pose=traj.place_pose,
                            half_extents=o.half_extents, provenance=o.provenance,
                            last_seen=o.last_seen, pinned=o.pinned,
                        )
                        for o in self.scene.objects
                    )
                    self.scene = BeliefScene(objects, self.scene.revision + 1)
            out = self._out(self._exec_payload(result))
            return [(out, BROADCAST), (self._scene_msg(), BROADCAST)]

        if isinstance(p, ExecResult):
            # replayed robot-side record: verify against what we just recomputed
            if not self.exec_results:
                raise LogCorrupt("execution result in log without a preceding execute")
            expected = self._exec_payload(self.exec_results[-1])
            if expected != p:
                raise LogCorrupt("logged execution result does not match recomputation")
            return []

        if isinstance(p, TrialControl):
            if p.action not in ("start", "stop"):
                raise ValidationError(f"bad trial_control action {p.action!r}")
            self.trial_markers.append(
                TrialMarker(p.action, p.trial_index, self.clock_ms)
            )
            # echoed so clients (and the UI) can track trial state
            return [(self._out(p), BROADCAST)]

        if isinstance(p, Passthrough):
            if not p.is_request:
                raise ValidationError("clients may only send passthrough requests")
            pgm = render_passthrough(self.world, PASSTHROUGH_RESOLUTION)
            w, h = PASSTHROUGH_RESOLUTION
            reply = Passthrough(
                width=w, height=h,
                data_b64=base64.b64encode(pgm).decode("ascii"),
            )
            return [(self._out(reply), TO_SENDER)]

        raise IllegalInPhase(env.type, self.phase)  # pragma: no cover

    def _exec_payload(self, result: ExecutionResult) -> ExecResult:
        return ExecResult(
            outcome=result.outcome,
            duration_steps=result.duration_steps,
            collided_object_id=result.collided_object_id,
            collision_segment=result.collision_segment,
            collision_config=result.collision_config,
            world_digest=world_hash(result.final_world),
        )

    # --- digests --------------------------------------------------------------

    def digest(self) -> str:
        """64-bit digest over final belief, world, and execution outcomes."""
        doc = {
            "scene": scene_digest(self.scene),
            "world": world_hash(self.world),
            "phase": self.phase,
            "clock_ms": self.clock_ms,
            "outcomes": [
                [r.outcome, r.collided_object_id, r.duration_steps]
                for r in self.exec_results
            ],
        }
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.blake2b(canon.encode("utf-8"), digest_size=8).hexdigest()


# --- command log -------------------------------------------------------------

@dataclass
class LogHeader:
    world_digest: str
    chain_doc: dict
    perception_config: PerceptionConfig
    session_seed: int
    start_config: tuple[float, ...]
    version: int = PROTOCOL_VERSION

    def to_line(self) -> str:
        return json.dumps(
            {
                "type": "log_header",
                "world_digest": self.world_digest,
                "chain": self.chain_doc,
                "perception_config": perception_config_to_json(self.perception_config),
                "seeds": {"session": self.session_seed},
                "start_config": list(self.start_config),
                "version": self.version,
            },
            separators=(",", ":"),
        )


def header_for_session(session: Session) -> LogHeader:
    return LogHeader(
        world_digest=world_hash(session.world),
        chain_doc=chain_to_json(session.chain),
        perception_config=session.perception_config,
        session_seed=session.session_seed,
        start_config=session.arm_q,
    )


def footer_line(session: Session) -> str:
    return json.dumps(
        {
            "type": "log_footer",
            "final_digest": session.digest(),
            "scene_digest": scene_digest(session.scene),
            "world_digest": world_hash(session.world),
            "clock_ms": session.clock_ms,
        },
        separators=(",", ":"),
    )


@dataclass
class ReplayReport:
    session: Session
    recorded_digest: str
    computed_digest: str

    @property
    def matches(self) -> bool:
        return self.recorded_digest == self.computed_digest


def replay(log_text: str, world: GroundTruthWorld) -> ReplayReport:
    """Rebuild a session from its log; raises on any integrity failure.

    Senses and execution results found in the log are re-derived from the
    recorded seeds and verified, so a log edited anywhere but client
    stamp_ms fields will not replay.
    """
    from .protocol import decode

    lines = [ln for ln in log_text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise LogCorrupt("log needs at least a header and a footer")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LogCorrupt(f"bad header line: {exc}") from exc
    if header.get("type") != "log_header":
        raise LogCorrupt("first log line is not a header record")
    try:
        footer = json.loads(lines[-1])
    except json.JSONDecodeError as exc:
        raise LogCorrupt(f"bad footer line: {exc}") from exc
    if footer.get("type") != "log_footer":
        raise LogCorrupt("last log line is not a footer record")

    if header["world_digest"] != world_hash(world):
        raise DigestMismatch(
            "log was recorded against a different world "
            f"({header['world_digest']} != {world_hash(world)})"
        )
    chain = chain_from_json(header["chain"])
    cfg = perception_config_from_json(header["perception_config"])
    session = Session(
        world=world,
        chain=chain,
        perception_config=cfg,
        session_seed=int(header["seeds"]["session"]),
        start_config=tuple(float(v) for v in header["start_config"]),
        verify_replayed_senses=True,
    )
    for line in lines[1:-1]:
        try:
            env = decode(line)
        except Exception as exc:
            raise LogCorrupt(f"bad envelope line: {exc}") from exc
        session.apply(env)

    return ReplayReport(
        session=session,
        recorded_digest=footer["final_digest"],
        computed_digest=session.digest(),
    )
