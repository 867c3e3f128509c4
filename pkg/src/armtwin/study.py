"""Study instruments: trial injection, metrics, counterbalancing, scoring,
and the a-priori sample-size computation for a paired two-sided design.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    AllNotApplicable,
    DomainError,
    MalformedSlice,
    NoCorrectableObject,
    OddCount,
    ValidationError,
)
from .kinematics import KinematicChain, load_builtin_chain
from .perception import BEHIND, arm_camera, occlusion_fraction, project_to_image
from .perception_types import PerceptionConfig
from .protocol import AddObject, Envelope, MoveArm, TrialControl
from .world import GroundTruthWorld

ATTRIBUTION_CAP_M = 0.15  # same cap as belief-to-truth matching

VR = "vr"
SCREEN = "screen"


@dataclass(frozen=True)
class TrialSpec:
    trial_index: int
    world_name: str
    forced_miss_object: str
    interface_label: str  # logging label only: "vr" | "screen"
    seed: int


@dataclass(frozen=True)
class TrialRecord:
    spec: TrialSpec
    start_ms: int
    end_ms: int
    correction_method: str  # camera_move | manual_add | both | none
    placement_error_m: float | None
    executed: bool
    outcome: str | None
    event_trail: tuple[str, ...]
    participant: str = "p00"

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class QuestionnaireResponse:
    instrument: str  # "TAM" | "MDMT_performance"
    items: tuple[tuple[str, int | None], ...]  # (item id, 1..7 or None for n/a)
    participant: str
    condition: str


# --- power analysis ----------------------------------------------------------

# Acklam's rational approximation for the inverse standard-normal CDF
# (relative error < 1.15e-9), sharpened to machine precision with one
# Halley step through erfc.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def inverse_normal_cdf(p: float) -> float:
    """z such that Phi(z) = p, accurate to well under 1e-8."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must be in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # Halley refinement
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def required_sample_size(alpha: float, power: float, d: float) -> int:
    """n = ceil((z_{1-alpha/2} + z_power)^2 / d^2), paired two-sided design."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    if not 0.0 < power < 1.0:
        raise DomainError(f"power must be in (0, 1), got {power}")
    if d <= 0.0:
        raise DomainError(f"effect size must be positive, got {d}")
    z_a = inverse_normal_cdf(1.0 - alpha / 2.0)
    z_p = inverse_normal_cdf(power)
    return math.ceil((z_a + z_p) ** 2 / (d * d))


# --- trial generation ----------------------------------------------------------

def detectable_by_arm(
    world: GroundTruthWorld,
    chain: KinematicChain,
    object_id: str,
    probe_configs,
    cfg: PerceptionConfig,
) -> bool:
    """Deterministic visibility: in-frame with positive depth, under the
    occlusion threshold, from at least one probe config."""
    obj = world.get(object_id)
    if obj is None:
        return False
    for q in probe_configs:
        cam = arm_camera(chain, tuple(q), world.main_camera)
        pixel = project_to_image(cam, obj.pose.position)
        if pixel == BEHIND:
            continue
        u, v = pixel
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            continue
        if occlusion_fraction(world, cam, obj) < cfg.tau_occ:
            return True
    return False


def generate_trial(
    world: GroundTruthWorld,
    trial_index: int,
    seed: int,
    probe_configs,
    world_name: str = "world",
    interface_label: str = VR,
    cfg: PerceptionConfig = PerceptionConfig(),
    chain: KinematicChain | None = None,
) -> TrialSpec:
    """Pick the object this trial's detector will refuse to see.

    Only objects the arm camera could still find from some probe config are
    eligible, so the camera-move correction path always exists.
    """
    if chain is None:
        chain = load_builtin_chain(world.chain_name)
    eligible = sorted(
        obj.id
        for obj in world.objects
        if detectable_by_arm(world, chain, obj.id, probe_configs, cfg)
    )
    if not eligible:
        raise NoCorrectableObject(
            "no object is arm-detectable from any probe config"
        )
    rng = np.random.default_rng([seed, trial_index])
    chosen = eligible[int(rng.integers(0, len(eligible)))]
    return TrialSpec(
        trial_index=trial_index,
        world_name=world_name,
        forced_miss_object=chosen,
        interface_label=interface_label,
        seed=seed,
    )


def forced_miss_for(spec: TrialSpec) -> frozenset[tuple[str, str]]:
    return frozenset({(spec.forced_miss_object, "main")})


# --- trial metrics -------------------------------------------------------------

def finalize_trial(
    log_slice: list[tuple[int, Envelope]],
    spec: TrialSpec,
    world: GroundTruthWorld,
    participant: str = "p00",
) -> TrialRecord:
    """Fold one marker-bounded slice of (stamp_ms, envelope) into a record.

    camera_move needs an arm move followed by an arm-camera detection that
    matches the missed object; manual_add needs an added object of the right
    category within the attribution cap of the truth.
    """
    if not log_slice:
        raise MalformedSlice("empty trial slice")
    first = log_slice[0][1]
    last = log_slice[-1][1]
    if not (isinstance(first.payload, TrialControl) and first.payload.action == "start"):
        raise MalformedSlice("slice must begin with a trial start marker")
    if not (isinstance(last.payload, TrialControl) and last.payload.action == "stop"):
        raise MalformedSlice("slice must end with a trial stop marker")
    start_ms = log_slice[0][0]
    end_ms = log_slice[-1][0]
    if end_ms < start_ms:
        raise MalformedSlice("trial ends before it starts")

    missed = world.get(spec.forced_miss_object)
    if missed is None:
        raise MalformedSlice(
            f"forced-miss object {spec.forced_miss_object!r} not in world"
        )

    saw_arm_move = False
    camera_move = False
    placement_error: float | None = None
    executed = False
    outcome: str | None = None
    trail = []
    for stamp, env in log_slice:
        if not isinstance(env.payload, TrialControl):
            trail.append(env.type)
        if isinstance(env.payload, MoveArm):
            saw_arm_move = True
        elif env.type == "detection_set" and env.payload.camera == "arm":
            if saw_arm_move and any(
                d.category == missed.category
                and math.dist(d.position, missed.pose.position) <= ATTRIBUTION_CAP_M
                for d in env.payload.items
            ):
                camera_move = True
        elif isinstance(env.payload, AddObject):
            if env.payload.category == missed.category:
                dist = math.dist(env.payload.pose.position, missed.pose.position)
                if dist <= ATTRIBUTION_CAP_M:
                    placement_error = dist
        elif env.type == "execute":
            executed = True
        elif env.type == "execution_result":
            outcome = env.payload.outcome

    manual_add = placement_error is not None
    if camera_move and manual_add:
        method = "both"
    elif camera_move:
        method = "camera_move"
    elif manual_add:
        method = "manual_add"
    else:
        method = "none"

    return TrialRecord(
        spec=spec,
        start_ms=start_ms,
        end_ms=end_ms,
        correction_method=method,
        placement_error_m=placement_error,
        executed=executed,
        outcome=outcome,
        event_trail=tuple(trail),
        participant=participant,
    )


def trial_slices(applied: list[Envelope]) -> list[list[tuple[int, Envelope]]]:
    """Split a session's applied envelopes into marker-bounded trial slices.

    Stamps are the session's logical clock: envelope k was applied at k+1 ms.
    """
    slices: list[list[tuple[int, Envelope]]] = []
    current: list[tuple[int, Envelope]] | None = None
    for k, env in enumerate(applied):
        stamped = (k + 1, env)
        if isinstance(env.payload, TrialControl):
            if env.payload.action == "start":
                current = [stamped]
                continue
            if env.payload.action == "stop" and current is not None:
                current.append(stamped)
                slices.append(current)
                current = None
                continue
        if current is not None:
            current.append(stamped)
    return slices


# --- counterbalancing / scoring / export -----------------------------------------

def counterbalance(participants: int, seed: int) -> list[tuple[str, str]]:
    """Condition order per participant: exactly half start with VR."""
    if participants < 2 or participants % 2 != 0:
        raise OddCount(f"participant count must be even and >= 2, got {participants}")
    half = participants // 2
    orders = [(VR, SCREEN)] * half + [(SCREEN, VR)] * half
    rng = np.random.default_rng(seed)
    perm = rng.permutation(participants)
    return [orders[i] for i in perm]


def score_questionnaire(resp: QuestionnaireResponse) -> float:
    applicable = [v for _, v in resp.items if v is not None]
    for value in applicable:
        if not 1 <= value <= 7:
            raise ValidationError(f"item response {value} outside the 1..7 scale")
    if not applicable:
        raise AllNotApplicable(
            f"{resp.instrument} response from {resp.participant} has no applicable items"
        )
    return sum(applicable) / len(applicable)


def load_questionnaire(name: str) -> dict:
    """Bundled item banks: 'tam' and 'mdmt_performance' (ids only, no prose)."""
    ref = resources.files("armtwin.data.questionnaires").joinpath(f"{name}.json")
    return json.loads(ref.read_text(encoding="utf-8"))


METRICS_COLUMNS = (
    "participant", "condition", "trial", "duration_ms",
    "correction_method", "placement_error_m", "executed", "outcome",
)


def export_metrics(records: list[TrialRecord]) -> str:
    """CSV, one row per trial, ordered by (participant, trial)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for rec in sorted(records, key=lambda r: (r.participant, r.spec.trial_index)):
        writer.writerow([
            rec.participant,
            rec.spec.interface_label,
            rec.spec.trial_index,
            rec.duration_ms,
            rec.correction_method,
            "" if rec.placement_error_m is None else repr(rec.placement_error_m),
            str(rec.executed).lower(),
            "" if rec.outcome is None else rec.outcome,
        ])
    return buf.getvalue()
