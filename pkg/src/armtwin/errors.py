"""Exception hierarchy shared across the package.

Every error that can cross the wire gets a stable snake_case code derived
from its class name, so ErrorMsg payloads stay readable on both ends.
"""

import re


class ArmTwinError(Exception):
    """Base class for all package errors."""

    @classmethod
    def code(cls) -> str:
        return re.sub(r"(?<!^)(?=[A-Z])", "_", cls.__name__).lower()


# --- loading / validation ---------------------------------------------------

class SchemaError(ArmTwinError):
    """Document is missing a field or a field has the wrong shape."""


class ValidationError(ArmTwinError):
    """Document parses but violates a semantic constraint."""


class DuplicateId(ValidationError):
    pass


class OutsideWorkspace(ValidationError):
    pass


class UnknownId(ArmTwinError):
    pass


# --- kinematics -------------------------------------------------------------

class NotConverged(ArmTwinError):
    """IK ran out of iterations; carries the residual errors."""

    def __init__(self, pos_err: float, ang_err: float, iterations: int):
        super().__init__(
            f"ik did not converge after {iterations} iterations "
            f"(pos {pos_err:.4g} m, ang {ang_err:.4g} rad)"
        )
        self.pos_err = pos_err
        self.ang_err = ang_err
        self.iterations = iterations


# --- planning ---------------------------------------------------------------

class PlanningError(ArmTwinError):
    pass


class UnknownTarget(PlanningError):
    pass


class NotGraspable(PlanningError):
    pass


class IkUnreachable(PlanningError):
    pass


class PlanningFailed(PlanningError):
    pass


class StartInCollision(PlanningError):
    pass


class EndpointImmutable(PlanningError):
    pass


class SegmentInCollision(PlanningError):
    def __init__(self, object_id: str, segment: int | None = None):
        msg = f"segment collides with believed object {object_id!r}"
        if segment is not None:
            msg += f" (segment {segment})"
        super().__init__(msg)
        self.object_id = object_id
        self.segment = segment


class StaleRevision(ArmTwinError):
    pass


# --- protocol / session -----------------------------------------------------

class DecodeError(ArmTwinError):
    pass


class IllegalInPhase(ArmTwinError):
    def __init__(self, command: str, phase: str):
        super().__init__(f"{command} is not legal in phase {phase}")
        self.command = command
        self.phase = phase


class DigestMismatch(ArmTwinError):
    pass


class LogCorrupt(ArmTwinError):
    pass


# --- study ------------------------------------------------------------------

class DomainError(ArmTwinError):
    pass


class NoCorrectableObject(ArmTwinError):
    pass


class MalformedSlice(ArmTwinError):
    pass


class OddCount(ArmTwinError):
    pass


class AllNotApplicable(ArmTwinError):
    pass


class UnknownScenario(ArmTwinError):
    pass
