"""Exception types raised across the simulator."""

from __future__ import annotations


class AgentflowError(Exception):
    """Base class for every error raised by this package."""


# dataflow core

class UnknownActor(AgentflowError):
    pass


class NotEnabled(AgentflowError):
    pass


class OperatorError(AgentflowError):
    """An operator was undefined on its inputs (div by zero, sqrt of a negative...)."""

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


class StepLimitExceeded(AgentflowError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"step limit {limit} exceeded")


class UnknownOperator(AgentflowError):
    pass


# agents

class InvalidBehavior(AgentflowError):
    def __init__(self, message: str, violations=()):
        self.violations = list(violations)
        super().__init__(message)


class ArityMismatch(AgentflowError):
    pass


class GrainMismatch(ArityMismatch):
    pass


class MissingBelief(AgentflowError):
    pass


class UnknownBelief(AgentflowError):
    pass


class DesireConflict(AgentflowError):
    pass


class InvalidSystem(AgentflowError):
    pass


# reconfiguration

class UnknownAgent(AgentflowError):
    pass


class AgentBusy(AgentflowError):
    def __init__(self, agent_id: str, reason: str):
        self.agent_id = agent_id
        self.reason = reason
        super().__init__(f"agent {agent_id} busy: {reason}")


class PortMismatch(AgentflowError):
    pass


class DigestMismatch(AgentflowError):
    pass


class DuplicateImage(AgentflowError):
    pass


# scenarios / fusion

class EmptyMemory(AgentflowError):
    pass


class ZeroVariance(AgentflowError):
    pass


class InvalidThreshold(AgentflowError):
    pass


class TooFewRows(AgentflowError):
    pass


# files

class DescriptionError(AgentflowError):
    """A description file failed to parse; ``where`` names the line or field."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


class InvariantViolation(AgentflowError):
    """An engine invariant (capacity, conservation) failed after a mutation."""
