"""Exception types shared across the package.

Plan validation failures carry the timestep and tensor ids involved so
callers (and the CLI) can report exactly where a plan went wrong.
"""

from __future__ import annotations


class CosmaError(Exception):
    """Base class for all package errors."""


# ---- graph loading ----

class ParseError(CosmaError):
    """Malformed graph/plan JSON or a schema violation."""


class CycleError(CosmaError):
    """The operator dependency relation contains a cycle."""


class DanglingReference(CosmaError):
    """An operator references a tensor id that is not declared."""


class DuplicateId(CosmaError):
    """Duplicate tensor/operator id, or an id collision after sanitization."""


# ---- encoding / decoding ----

class BudgetTooSmall(CosmaError):
    """Budget below the minimum feasible value, or sizes incompatible with
    the alignment granularity."""


class InvalidOrder(CosmaError):
    """A fixed schedule is not a dependency-respecting bijection."""


class NonIntegralSolution(CosmaError):
    """A solver assignment value is not within tolerance of an integer."""


class InconsistentAssignment(CosmaError):
    """A rounded assignment violates a model constraint."""


# ---- solution files / solver bridge ----

class UnknownVariable(CosmaError):
    """A solution file names a variable the instance does not define."""


class MalformedLine(CosmaError):
    """A solution file line is not `name value`."""


class SolverError(CosmaError):
    """External solver failed, or returned an infeasible/violating point."""


class SolverTimeout(SolverError):
    """External solver exceeded the configured time limit."""


class TooLarge(CosmaError):
    """Instance exceeds the internal solver's search caps."""


class Infeasible(CosmaError):
    """No feasible plan exists for the requested instance."""


# ---- plan validation ----

class PlanViolation(CosmaError):
    """Base class for plan validation failures."""

    def __init__(self, timestep, tensors=(), detail=""):
        self.timestep = timestep
        self.tensors = tuple(tensors)
        self.detail = detail
        label = type(self).__name__
        parts = [f"{label} t={timestep}"]
        if self.tensors:
            parts.append("tensors=" + ",".join(str(x) for x in self.tensors))
        if detail:
            parts.append(detail)
        super().__init__(" ".join(parts))


class DepViolation(PlanViolation):
    """Schedule order or data dependency broken."""


class OverlapViolation(PlanViolation):
    """Two resident tensors occupy intersecting address ranges."""


class BudgetViolation(PlanViolation):
    """A resident tensor extends past the memory budget."""


class ResidencyViolation(PlanViolation):
    """An action requires residency (or non-residency) that does not hold."""


class AddressDrift(PlanViolation):
    """A preserved tensor changed base address between timesteps."""


class LostTensor(PlanViolation):
    """A live, never-spilled tensor was dropped and later needed."""


class MultiSpill(PlanViolation):
    """A tensor was spilled more than once."""


class MultiCreate(PlanViolation):
    """A tensor was created more than once."""


# ---- baselines / partitioning ----

class NoSpace(CosmaError):
    """No free hole large enough for the requested allocation."""


class Stuck(CosmaError):
    """Baseline eviction cannot free a hole for the pending allocation."""


class TooManySchedules(CosmaError):
    """Schedule enumeration exceeded the caller's limit."""

    def __init__(self, limit):
        super().__init__(f"more than {limit} schedules")
        self.limit = limit


class InvalidBreaks(CosmaError):
    """Break nodes do not induce a valid linear sub-graph sequence."""


class InvalidParams(CosmaError):
    """Generator family parameters are out of range."""
