"""Exception hierarchy shared by every stage of the toolchain."""

from __future__ import annotations


class LreqError(Exception):
    """Base class for all errors raised by this package."""


class AlgebraError(LreqError):
    """Operands of a metric operation live in different semirings, or a
    semiring definition violates the c*-semiring axioms."""


class ParseError(LreqError):
    def __init__(self, message: str, pos: tuple[int, int] | None = None):
        self.pos = pos
        if pos is not None:
            message = f"{pos[0]}:{pos[1]}: {message}"
        super().__init__(message)


class TypingError(LreqError):
    def __init__(self, message: str, pos: tuple[int, int] | None = None):
        self.pos = pos
        if pos is not None:
            message = f"{pos[0]}:{pos[1]}: {message}"
        super().__init__(message)


class HistoryError(LreqError):
    """Malformed history expression (e.g. an unbound recursion variable)."""


class TraceSetOverflow(LreqError):
    """A denotation grew past the configured trace-set cap."""

    def __init__(self, message: str, subterm=None):
        self.subterm = subterm
        super().__init__(message)


class PolicyError(LreqError):
    """Unknown policy, malformed automaton, or unbalanced framing markers."""


class PlanningError(LreqError):
    """No composition plan can resolve some request."""


class RunError(LreqError):
    """The interpreter was handed something it cannot execute (ill-formed
    term, unmapped guard, plan undefined on a reached request)."""


class ExplorationLimit(LreqError):
    """Exhaustive exploration visited more configurations than allowed."""


class ConfigError(LreqError):
    """A configuration document is missing, malformed, or inconsistent."""
