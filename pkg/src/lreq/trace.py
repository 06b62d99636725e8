"""Execution traces: access events interleaved with framing markers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from .semiring import MetricCheck


@dataclass(frozen=True)
class Event:
    action: str
    resource: str

    def __str__(self) -> str:
        return f"{self.action}({self.resource})"


@dataclass(frozen=True)
class Marker:
    """Activation (``opening``) or deactivation of a framing.

    ``frame`` is a policy name for security framings and a
    :class:`MetricCheck` for metric framings.
    """

    opening: bool
    frame: Union[str, MetricCheck]

    @property
    def is_security(self) -> bool:
        return isinstance(self.frame, str)

    def __str__(self) -> str:
        if self.is_security:
            return ("[" if self.opening else "]") + self.frame
        return ("⟨" if self.opening else "⟩") + str(self.frame).replace(" ", "")


Item = Union[Event, Marker]
Trace = tuple  # tuple[Item, ...]


def events(trace: Iterable[Item]) -> tuple[Event, ...]:
    return tuple(i for i in trace if isinstance(i, Event))


def render_trace(trace: Iterable[Item]) -> str:
    items = [str(i) for i in trace]
    return " ".join(items) if items else "ε"


def item_json(item: Item) -> dict:
    if isinstance(item, Event):
        return {"event": item.action, "resource": item.resource}
    kind = "sec" if item.is_security else "met"
    return {
        "marker": "open" if item.opening else "close",
        kind: item.frame if item.is_security else str(item.frame),
    }
