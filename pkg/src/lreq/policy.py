"""Security policies as usage automata over access events.

An automaton recognises the *offending* traces: a trace respects the
policy when no run over it ends in an offending state.  Events without a
matching edge leave the state unchanged, and offending states are absorbing,
so once a prefix offends every extension offends too.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import PolicyError
from .trace import Event, Item, Marker

log = logging.getLogger(__name__)

ANY = "*"


@dataclass(frozen=True)
class EventPattern:
    action: str = ANY
    resource: str = ANY

    def matches(self, event: Event) -> bool:
        return self.action in (ANY, event.action) and self.resource in (ANY, event.resource)

    def __str__(self) -> str:
        return f"{self.action}({self.resource})"


@dataclass(frozen=True)
class Transition:
    source: str
    pattern: EventPattern
    target: str


@dataclass(frozen=True)
class UsageAutomaton:
    name: str
    states: tuple[str, ...]
    initial: str
    offending: frozenset[str]
    transitions: tuple[Transition, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        known = set(self.states)
        if self.initial not in known:
            raise PolicyError(f"policy {self.name}: initial state {self.initial} is not declared")
        for s in self.offending:
            if s not in known:
                raise PolicyError(f"policy {self.name}: offending state {s} is not declared")
        for t in self.transitions:
            if t.source not in known or t.target not in known:
                raise PolicyError(
                    f"policy {self.name}: transition {t.source} -> {t.target} uses an undeclared state"
                )
        if self.initial in self.offending and not self.warnings:
            msg = f"policy {self.name}: the initial state is offending, so even ε violates it"
            log.warning(msg)
            object.__setattr__(self, "warnings", (msg,))

    def start(self) -> frozenset[str]:
        return frozenset((self.initial,))

    def step(self, current: frozenset[str], event: Event) -> frozenset[str]:
        nxt: set[str] = set()
        for s in current:
            if s in self.offending:
                nxt.add(s)
                continue
            targets = [t.target for t in self.transitions if t.source == s and t.pattern.matches(event)]
            nxt.update(targets or (s,))
        return frozenset(nxt)

    def is_offending(self, current: frozenset[str]) -> bool:
        return not self.offending.isdisjoint(current)

    def run(self, events: Iterable[Event]) -> frozenset[str]:
        current = self.start()
        for e in events:
            current = self.step(current, e)
        return current

    def resources(self) -> set[str]:
        return {t.pattern.resource for t in self.transitions if t.pattern.resource != ANY}


def offends(events: Iterable[Event], phi: UsageAutomaton) -> bool:
    """Whether some run of ``phi`` over ``events`` reaches an offending state.

    Markers in the input are ignored.
    """
    return phi.is_offending(phi.run(e for e in events if isinstance(e, Event)))


@dataclass(frozen=True)
class Violation:
    """Witness of an invalid trace: ``prefix`` is the shortest prefix at which
    the open scope of ``policy`` sees an offending history."""

    policy: str
    position: int
    prefix: tuple[Item, ...]


def check_trace(
    trace: Iterable[Item], policies: Mapping[str, UsageAutomaton]
) -> Violation | None:
    """First violation of an open security scope in ``trace``, or None.

    The history is checked when a scope opens, after every event while it
    is open, and when it closes.
    """
    items = tuple(trace)
    states: dict[str, frozenset[str]] = {}
    open_count: dict[str, int] = {}
    stack: list[Marker] = []

    def state_of(name: str) -> frozenset[str]:
        if name not in states:
            if name not in policies:
                raise PolicyError(f"unknown policy {name!r}")
            phi = policies[name]
            states[name] = phi.run(e for e in items[:index] if isinstance(e, Event))
        return states[name]

    for index, item in enumerate(items):
        to_check: Iterable[str]
        if isinstance(item, Event):
            for name in states:
                states[name] = policies[name].step(states[name], item)
            to_check = [n for n, c in open_count.items() if c > 0]
        elif isinstance(item, Marker):
            if item.opening:
                stack.append(item)
            else:
                if not stack or stack[-1].frame != item.frame:
                    raise PolicyError(f"unbalanced framing marker {item} at position {index}")
                stack.pop()
            if not item.is_security:
                continue
            name = item.frame
            state_of(name)
            open_count[name] = open_count.get(name, 0) + (1 if item.opening else -1)
            to_check = [name]
        else:
            raise PolicyError(f"not a trace item: {item!r}")
        for name in to_check:
            if policies[name].is_offending(state_of(name)):
                return Violation(name, index, items[: index + 1])
    if stack:
        raise PolicyError(f"unclosed framing marker {stack[-1]}")
    return None


def valid(trace: Iterable[Item], policies: Mapping[str, UsageAutomaton]) -> bool:
    """Whether every prefix respects every policy whose scope is open there."""
    return check_trace(trace, policies) is None


def load_policy(doc: Mapping[str, Any]) -> UsageAutomaton:
    """Read a policy document::

        {"name": "no_overbooking", "states": ["q0", "bad"], "initial": "q0",
         "offending": ["bad"],
         "transitions": [{"from": "q0", "action": "overbook", "resource": "*", "to": "bad"}]}
    """
    try:
        transitions = tuple(
            Transition(
                str(t["from"]),
                EventPattern(str(t.get("action", ANY)), str(t.get("resource", ANY))),
                str(t["to"]),
            )
            for t in doc.get("transitions", ())
        )
        return UsageAutomaton(
            name=str(doc["name"]),
            states=tuple(str(s) for s in doc["states"]),
            initial=str(doc["initial"]),
            offending=frozenset(str(s) for s in doc.get("offending", ())),
            transitions=transitions,
        )
    except KeyError as exc:
        raise PolicyError(f"policy document lacks field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise PolicyError(f"malformed policy document: {exc}") from None
