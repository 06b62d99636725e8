"""Abstract syntax of service programs and the declarations they refer to."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..errors import ConfigError
from ..semiring import MetricCheck

UNIT_TYPE_NAME = "unit"
FRESH_PREFIX = "_g#"


class Expr:
    """Base class of all term nodes."""

    __slots__ = ()


def _pos():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unit(Expr):
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Res(Expr):
    name: str
    domain: str | None = None
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Event(Expr):
    action: str
    arg: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class If(Expr):
    guard: str
    then: Expr
    else_: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Abs(Expr):
    """``fun self(param) = body``; ``self`` is None for the sugar ``\\x -> e``.

    ``param_type`` optionally names the input domain (or ``unit``).
    """

    self_name: str | None
    param: str
    body: Expr
    param_type: str | None = None
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    arg: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class SecFrame(Expr):
    policy: str
    body: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class MetFrame(Expr):
    check: MetricCheck
    body: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Req(Expr):
    """Service request ``req rho : input -> output``.

    ``policy``/``check`` are the optional annotations of the sugar form
    ``req rho : input -[sec "phi", met RISK <= 75]-> output``.
    """

    rid: str
    input: str
    output: str
    policy: str | None = None
    check: MetricCheck | None = None
    pos: tuple[int, int] | None = _pos()

    @property
    def annotated(self) -> bool:
        return self.policy is not None or self.check is not None


@dataclass(frozen=True)
class Sequence(Expr):
    """Sugar: ``first ; second``."""

    first: Expr
    second: Expr
    pos: tuple[int, int] | None = _pos()


@dataclass(frozen=True)
class Fork(Expr):
    """Sugar: ``fork { left } and { right }``."""

    left: Expr
    right: Expr
    pos: tuple[int, int] | None = _pos()


def is_value(e: Expr) -> bool:
    return isinstance(e, (Unit, Res, Abs)) or (isinstance(e, Req) and not e.annotated)


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Event):
        return (e.arg,)
    if isinstance(e, If):
        return (e.then, e.else_)
    if isinstance(e, Abs):
        return (e.body,)
    if isinstance(e, App):
        return (e.fn, e.arg)
    if isinstance(e, (SecFrame, MetFrame)):
        return (e.body,)
    if isinstance(e, Sequence):
        return (e.first, e.second)
    if isinstance(e, Fork):
        return (e.left, e.right)
    return ()


def walk(e: Expr) -> Iterable[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Abs):
        bound = {e.param}
        if e.self_name is not None:
            bound.add(e.self_name)
        return free_vars(e.body) - bound
    out: frozenset[str] = frozenset()
    for c in children(e):
        out |= free_vars(c)
    return out


def requests(e: Expr) -> list[Req]:
    """Requests occurring in ``e``, in source order, without duplicates."""
    seen: dict[str, Req] = {}
    for node in walk(e):
        if isinstance(node, Req) and node.rid not in seen:
            seen[node.rid] = node
    return list(seen.values())


# -- declarations --------------------------------------------------------------


@dataclass(frozen=True)
class ResourceDomain:
    name: str
    members: tuple[str, ...]
    parts: tuple[str, ...] = ()

    @property
    def is_union(self) -> bool:
        return bool(self.parts)


class Signature:
    """The names a program may mention: resource domains, guards, policies.

    ``guards``/``policies`` set to None means "accept any name".
    """

    def __init__(
        self,
        domains: Iterable[ResourceDomain] = (),
        guards: Iterable[str] | None = None,
        policies: Iterable[str] | None = None,
    ):
        self.domains: dict[str, ResourceDomain] = {}
        self._home: dict[str, str] = {}
        for d in domains:
            self.add_domain(d)
        self.guards = None if guards is None else frozenset(guards)
        self.policies = None if policies is None else frozenset(policies)

    def add_domain(self, d: ResourceDomain) -> None:
        if d.name in self.domains or d.name == UNIT_TYPE_NAME:
            raise ConfigError(f"domain {d.name} declared twice")
        if d.is_union:
            members: list[str] = []
            for part in d.parts:
                if part not in self.domains:
                    raise ConfigError(f"union domain {d.name} refers to undeclared {part}")
                for m in self.domains[part].members:
                    if m not in members:
                        members.append(m)
            if d.members and tuple(d.members) != tuple(members):
                raise ConfigError(f"union domain {d.name} does not list exactly its parts' members")
            d = ResourceDomain(d.name, tuple(members), tuple(d.parts))
        else:
            for m in d.members:
                if m in self._home:
                    raise ConfigError(
                        f"resource {m} belongs to both {self._home[m]} and {d.name}"
                    )
            for m in d.members:
                self._home[m] = d.name
        self.domains[d.name] = d

    def domain_of(self, resource: str) -> str | None:
        return self._home.get(resource)

    def members(self, domain: str) -> tuple[str, ...]:
        return self.domains[domain].members

    def includes(self, small: str, big: str) -> bool:
        """Whether every member of domain ``small`` belongs to ``big``."""
        if small == big:
            return True
        if small not in self.domains or big not in self.domains:
            return False
        return set(self.domains[small].members) <= set(self.domains[big].members)

    @classmethod
    def from_doc(
        cls,
        domains: Mapping[str, object],
        guards: Iterable[str] | None = None,
        policies: Iterable[str] | None = None,
    ) -> "Signature":
        """Domains document: ``{"F": ["FLIGHT_No", ...], "B": {"union": ["I", "F", "H"]}}``.

        Union domains may appear in any order relative to their parts.
        """
        pending = dict(domains)
        sig = cls(guards=guards, policies=policies)
        while pending:
            progressed = False
            for name, spec in list(pending.items()):
                if isinstance(spec, Mapping):
                    parts = tuple(spec.get("union", ()))
                    if not all(p in sig.domains for p in parts):
                        continue
                    dom = ResourceDomain(name, tuple(spec.get("members", ())), parts)
                else:
                    dom = ResourceDomain(name, tuple(spec))
                sig.add_domain(dom)
                del pending[name]
                progressed = True
            if not progressed:
                raise ConfigError(f"cannot resolve union domains {sorted(pending)}")
        return sig
