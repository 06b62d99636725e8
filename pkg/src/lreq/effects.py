"""Type and effect inference.

Every term gets a type and a history expression over-approximating the
traces its evaluation can produce, with each access event annotated by the
metric value the metric function assigns to it.

A few algorithmic choices make the declarative rules executable:

* a parameter without an annotation takes the type of the argument the
  abstraction is applied to (inference visits the argument first), and
  defaults to ``unit`` when the abstraction is never applied;
* a recursive function is typed in two passes: the first gives the self
  name a placeholder output and an effect variable ``h`` as latent effect,
  the second reuses the output found, and the latent effect is ``μh.H``;
* both branches of a conditional contribute a choice;
* an argument whose resource domain is included in the parameter's domain
  is accepted.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import ConfigError, TypingError
from .history import (
    EPS,
    Ann,
    Choice,
    Ev,
    HistExpr,
    HVar,
    MetF,
    Mu,
    SecF,
    choice_of,
    free_hvars,
    par,
    render,
    seq,
)
from .lang.desugar import desugar
from .lang.syntax import (
    UNIT_TYPE_NAME,
    Abs,
    App,
    Event,
    Expr,
    If,
    MetFrame,
    Req,
    Res,
    SecFrame,
    Signature,
    Unit,
    Var,
    free_vars,
)
from .semiring import MetricValue, Semiring, get_semiring

# -- types -----------------------------------------------------------------------


class Type:
    __slots__ = ()

    def __str__(self) -> str:
        return render_type(self)


@dataclass(frozen=True, repr=False)
class UnitType(Type):
    pass


@dataclass(frozen=True, repr=False)
class DomainType(Type):
    name: str


@dataclass(frozen=True, repr=False)
class Arrow(Type):
    input: Type
    latent: HistExpr
    output: Type


@dataclass(frozen=True, repr=False)
class _Unknown(Type):
    """Output of a recursive function during the first typing pass."""


UNIT = UnitType()
_UNKNOWN = _Unknown()

for _cls in (UnitType, DomainType, Arrow, _Unknown):
    _cls.__repr__ = lambda self: f"<{render_type(self)}>"


def render_type(t: Type) -> str:
    if isinstance(t, UnitType):
        return UNIT_TYPE_NAME
    if isinstance(t, DomainType):
        return t.name
    if isinstance(t, Arrow):
        inp = render_type(t.input)
        if isinstance(t.input, Arrow):
            inp = f"({inp})"
        return f"{inp} -{{{render(t.latent)}}}-> {render_type(t.output)}"
    return "?"


def type_json(t: Type) -> Any:
    if isinstance(t, Arrow):
        from .history import to_json

        return {"input": type_json(t.input), "latent": to_json(t.latent), "output": type_json(t.output)}
    return render_type(t)


def domain_type(name: str) -> Type:
    return UNIT if name == UNIT_TYPE_NAME else DomainType(name)


@dataclass(frozen=True)
class TypeEnv:
    """Ordered bindings; lookup finds the most recent binding of a name."""

    bindings: tuple[tuple[str, Type], ...] = ()

    def extend(self, name: str, t: Type) -> "TypeEnv":
        return TypeEnv(self.bindings + ((name, t),))

    def lookup(self, name: str) -> Type | None:
        for n, t in reversed(self.bindings):
            if n == name:
                return t
        return None


# -- metric function -------------------------------------------------------------------


@dataclass(frozen=True)
class MetricFn:
    """Metric value of each access event.

    Lookup tries the exact ``(action, resource)`` entry, then
    ``(action, "*")``, then falls back to the semiring's unit.
    """

    semiring: Semiring
    entries: Mapping[tuple[str, str], MetricValue] = field(default_factory=dict)

    def __post_init__(self):
        for key, v in self.entries.items():
            if v.semiring != self.semiring:
                raise ConfigError(f"metric table entry {key} is not a {self.semiring.name} value")

    def __call__(self, action: str, resource: str) -> MetricValue:
        for key in ((action, resource), (action, "*")):
            if key in self.entries:
                return self.entries[key]
        return self.semiring.one

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "MetricFn":
        """``{"metric": "RISK", "entries": [{"action", "resource", "value"}]}``"""
        try:
            s = get_semiring(doc["metric"])
            entries: dict[tuple[str, str], MetricValue] = {}
            for row in doc.get("entries", ()):
                key = (str(row["action"]), str(row.get("resource", "*")))
                if key in entries:
                    raise ConfigError(f"metric table lists {key} twice")
                raw = row["value"]
                entries[key] = s.parse(raw) if isinstance(raw, str) else s.value(raw)
            return cls(s, entries)
        except KeyError as exc:
            raise ConfigError(f"metric table lacks field {exc.args[0]!r}") from None


# -- repository ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Service:
    location: str
    interface: Arrow
    implementation: Expr | None = None
    source: str | None = None

    @property
    def effect(self) -> HistExpr:
        return self.interface.latent

    def offers(self, input_domain: str, output_domain: str) -> bool:
        return (
            self.interface.input == domain_type(input_domain)
            and self.interface.output == domain_type(output_domain)
        )


def natural_key(text: str) -> tuple:
    """Sort key placing ``e2`` before ``e10``."""
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", text))


class ServiceRepository:
    """Published services keyed by location; republishing replaces an entry."""

    def __init__(self, signature: Signature, services: Iterable[Service] = ()):
        self.signature = signature
        self._services: dict[str, Service] = {}
        for s in services:
            self.add(s)

    def add(self, service: Service) -> None:
        self._services[service.location] = service

    def __contains__(self, location: str) -> bool:
        return location in self._services

    def __getitem__(self, location: str) -> Service:
        return self._services[location]

    def __iter__(self):
        return iter(self.services())

    def __len__(self) -> int:
        return len(self._services)

    def services(self) -> list[Service]:
        return [self._services[k] for k in sorted(self._services, key=natural_key)]

    def candidates(self, input_domain: str, output_domain: str) -> list[Service]:
        """Services whose interface matches exactly, in natural location order."""
        return [s for s in self.services() if s.offers(input_domain, output_domain)]

    def copy(self) -> "ServiceRepository":
        return ServiceRepository(self.signature, self._services.values())


# -- inference ------------------------------------------------------------------------------

# Chooses the services a request may reach: the whole candidate list for
# plain inference, the single planned service for per-plan analysis.
Resolver = Callable[[Req, Sequence[Service]], Sequence[Service]]


def _all_candidates(req: Req, candidates: Sequence[Service]) -> Sequence[Service]:
    return candidates


class _Inferencer:
    def __init__(self, repo: ServiceRepository, F: MetricFn, resolver: Resolver):
        self.repo = repo
        self.sig = repo.signature
        self.F = F
        self.resolver = resolver
        self._hvars = itertools.count(0)

    def fresh_hvar(self) -> str:
        n = next(self._hvars)
        return "h" if n == 0 else f"h{n}"

    # subtyping and joins

    def compatible(self, actual: Type, expected: Type) -> bool:
        if isinstance(actual, _Unknown) or isinstance(expected, _Unknown):
            return True
        if isinstance(actual, DomainType) and isinstance(expected, DomainType):
            return self.sig.includes(actual.name, expected.name)
        if isinstance(actual, Arrow) and isinstance(expected, Arrow):
            return self.compatible(expected.input, actual.input) and self.compatible(
                actual.output, expected.output
            )
        return actual == expected

    def join(self, a: Type, b: Type, pos) -> Type:
        if isinstance(a, _Unknown):
            return b
        if isinstance(b, _Unknown) or a == b:
            return a
        if isinstance(a, DomainType) and isinstance(b, DomainType):
            if self.sig.includes(a.name, b.name):
                return b
            if self.sig.includes(b.name, a.name):
                return a
        if isinstance(a, Arrow) and isinstance(b, Arrow) and a.input == b.input:
            latent = a.latent if a.latent == b.latent else Choice(a.latent, b.latent)
            return Arrow(a.input, latent, self.join(a.output, b.output, pos))
        raise TypingError(f"branches have incompatible types {a} and {b}", pos)

    # the rules

    def infer(self, env: TypeEnv, e: Expr, hints: tuple[Type, ...] = ()) -> tuple[Type, HistExpr]:
        if isinstance(e, Unit):
            return UNIT, EPS
        if isinstance(e, Res):
            dom = e.domain or self.sig.domain_of(e.name)
            if dom is None:
                raise TypingError(f"resource {e.name} belongs to no declared domain", e.pos)
            return DomainType(dom), EPS
        if isinstance(e, Var):
            t = env.lookup(e.name)
            if t is None:
                raise TypingError(f"unbound variable {e.name}", e.pos)
            return t, EPS
        if isinstance(e, Event):
            t, h = self.infer(env, e.arg)
            if isinstance(t, _Unknown):
                return UNIT, h
            if not isinstance(t, DomainType):
                raise TypingError(
                    f"the argument of {e.action} has type {t}, not a resource domain", e.pos
                )
            accesses = choice_of(
                Ann(self.F(e.action, r), Ev(e.action, r)) for r in self.sig.members(t.name)
            )
            return UNIT, seq(h, accesses)
        if isinstance(e, If):
            t1, h1 = self.infer(env, e.then, hints)
            t2, h2 = self.infer(env, e.else_, hints)
            return self.join(t1, t2, e.pos), Choice(h1, h2)
        if isinstance(e, SecFrame):
            t, h = self.infer(env, e.body, hints)
            return t, SecF(e.policy, h)
        if isinstance(e, MetFrame):
            if e.check.semiring != self.F.semiring:
                raise TypingError(
                    f"metric check {e.check} does not match the {self.F.semiring.name} metric table",
                    e.pos,
                )
            t, h = self.infer(env, e.body, hints)
            return t, MetF(e.check, h)
        if isinstance(e, Abs):
            return self.abstraction(env, e, hints), EPS
        if isinstance(e, App):
            targ, harg = self.infer(env, e.arg)
            tfn, hfn = self.infer(env, e.fn, (targ,) + hints)
            if isinstance(tfn, _Unknown):
                return _UNKNOWN, par(hfn, harg)
            if not isinstance(tfn, Arrow):
                raise TypingError(f"applying a non-function of type {tfn}", e.pos)
            if not self.compatible(targ, tfn.input):
                raise TypingError(
                    f"function expects {tfn.input} but the argument has type {targ}", e.pos
                )
            return tfn.output, seq(par(hfn, harg), tfn.latent)
        if isinstance(e, Req):
            if e.annotated:
                e = Req(e.rid, e.input, e.output, pos=e.pos)
                return self.infer(env, desugar(e), hints)
            for dom in (e.input, e.output):
                if dom != UNIT_TYPE_NAME and dom not in self.sig.domains:
                    raise TypingError(f"unknown resource domain {dom} in request {e.rid}", e.pos)
            cands = self.repo.candidates(e.input, e.output)
            if not cands:
                raise TypingError(
                    f"no service offers {e.input} -> {e.output} for request {e.rid}", e.pos
                )
            chosen = self.resolver(e, cands)
            latent = choice_of(s.effect for s in chosen)
            return Arrow(domain_type(e.input), latent, domain_type(e.output)), EPS
        raise TypingError(f"cannot type {type(e).__name__} nodes (desugar first)", getattr(e, "pos", None))

    def abstraction(self, env: TypeEnv, e: Abs, hints: tuple[Type, ...]) -> Arrow:
        if e.param_type is not None:
            if e.param_type != UNIT_TYPE_NAME and e.param_type not in self.sig.domains:
                raise TypingError(f"unknown resource domain {e.param_type}", e.pos)
            param = domain_type(e.param_type)
        elif hints:
            param = hints[0]
        else:
            param = UNIT
        rest = hints[1:]
        inner = env.extend(e.param, param)
        recursive = e.self_name is not None and e.self_name in free_vars(e.body) and e.self_name != e.param
        if not recursive:
            out, body = self.infer(inner, e.body, rest)
            return Arrow(param, body, out)
        h = self.fresh_hvar()
        provisional = Arrow(param, HVar(h), _UNKNOWN)
        out, _ = self.infer(env.extend(e.self_name, provisional).extend(e.param, param), e.body, rest)
        if isinstance(out, _Unknown):
            out = UNIT
        out2, body = self.infer(
            env.extend(e.self_name, Arrow(param, HVar(h), out)).extend(e.param, param), e.body, rest
        )
        out = self.join(out, out2, e.pos)
        if isinstance(out, _Unknown):
            out = UNIT
        return Arrow(param, Mu(h, body), out)


def infer(
    e: Expr,
    repo: ServiceRepository,
    F: MetricFn,
    env: TypeEnv | None = None,
    *,
    resolver: Resolver | None = None,
) -> tuple[Type, HistExpr]:
    """Type and effect of ``e`` (desugared on entry)."""
    engine = _Inferencer(repo, F, resolver or _all_candidates)
    t, h = engine.infer(env or TypeEnv(), desugar(e))
    if isinstance(t, _Unknown):
        t = UNIT
    return t, h


def infer_recursive_latent(
    z: str,
    param: str,
    body: Expr,
    param_type: Type,
    repo: ServiceRepository,
    F: MetricFn,
    env: TypeEnv | None = None,
) -> HistExpr:
    """Latent effect of ``fun z(param) = body``: ``μh.H`` when ``z`` occurs
    in ``body``, otherwise the plain body effect."""
    engine = _Inferencer(repo, F, _all_candidates)
    arrow = engine.abstraction(env or TypeEnv(), Abs(z, param, desugar(body)), (param_type,))
    return arrow.latent


def publish(
    location: str,
    implementation: Expr,
    repo: ServiceRepository,
    F: MetricFn,
    *,
    source: str | None = None,
    declared: HistExpr | None = None,
) -> Service:
    """Infer the interface of a closed implementation and store it under
    ``location`` (replacing any previous entry)."""
    core = desugar(implementation)
    open_names = free_vars(core)
    if open_names:
        raise TypingError(f"service {location} has free variables {sorted(open_names)}", core.pos)
    t, h = infer(core, repo, F)
    if not isinstance(t, Arrow):
        raise TypingError(f"service {location} is not a function (type {t})", core.pos)
    if h != EPS:
        raise TypingError(f"service {location} is not a value (effect {render(h)})", core.pos)
    if declared is not None and declared != t.latent:
        raise TypingError(
            f"service {location}: declared effect {render(declared)} differs from the inferred "
            f"{render(t.latent)}",
            core.pos,
        )
    service = Service(location, t, core, source)
    repo.add(service)
    return service


def closed_hvars_ok(t: Type) -> bool:
    """Whether every latent effect in ``t`` is closed."""
    if isinstance(t, Arrow):
        return not free_hvars(t.latent) and closed_hvars_ok(t.input) and closed_hvars_ok(t.output)
    return True
