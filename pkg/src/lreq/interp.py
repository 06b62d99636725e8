"""Small-step interpreter with runtime enforcement of policies and metric checks.

A configuration is a trace, the current metric value and a term.  Each step
applies one reduction rule; the only nondeterminism is which side of an
application steps when neither is a value, and a scheduler resolves it.

Runtime-only nodes record what the source syntax cannot:

* an entered security framing remembers that its opening marker was emitted;
* an entered metric framing also keeps its own metric accounting: ``actual``
  (the product of the metric values of the events performed inside it) and
  ``guard`` (the value the check is enforced on);
* a running service call is wrapped in :class:`InService` until it returns.

With the default ``predictive`` guard mode a service request inside a metric
framing adds the normal-form bound of the chosen service to the framing's
guard before the service runs, and events inside the service do not add to
it again.  The ``actual`` mode enforces checks on ``actual`` instead.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, NamedTuple, Sequence, Union

from .effects import MetricFn, ServiceRepository, natural_key
from .errors import ExplorationLimit, RunError
from .lang.desugar import desugar
from .lang.printer import show
from .lang.syntax import (
    Abs,
    App,
    Event,
    Expr,
    If,
    MetFrame,
    Req,
    Res,
    SecFrame,
    Unit,
    Var,
    free_vars,
)
from .mnf import bound_of
from .policy import UsageAutomaton, offends
from .semiring import MetricCheck, MetricValue, satisfies, times
from .trace import Event as TraceEvent
from .trace import Item, Marker, item_json, render_trace

DEFAULT_FUEL = 10_000
DEFAULT_STATE_CAP = 200_000
GUARD_MODES = ("predictive", "actual")


# -- runtime nodes ------------------------------------------------------------------


@dataclass(frozen=True)
class ActiveSec(Expr):
    policy: str
    body: Expr
    opened: bool = False
    pos: Any = field(default=None, compare=False)


@dataclass(frozen=True)
class ActiveMet(Expr):
    check: MetricCheck
    body: Expr
    opened: bool
    actual: MetricValue
    guard: MetricValue
    pos: Any = field(default=None, compare=False)


@dataclass(frozen=True)
class InService(Expr):
    location: str
    body: Expr
    pos: Any = field(default=None, compare=False)


def is_value(e: Expr) -> bool:
    return isinstance(e, (Unit, Res, Abs, Req))


def substitute(e: Expr, name: str, value: Expr) -> Expr:
    """``e[value/name]``; ``value`` is closed so no capture can occur."""
    if isinstance(e, Var):
        return value if e.name == name else e
    if isinstance(e, (Unit, Res, Req)):
        return e
    if isinstance(e, Abs):
        if name in (e.param, e.self_name):
            return e
        return replace(e, body=substitute(e.body, name, value))
    if isinstance(e, App):
        return App(substitute(e.fn, name, value), substitute(e.arg, name, value), pos=e.pos)
    if isinstance(e, Event):
        return Event(e.action, substitute(e.arg, name, value), pos=e.pos)
    if isinstance(e, If):
        return If(e.guard, substitute(e.then, name, value), substitute(e.else_, name, value), pos=e.pos)
    if isinstance(e, (SecFrame, MetFrame, ActiveSec, ActiveMet, InService)):
        return replace(e, body=substitute(e.body, name, value))
    raise RunError(f"cannot substitute into {type(e).__name__}")


# -- outcomes -------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    index: int
    rule: str
    event: TraceEvent | None
    metric: MetricValue

    def __str__(self) -> str:
        ev = str(self.event) if self.event is not None else "-"
        return f"{self.index:>4}  {self.rule:<6}  {ev:<32}  {self.metric}"


@dataclass(frozen=True)
class FrameRecord:
    """Accounting of a metric framing at the moment it was discharged."""

    check: MetricCheck
    actual: MetricValue
    guard: MetricValue


@dataclass(frozen=True)
class Done:
    value: Expr
    trace: tuple[Item, ...]
    metric: MetricValue
    frames: tuple[FrameRecord, ...] = ()
    log: tuple[StepRecord, ...] = field(default=(), compare=False)
    kind = "Done"


@dataclass(frozen=True)
class SecurityHalt:
    policy: str
    trace: tuple[Item, ...]
    metric: MetricValue
    position: int = field(default=0, compare=False)
    log: tuple[StepRecord, ...] = field(default=(), compare=False)
    kind = "SecurityHalt"


@dataclass(frozen=True)
class MetricHalt:
    check: MetricCheck
    value: MetricValue
    trace: tuple[Item, ...]
    metric: MetricValue
    position: int = field(default=0, compare=False)
    log: tuple[StepRecord, ...] = field(default=(), compare=False)
    kind = "MetricHalt"


@dataclass(frozen=True)
class Stuck:
    description: str
    trace: tuple[Item, ...]
    metric: MetricValue
    position: int = field(default=0, compare=False)
    log: tuple[StepRecord, ...] = field(default=(), compare=False)
    kind = "Stuck"


@dataclass(frozen=True)
class OutOfFuel:
    trace: tuple[Item, ...]
    metric: MetricValue
    steps: int = field(default=0, compare=False)
    log: tuple[StepRecord, ...] = field(default=(), compare=False)
    kind = "OutOfFuel"


Outcome = Union[Done, SecurityHalt, MetricHalt, Stuck, OutOfFuel]


def outcome_json(o: Outcome) -> dict:
    doc: dict[str, Any] = {
        "outcome": o.kind,
        "trace": [item_json(i) for i in o.trace],
        "metric": o.metric.to_json(),
    }
    if isinstance(o, Done):
        doc["value"] = show(o.value)
        doc["frames"] = [
            {"check": str(f.check), "actual": f.actual.to_json(), "guard": f.guard.to_json()}
            for f in o.frames
        ]
    elif isinstance(o, SecurityHalt):
        doc["policy"] = o.policy
        doc["position"] = o.position
    elif isinstance(o, MetricHalt):
        doc["check"] = str(o.check)
        doc["value"] = o.value.to_json()
        doc["position"] = o.position
    elif isinstance(o, Stuck):
        doc["description"] = o.description
        doc["position"] = o.position
    elif isinstance(o, OutOfFuel):
        doc["steps"] = o.steps
    doc["log"] = [
        {
            "index": r.index,
            "rule": r.rule,
            "event": None if r.event is None else str(r.event),
            "metric": r.metric.to_json(),
        }
        for r in o.log
    ]
    return doc


def describe(o: Outcome) -> str:
    if isinstance(o, Done):
        return f"Done {show(o.value)} metric {o.metric} trace {render_trace(o.trace)}"
    if isinstance(o, SecurityHalt):
        return f"SecurityHalt {o.policy} at step {o.position}: {render_trace(o.trace)}"
    if isinstance(o, MetricHalt):
        return f"MetricHalt {o.check} at step {o.position}: value {o.value}"
    if isinstance(o, Stuck):
        return f"Stuck at step {o.position}: {o.description}"
    return f"OutOfFuel after {o.steps} steps"


# -- schedulers -------------------------------------------------------------------------


class Scheduler:
    name = "scheduler"

    def choose(self, n: int) -> int:
        raise NotImplementedError


class LeftFirst(Scheduler):
    name = "left"

    def choose(self, n: int) -> int:
        return 0


class RightFirst(Scheduler):
    name = "right"

    def choose(self, n: int) -> int:
        return n - 1


class Seeded(Scheduler):
    name = "seeded"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)

    def choose(self, n: int) -> int:
        return self.rng.randrange(n)


class Exhaustive(Scheduler):
    """Marker scheduler: only :func:`explore` accepts it."""

    name = "exhaustive"

    def choose(self, n: int) -> int:
        raise RunError("the exhaustive scheduler is only available through explore")


def make_scheduler(name: str, seed: int = 0) -> Scheduler:
    table = {"left": LeftFirst, "right": RightFirst, "exhaustive": Exhaustive}
    if name == "seeded":
        return Seeded(seed)
    if name not in table:
        raise RunError(f"unknown scheduler {name!r}")
    return table[name]()


# -- one step ---------------------------------------------------------------------------


class _Step(NamedTuple):
    term: Expr
    items: tuple[Item, ...]
    rule: str
    event: TraceEvent | None = None
    value: MetricValue | None = None  # metric of the event performed
    guard_delta: MetricValue | None = None  # contribution to enclosing guards
    closed: tuple[FrameRecord, ...] = ()


class _Halt(NamedTuple):
    kind: str  # "security" | "metric" | "stuck"
    detail: Any
    trace: tuple[Item, ...] | None = None


@dataclass
class Runtime:
    """Everything a run needs besides the term: plan, repository, metric
    function, guard valuation and policies."""

    repo: ServiceRepository
    F: MetricFn
    plan: Mapping[str, str] = field(default_factory=dict)
    guards: Mapping[str, Any] = field(default_factory=dict)
    policies: Mapping[str, UsageAutomaton] = field(default_factory=dict)
    guard_mode: str = "predictive"
    mu_iters: int = 64

    def __post_init__(self):
        if self.guard_mode not in GUARD_MODES:
            raise RunError(f"unknown guard mode {self.guard_mode!r}")
        if hasattr(self.plan, "mapping"):
            self.plan = self.plan.mapping  # a plans.Plan
        self._bounds: dict[str, MetricValue] = {}

    @property
    def semiring(self):
        return self.F.semiring

    def service_bound(self, location: str) -> MetricValue:
        if location not in self._bounds:
            self._bounds[location] = bound_of(self.repo[location].effect, self.semiring, self.mu_iters)
        return self._bounds[location]

    def guard(self, name: str) -> bool:
        if name not in self.guards:
            raise RunError(f"guard {name} has no value")
        v = self.guards[name]
        if not isinstance(v, bool):
            raise RunError(f"guard {name} is {v!r}; only explore accepts 'both'")
        return v


def _alternatives(e: Expr, rt: Runtime, trace: tuple[Item, ...]) -> list[_Step | _Halt]:
    """Every one-step reduction of ``e`` (several only under applications)."""
    if isinstance(e, Event):
        if not is_value(e.arg):
            return [s._replace(term=Event(e.action, s.term, pos=e.pos)) if isinstance(s, _Step) else s
                    for s in _alternatives(e.arg, rt, trace)]
        if not isinstance(e.arg, Res):
            return [_Halt("stuck", f"{e.action} applied to {show(e.arg)}, not a resource")]
        ev = TraceEvent(e.action, e.arg.name)
        d = rt.F(e.action, e.arg.name)
        return [_Step(Unit(pos=e.pos), (ev,), "S-Ev2", ev, d, d)]
    if isinstance(e, If):
        return [_Step(e.then if rt.guard(e.guard) else e.else_, (), "S-If")]
    if isinstance(e, App):
        out: list[_Step | _Halt] = []
        if not is_value(e.fn):
            out += [s._replace(term=App(s.term, e.arg, pos=e.pos)) if isinstance(s, _Step) else s
                    for s in _alternatives(e.fn, rt, trace)]
        if not is_value(e.arg):
            out += [s._replace(term=App(e.fn, s.term, pos=e.pos)) if isinstance(s, _Step) else s
                    for s in _alternatives(e.arg, rt, trace)]
        if out:
            return out
        if isinstance(e.fn, Abs):
            body = substitute(e.fn.body, e.fn.param, e.arg)
            if e.fn.self_name is not None and e.fn.self_name != e.fn.param:
                body = substitute(body, e.fn.self_name, e.fn)
            return [_Step(body, (), "S-App3")]
        if isinstance(e.fn, Req):
            return [_request(e.fn, e.arg, rt)]
        return [_Halt("stuck", f"applying {show(e.fn)}, which is not a function")]
    if isinstance(e, SecFrame):
        return _alternatives(ActiveSec(e.policy, e.body, False, pos=e.pos), rt, trace)
    if isinstance(e, MetFrame):
        one = e.check.semiring.one
        return _alternatives(ActiveMet(e.check, e.body, False, one, one, pos=e.pos), rt, trace)
    if isinstance(e, ActiveSec):
        return _security(e, rt, trace)
    if isinstance(e, ActiveMet):
        return _metric(e, rt, trace)
    if isinstance(e, InService):
        out = []
        for s in _alternatives(e.body, rt, trace):
            if isinstance(s, _Step):
                term = s.term if is_value(s.term) else InService(e.location, s.term, pos=e.pos)
                s = s._replace(term=term, guard_delta=None)
            out.append(s)
        return out
    if isinstance(e, Var):
        return [_Halt("stuck", f"free variable {e.name}")]
    return [_Halt("stuck", f"no rule applies to {type(e).__name__}")]


def _request(req: Req, arg: Expr, rt: Runtime) -> _Step | _Halt:
    loc = rt.plan.get(req.rid)
    if loc is None:
        raise RunError(f"the plan does not assign request {req.rid}")
    if loc not in rt.repo:
        raise RunError(f"plan maps {req.rid} to unknown service {loc}")
    service = rt.repo[loc]
    if not service.offers(req.input, req.output):
        raise RunError(f"service {loc} does not offer {req.input} -> {req.output}")
    if service.implementation is None:
        return _Halt("stuck", f"service {loc} publishes no implementation")
    body = App(service.implementation, arg, pos=req.pos)
    return _Step(InService(loc, body, pos=req.pos), (), "S-Req", guard_delta=rt.service_bound(loc))


def _security(e: ActiveSec, rt: Runtime, trace: tuple[Item, ...]) -> list[_Step | _Halt]:
    if e.policy not in rt.policies:
        raise RunError(f"unknown policy {e.policy!r}")
    phi = rt.policies[e.policy]
    opening = () if e.opened else (Marker(True, e.policy),)
    if is_value(e.body):
        if offends(trace, phi):
            return [_Halt("security", e.policy, trace)]
        return [_Step(e.body, opening + (Marker(False, e.policy),), "S-Sec2")]
    out: list[_Step | _Halt] = []
    for s in _alternatives(e.body, rt, trace + opening):
        if isinstance(s, _Step):
            after = trace + opening + s.items
            if offends(after, phi):
                s = _Halt("security", e.policy, after)
            else:
                s = s._replace(term=ActiveSec(e.policy, s.term, True, pos=e.pos), items=opening + s.items)
        out.append(s)
    return out


def _metric(e: ActiveMet, rt: Runtime, trace: tuple[Item, ...]) -> list[_Step | _Halt]:
    opening = () if e.opened else (Marker(True, e.check),)
    predictive = rt.guard_mode == "predictive"
    if is_value(e.body):
        enforced = e.guard if predictive else e.actual
        if not satisfies(enforced, e.check):
            return [_Halt("metric", (e.check, enforced))]
        record = FrameRecord(e.check, e.actual, e.guard)
        return [_Step(e.body, opening + (Marker(False, e.check),), "S-Met2", closed=(record,))]
    out: list[_Step | _Halt] = []
    for s in _alternatives(e.body, rt, trace + opening):
        if isinstance(s, _Step):
            actual = times(e.actual, s.value) if s.value is not None else e.actual
            guard = times(e.guard, s.guard_delta) if s.guard_delta is not None else e.guard
            enforced = guard if predictive else actual
            if not satisfies(enforced, e.check):
                s = _Halt("metric", (e.check, enforced))
            else:
                node = ActiveMet(e.check, s.term, True, actual, guard, pos=e.pos)
                s = s._replace(term=node, items=opening + s.items)
        out.append(s)
    return out


# -- configurations and drivers -----------------------------------------------------------


@dataclass(frozen=True)
class Config:
    trace: tuple[Item, ...]
    metric: MetricValue
    term: Expr
    frames: tuple[FrameRecord, ...] = ()


def _prepare(e: Expr) -> Expr:
    core = desugar(e)
    fv = free_vars(core)
    if fv:
        raise RunError(f"cannot run an open term (free variables {sorted(fv)})")
    return core


def _apply(cfg: Config, s: _Step | _Halt, index: int, log: tuple[StepRecord, ...]) -> Config | Outcome:
    if isinstance(s, _Halt):
        if s.kind == "security":
            return SecurityHalt(s.detail, s.trace or cfg.trace, cfg.metric, index, log)
        if s.kind == "metric":
            check, value = s.detail
            return MetricHalt(check, value, cfg.trace, cfg.metric, index, log)
        return Stuck(s.detail, cfg.trace, cfg.metric, index, log)
    metric = times(cfg.metric, s.value) if s.value is not None else cfg.metric
    return Config(cfg.trace + s.items, metric, s.term, cfg.frames + s.closed)


def step(cfg: Config, rt: Runtime, scheduler: Scheduler) -> tuple[Config | Outcome, StepRecord | None]:
    """Apply one rule chosen by ``scheduler``; returns the next configuration
    (or a halting outcome) and the log record of the step."""
    alts = _alternatives(cfg.term, rt, cfg.trace)
    if not alts:
        return Stuck("no rule applies", cfg.trace, cfg.metric), None
    s = alts[scheduler.choose(len(alts))] if len(alts) > 1 else alts[0]
    nxt = _apply(cfg, s, 0, ())
    if isinstance(nxt, Config):
        return nxt, StepRecord(0, s.rule, s.event, nxt.metric)
    return nxt, None


def run(
    e: Expr,
    rt: Runtime,
    scheduler: Scheduler | None = None,
    fuel: int = DEFAULT_FUEL,
    start: MetricValue | None = None,
) -> Outcome:
    """Run ``e`` to an outcome, taking at most ``fuel`` steps."""
    scheduler = scheduler or LeftFirst()
    if isinstance(scheduler, Exhaustive):
        raise RunError("use explore for the exhaustive scheduler")
    cfg = Config((), start if start is not None else rt.semiring.one, _prepare(e))
    log: list[StepRecord] = []
    for index in itertools.count(1):
        if is_value(cfg.term):
            return Done(cfg.term, cfg.trace, cfg.metric, cfg.frames, tuple(log))
        if index > fuel:
            return OutOfFuel(cfg.trace, cfg.metric, fuel, tuple(log))
        alts = _alternatives(cfg.term, rt, cfg.trace)
        if not alts:
            return Stuck("no rule applies", cfg.trace, cfg.metric, index, tuple(log))
        s = alts[scheduler.choose(len(alts))] if len(alts) > 1 else alts[0]
        nxt = _apply(cfg, s, index, tuple(log))
        if not isinstance(nxt, Config):
            return nxt
        log.append(StepRecord(index, s.rule, s.event, nxt.metric))
        cfg = nxt
    raise AssertionError("unreachable")


def guard_valuations(guards: Mapping[str, Any]) -> list[dict[str, bool]]:
    """Every total boolean valuation agreeing with the fixed guards; a guard
    set to ``"both"`` takes each value in turn."""
    free = sorted((g for g, v in guards.items() if v == "both"), key=natural_key)
    for g, v in guards.items():
        if v != "both" and not isinstance(v, bool):
            raise RunError(f"guard {g} must be true, false or 'both', not {v!r}")
    out = []
    for combo in itertools.product((True, False), repeat=len(free)):
        val = {g: v for g, v in guards.items() if v != "both"}
        val.update(zip(free, combo))
        out.append(val)
    return out


def explore(
    e: Expr,
    rt: Runtime,
    fuel: int = DEFAULT_FUEL,
    state_cap: int = DEFAULT_STATE_CAP,
    start: MetricValue | None = None,
) -> list[Outcome]:
    """All outcomes over every scheduling choice and every valuation of the
    ``"both"`` guards, deduplicated, in a deterministic order."""
    term = _prepare(e)
    init = Config((), start if start is not None else rt.semiring.one, term)
    seen_outcomes: dict[Outcome, None] = {}
    visited = 0
    for valuation in guard_valuations(rt.guards):
        sub = replace(rt, guards=valuation)
        sub._bounds = rt._bounds
        seen: set[Config] = set()
        stack: list[tuple[Config, int]] = [(init, 0)]
        while stack:
            cfg, depth = stack.pop()
            if cfg in seen:
                continue
            seen.add(cfg)
            visited += 1
            if visited > state_cap:
                raise ExplorationLimit(f"exploration visited more than {state_cap} configurations")
            if is_value(cfg.term):
                seen_outcomes.setdefault(Done(cfg.term, cfg.trace, cfg.metric, cfg.frames), None)
                continue
            if depth >= fuel:
                seen_outcomes.setdefault(OutOfFuel(cfg.trace, cfg.metric, depth), None)
                continue
            alts = _alternatives(cfg.term, sub, cfg.trace)
            if not alts:
                seen_outcomes.setdefault(Stuck("no rule applies", cfg.trace, cfg.metric, depth), None)
            for s in reversed(alts):
                nxt = _apply(cfg, s, depth + 1, ())
                if isinstance(nxt, Config):
                    stack.append((nxt, depth + 1))
                else:
                    seen_outcomes.setdefault(nxt, None)
    return list(seen_outcomes)
