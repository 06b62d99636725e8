"""Composition plans: enumeration, per-plan effects and classification."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .effects import (
    Arrow,
    MetricFn,
    Resolver,
    Service,
    ServiceRepository,
    Type,
    infer,
    natural_key,
)
from .errors import PlanningError, TraceSetOverflow
from .history import (
    EPS,
    Ann,
    Choice,
    Ev,
    HistExpr,
    HVar,
    MetF,
    Mu,
    Par,
    SecF,
    Seq,
    denote,
    free_hvars,
    par,
    policies_of,
    render,
    seq,
    walk,
)
from .lang.desugar import desugar
from .lang.syntax import Expr, Req, requests
from .mnf import DEFAULT_MU_ITERS, FrameBound, normalize
from .policy import UsageAutomaton, Violation, check_trace
from .trace import item_json, render_trace


@dataclass(frozen=True)
class Plan:
    """Assignment of a service location to every request identifier."""

    assignment: tuple[tuple[str, str], ...] = ()

    @classmethod
    def of(cls, mapping: Mapping[str, str]) -> "Plan":
        return cls(tuple(sorted(mapping.items(), key=lambda kv: natural_key(kv[0]))))

    @property
    def mapping(self) -> dict[str, str]:
        return dict(self.assignment)

    def __getitem__(self, rid: str) -> str:
        return self.mapping[rid]

    def get(self, rid: str) -> str | None:
        return self.mapping.get(rid)

    def __str__(self) -> str:
        return ", ".join(f"{r}={loc}" for r, loc in self.assignment) or "(no requests)"


def _requests(e: Expr) -> list[Req]:
    reqs = sorted(requests(desugar(e)), key=lambda r: natural_key(r.rid))
    return reqs


def candidates_by_request(e: Expr, repo: ServiceRepository) -> list[tuple[str, list[Service]]]:
    out = []
    for r in _requests(e):
        cands = repo.candidates(r.input, r.output)
        if not cands:
            raise PlanningError(f"request {r.rid} : {r.input} -> {r.output} has no candidate service")
        out.append((r.rid, cands))
    return out


def enumerate_plans(e: Expr, repo: ServiceRepository) -> list[Plan]:
    """Every interface-compatible plan, in lexicographic order of (ρ, ℓ)."""
    table = candidates_by_request(e, repo)
    rids = [rid for rid, _ in table]
    choices = [[s.location for s in cands] for _, cands in table]
    return [Plan(tuple(zip(rids, combo))) for combo in itertools.product(*choices)]


def parse_plan(text: str, plans: Sequence[Plan]) -> Plan:
    """A plan given as an index into ``plans`` or as ``rho1=e1,rho2=e8``."""
    text = text.strip()
    if text.isdigit():
        i = int(text)
        if not 0 <= i < len(plans):
            raise PlanningError(f"plan index {i} out of range (0..{len(plans) - 1})")
        return plans[i]
    mapping: dict[str, str] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise PlanningError(f"malformed plan entry {part!r} (expected rho=location)")
        rid, loc = (s.strip() for s in part.split("=", 1))
        mapping[rid] = loc
    wanted = Plan.of(mapping)
    for p in plans:
        if p.mapping == mapping:
            return p
    known = {rid for p in plans[:1] for rid, _ in p.assignment}
    missing = known - set(mapping)
    if missing:
        raise PlanningError(f"plan {wanted} leaves {sorted(missing, key=natural_key)} unassigned")
    raise PlanningError(f"plan {wanted} is not interface-compatible with the repository")


def plan_resolver(plan: Plan) -> Resolver:
    def resolve(req: Req, cands: Sequence[Service]) -> Sequence[Service]:
        loc = plan.get(req.rid)
        if loc is None:
            raise PlanningError(f"plan does not assign request {req.rid}")
        chosen = [s for s in cands if s.location == loc]
        if not chosen:
            raise PlanningError(f"service {loc} does not match the interface of request {req.rid}")
        return chosen

    return resolve


def behaviour(t: Type, h: HistExpr) -> HistExpr:
    """The effect worth analysing: a function value is analysed through its
    latent effect, anything else through its own effect."""
    if h == EPS and isinstance(t, Arrow):
        return t.latent
    return h


def plan_effect(
    e: Expr, plan: Plan | None, repo: ServiceRepository, F: MetricFn
) -> HistExpr:
    """Effect of ``e`` when every request is served by the planned service
    (by the whole candidate sum when ``plan`` is None)."""
    resolver = plan_resolver(plan) if plan is not None else None
    t, h = infer(e, repo, F, resolver=resolver)
    return behaviour(t, h)


class Classification(str, Enum):
    STATICALLY_VALID = "StaticallyValid"
    NEEDS_RUNTIME_GUARDS = "NeedsRuntimeGuards"
    INVALID = "Invalid"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SecurityVerdict:
    valid: bool | None
    witness: Violation | None = None
    truncated: bool = False
    overflow: str | None = None
    checked: bool = True


@dataclass(frozen=True)
class PlanVerdict:
    plan: Plan | None
    effect: HistExpr
    bound: Any
    frames: tuple[FrameBound, ...]
    security: SecurityVerdict
    classification: Classification
    guarded: tuple[int, ...] = field(default=())

    def to_json(self) -> dict:
        sec = self.security
        return {
            "plan": None if self.plan is None else self.plan.mapping,
            "bound": self.bound.to_json(),
            "frames": [
                {
                    "index": f.index,
                    "check": str(f.check),
                    "inner": f.inner.to_json(),
                    "capped": f.capped.to_json(),
                    "needs_guard": not f.satisfied,
                }
                for f in self.frames
            ],
            "security": {
                "checked": sec.checked,
                "valid": sec.valid,
                "truncated": sec.truncated,
                "overflow": sec.overflow,
                "witness": None
                if sec.witness is None
                else {
                    "policy": sec.witness.policy,
                    "trace": [item_json(i) for i in sec.witness.prefix],
                },
            },
            "classification": str(self.classification),
        }


def _witness_key(v: Violation) -> tuple:
    return (len(v.prefix), render_trace(v.prefix))


def policy_projection(h: HistExpr, automata: Iterable[UsageAutomaton]) -> HistExpr:
    """``h`` without the parts no automaton can observe.

    An event matched by no transition leaves every automaton in its state, so
    erasing it (together with annotations and metric framings) preserves the
    validity of every trace while shrinking the trace sets to enumerate.
    """
    patterns = [t.pattern for phi in automata for t in phi.transitions]

    def relevant(ev: Ev) -> bool:
        return any(p.action in ("*", ev.action) and p.resource in ("*", ev.resource) for p in patterns)

    def observable(x: HistExpr, live: frozenset[str]) -> bool:
        return any(
            isinstance(n, SecF) or (isinstance(n, Ev) and relevant(n)) or (isinstance(n, HVar) and n.name in live)
            for n in walk(x)
        )

    # ``live`` holds the recursion variables whose body is observable; a free
    # variable is kept as it is.
    def go(x: HistExpr, live: frozenset[str], bound: frozenset[str]) -> HistExpr:
        if isinstance(x, HVar):
            return x if x.name in live or x.name not in bound else EPS
        if not observable(x, live | (free_hvars(x) - bound)):
            return EPS
        if isinstance(x, (Ann, MetF)):
            return go(x.body, live, bound)
        if isinstance(x, Seq):
            return seq(go(x.left, live, bound), go(x.right, live, bound))
        if isinstance(x, Par):
            return par(go(x.left, live, bound), go(x.right, live, bound))
        if isinstance(x, Choice):
            a, b = go(x.left, live, bound), go(x.right, live, bound)
            return a if a == b else Choice(a, b)
        if isinstance(x, SecF):
            return SecF(x.policy, go(x.body, live, bound))
        if isinstance(x, Mu):
            inner = bound | {x.var}
            if not observable(x.body, (live | (free_hvars(x) - bound)) - {x.var}):
                return EPS
            body = go(x.body, live | {x.var}, inner)
            return Mu(x.var, body) if x.var in free_hvars(body) else body
        return x

    return go(h, frozenset(), frozenset())


def security_check(
    effect: HistExpr,
    policies: Mapping[str, UsageAutomaton],
    depth: int,
    cap: int,
) -> SecurityVerdict:
    """Bounded validity of every trace of ``effect``; the reported witness is
    the shortest (then lexicographically first) offending prefix of the
    policy projection, i.e. listing only the events some policy observes."""
    used = policies_of(effect)
    if not used:
        return SecurityVerdict(True, checked=False)
    automata = [policies[p] for p in sorted(used) if p in policies]
    try:
        ts = denote(policy_projection(effect, automata), depth=depth, cap=cap)
    except TraceSetOverflow as exc:
        sub = exc.subterm
        return SecurityVerdict(None, overflow=render(sub) if sub is not None else str(exc))
    witnesses = [v for v in (check_trace(t, policies) for t in ts.traces) if v is not None]
    if witnesses:
        return SecurityVerdict(False, min(witnesses, key=_witness_key), ts.truncated)
    return SecurityVerdict(True, None, ts.truncated)


def classify(
    e: Expr,
    plan: Plan | None,
    repo: ServiceRepository,
    F: MetricFn,
    policies: Mapping[str, UsageAutomaton] | None = None,
    depth: int = 3,
    *,
    mu_iters: int = DEFAULT_MU_ITERS,
    trace_cap: int = 100_000,
) -> PlanVerdict:
    """Verdict of one plan (of the repository sum when ``plan`` is None).

    A metric framing whose body bound already meets its check needs no
    runtime guard; the others are listed in ``guarded``.
    """
    effect = plan_effect(e, plan, repo, F)
    nf = normalize(effect, F.semiring, mu_iters)
    guarded = tuple(f.index for f in nf.frames if not f.satisfied)
    sec = security_check(effect, policies or {}, depth, trace_cap)
    if sec.valid is False:
        cls = Classification.INVALID
    elif sec.valid is None:
        cls = Classification.INCONCLUSIVE
    elif guarded:
        cls = Classification.NEEDS_RUNTIME_GUARDS
    else:
        cls = Classification.STATICALLY_VALID
    return PlanVerdict(plan, effect, nf.bound, nf.frames, sec, cls, guarded)


def analyse_plans(
    e: Expr,
    repo: ServiceRepository,
    F: MetricFn,
    policies: Mapping[str, UsageAutomaton] | None = None,
    depth: int = 3,
    *,
    mu_iters: int = DEFAULT_MU_ITERS,
    trace_cap: int = 100_000,
    plans: Iterable[Plan] | None = None,
) -> list[PlanVerdict]:
    """Verdicts for ``plans`` (default: every plan), in plan order."""
    if plans is None:
        plans = enumerate_plans(e, repo)
    return [
        classify(e, p, repo, F, policies, depth, mu_iters=mu_iters, trace_cap=trace_cap)
        for p in plans
    ]
