"""Metric normal form: one annotation in front of an annotation-free body.

Annotations are pushed outwards bottom-up:

* ε, events and variables carry the neutral annotation ``one``;
* nested annotations fuse with ``times``;
* sequence and parallel composition multiply their operands' bounds;
* choice keeps the worse bound (``inv_plus``);
* a security framing lets the annotation through unchanged;
* a metric framing caps the bound at its threshold (``plus``);
* ``μh.H`` iterates ``Φ(d)`` = bound of ``H`` with ``h`` annotated by ``d``,
  starting from the semiring zero, and keeps the worst iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import HistoryError
from .history import (
    Ann,
    Choice,
    Eps,
    Ev,
    HistExpr,
    HVar,
    MetF,
    Mu,
    Par,
    SecF,
    Seq,
    strip_annotations,
    walk,
)
from .semiring import (
    RISK,
    MetricCheck,
    MetricValue,
    Semiring,
    inv_plus,
    plus,
    satisfies,
    times,
)

DEFAULT_MU_ITERS = 64


@dataclass(frozen=True)
class TrailStep:
    """One rewrite: ``before`` is equivalent to ``after`` (= ``Ann(bound, ·)``)."""

    rule: str
    before: HistExpr
    after: HistExpr
    path: tuple[int, ...]

    @property
    def bound(self) -> MetricValue:
        return self.after.value  # type: ignore[attr-defined]


@dataclass(frozen=True)
class FrameBound:
    """Bound of the body of one metric framing, before and after capping."""

    index: int
    check: MetricCheck
    inner: MetricValue
    capped: MetricValue
    path: tuple[int, ...]

    @property
    def satisfied(self) -> bool:
        """Whether the uncapped bound already meets the check."""
        return satisfies(self.inner, self.check)


@dataclass(frozen=True)
class NormalForm:
    bound: MetricValue
    body: HistExpr
    trail: tuple[TrailStep, ...] = field(default=(), compare=False)
    frames: tuple[FrameBound, ...] = field(default=(), compare=False)

    @property
    def expr(self) -> HistExpr:
        return Ann(self.bound, self.body)


def cap_frame(d: MetricValue, check: MetricCheck) -> MetricValue:
    """Bound of a metric framing whose body is bounded by ``d``: the better of
    ``d`` and the threshold, since enforcement stops anything worse."""
    if d.semiring.name != check.metric:
        raise HistoryError(f"a {d.semiring.name} bound cannot be capped by {check}")
    return plus(d, check.threshold)


def semiring_of(h: HistExpr, default: Semiring = RISK) -> Semiring:
    for node in walk(h):
        if isinstance(node, Ann):
            return node.value.semiring
        if isinstance(node, MetF):
            return node.check.semiring
    return default


class _Normalizer:
    def __init__(self, semiring: Semiring, mu_iters: int):
        if mu_iters < 1:
            raise ValueError("mu_iters must be positive")
        self.s = semiring
        self.K = mu_iters
        self.trail: list[TrailStep] = []
        self.frames: list[FrameBound] = []

    def bound(
        self, h: HistExpr, env: Mapping[str, MetricValue], path: tuple[int, ...], record: bool
    ) -> MetricValue:
        if isinstance(h, (Eps, Ev)):
            d, rule = self.s.one, "neutral"
        elif isinstance(h, HVar):
            if h.name not in env:
                raise HistoryError(f"unbound history variable {h.name}")
            d, rule = env[h.name], "neutral"
        elif isinstance(h, Ann):
            if h.value.semiring != self.s:
                raise HistoryError(
                    f"annotation {h.value!r} is not a {self.s.name} value"
                )
            d, rule = times(h.value, self.bound(h.body, env, path + (0,), record)), "fuse"
        elif isinstance(h, Seq):
            a = self.bound(h.left, env, path + (0,), record)
            b = self.bound(h.right, env, path + (1,), record)
            d, rule = times(a, b), "seq"
        elif isinstance(h, Par):
            a = self.bound(h.left, env, path + (0,), record)
            b = self.bound(h.right, env, path + (1,), record)
            d, rule = times(a, b), "par"
        elif isinstance(h, Choice):
            a = self.bound(h.left, env, path + (0,), record)
            b = self.bound(h.right, env, path + (1,), record)
            d, rule = inv_plus(a, b), "choice"
        elif isinstance(h, SecF):
            d, rule = self.bound(h.body, env, path + (0,), record), "sec"
        elif isinstance(h, MetF):
            slot = len(self.frames)
            if record:
                self.frames.append(None)  # type: ignore[arg-type]
            inner = self.bound(h.body, env, path + (0,), record)
            d, rule = cap_frame(inner, h.check), "met"
            if record:
                self.frames[slot] = FrameBound(slot, h.check, inner, d, path)
        elif isinstance(h, Mu):
            d, rule = self.mu(h, env), "mu"
            if record:
                # The body is reported once, with the variable kept neutral.
                self.bound(h.body, {**env, h.var: self.s.one}, path + (0,), record)
        else:
            raise HistoryError(f"not a history expression: {h!r}")
        if record:
            self.trail.append(TrailStep(rule, h, Ann(d, strip_annotations(h)), path))
        return d

    def mu(self, h: Mu, env: Mapping[str, MetricValue]) -> MetricValue:
        def phi(d: MetricValue) -> MetricValue:
            return self.bound(h.body, {**env, h.var: d}, (), record=False)

        current = self.s.zero
        acc: MetricValue | None = None
        for _ in range(self.K):
            nxt = phi(current)
            acc = nxt if acc is None else inv_plus(acc, nxt)
            if nxt == current:
                return acc
            current = nxt
        return self.s.zero


def normalize(
    h: HistExpr,
    semiring: Semiring | None = None,
    mu_iters: int = DEFAULT_MU_ITERS,
    env: Mapping[str, MetricValue] | None = None,
) -> NormalForm:
    """Metric normal form of ``h`` with the rewrite trail and framing bounds."""
    s = semiring or semiring_of(h)
    n = _Normalizer(s, mu_iters)
    d = n.bound(h, dict(env or {}), (), record=True)
    return NormalForm(d, strip_annotations(h), tuple(n.trail), tuple(n.frames))


def mu_bound(
    var: str, body: HistExpr, semiring: Semiring, mu_iters: int = DEFAULT_MU_ITERS
) -> MetricValue:
    """Bound of ``μvar.body``: the worst of ``Φ^n(zero)`` for ``n = 1..K``,
    stopping at a fixed point; ``zero`` when none is reached."""
    from .history import free_hvars

    extra = free_hvars(body) - {var}
    if extra:
        raise HistoryError(f"μ{var} body has other free variables {sorted(extra)}")
    return _Normalizer(semiring, mu_iters).mu(Mu(var, body), {})


def bound_of(h: HistExpr, semiring: Semiring | None = None, mu_iters: int = DEFAULT_MU_ITERS) -> MetricValue:
    """Just the normal-form bound (no trail)."""
    s = semiring or semiring_of(h)
    return _Normalizer(s, mu_iters).bound(h, {}, (), record=False)
