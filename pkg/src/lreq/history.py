"""History expressions, their bounded trace semantics, and a text syntax.

Text syntax (also produced by :func:`render`), loosest binding first::

    μh.H            recursion (``mu h. H`` accepted); the body extends right
    H + H'          choice
    H | H'          parallel composition
    H · H'          sequence (``.`` accepted)
    M[d]H           metric annotation
    sec[phi](H)     security framing
    met[RISK<=75](H) metric framing
    ε  h  act(RES)  empty history (``eps`` accepted), variable, access event

Binary operators associate to the left.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

from .errors import AlgebraError, HistoryError, TraceSetOverflow
from .semiring import MetricCheck, MetricValue, Semiring, get_semiring
from .trace import Event, Marker

DEFAULT_DEPTH = 4
DEFAULT_TRACE_CAP = 100_000


class HistExpr:
    """Base class of history expressions."""

    __slots__ = ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True, repr=False)
class Eps(HistExpr):
    pass


@dataclass(frozen=True, repr=False)
class HVar(HistExpr):
    name: str


@dataclass(frozen=True, repr=False)
class Ev(HistExpr):
    action: str
    resource: str


@dataclass(frozen=True, repr=False)
class Seq(HistExpr):
    left: HistExpr
    right: HistExpr


@dataclass(frozen=True, repr=False)
class Choice(HistExpr):
    left: HistExpr
    right: HistExpr


@dataclass(frozen=True, repr=False)
class Par(HistExpr):
    left: HistExpr
    right: HistExpr


@dataclass(frozen=True, repr=False)
class Ann(HistExpr):
    value: MetricValue
    body: HistExpr


@dataclass(frozen=True, repr=False)
class SecF(HistExpr):
    policy: str
    body: HistExpr


@dataclass(frozen=True, repr=False)
class MetF(HistExpr):
    check: MetricCheck
    body: HistExpr


@dataclass(frozen=True, repr=False)
class Mu(HistExpr):
    var: str
    body: HistExpr


for _cls in (Eps, HVar, Ev, Seq, Choice, Par, Ann, SecF, MetF, Mu):
    _cls.__repr__ = lambda self: f"<{render(self)}>"

EPS = Eps()


# -- construction helpers --------------------------------------------------------


def seq(a: HistExpr, b: HistExpr) -> HistExpr:
    """Sequence, dropping ε operands."""
    if isinstance(a, Eps):
        return b
    if isinstance(b, Eps):
        return a
    return Seq(a, b)


def par(a: HistExpr, b: HistExpr) -> HistExpr:
    """Parallel composition, dropping ε operands."""
    if isinstance(a, Eps):
        return b
    if isinstance(b, Eps):
        return a
    return Par(a, b)


def choice_of(parts: Iterable[HistExpr]) -> HistExpr:
    """Left-nested choice over ``parts`` (ε for an empty sequence)."""
    out: HistExpr | None = None
    for p in parts:
        out = p if out is None else Choice(out, p)
    return EPS if out is None else out


def children(h: HistExpr) -> tuple[HistExpr, ...]:
    if isinstance(h, (Seq, Choice, Par)):
        return (h.left, h.right)
    if isinstance(h, (Ann, SecF, MetF, Mu)):
        return (h.body,)
    return ()


def walk(h: HistExpr) -> Iterable[HistExpr]:
    stack = [h]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_hvars(h: HistExpr) -> frozenset[str]:
    if isinstance(h, HVar):
        return frozenset((h.name,))
    if isinstance(h, Mu):
        return free_hvars(h.body) - {h.var}
    out: frozenset[str] = frozenset()
    for c in children(h):
        out |= free_hvars(c)
    return out


def strip_annotations(h: HistExpr) -> HistExpr:
    if isinstance(h, Ann):
        return strip_annotations(h.body)
    if isinstance(h, (Seq, Choice, Par)):
        return type(h)(strip_annotations(h.left), strip_annotations(h.right))
    if isinstance(h, (SecF, MetF)):
        return type(h)(h.policy if isinstance(h, SecF) else h.check, strip_annotations(h.body))
    if isinstance(h, Mu):
        return Mu(h.var, strip_annotations(h.body))
    return h


def has_annotations(h: HistExpr) -> bool:
    return any(isinstance(n, Ann) for n in walk(h))


def policies_of(h: HistExpr) -> frozenset[str]:
    return frozenset(n.policy for n in walk(h) if isinstance(n, SecF))


def replace(h: HistExpr, table: Mapping[HistExpr, HistExpr]) -> HistExpr:
    """Replace every subexpression found in ``table`` (outermost first)."""
    if h in table:
        return table[h]
    if isinstance(h, (Seq, Choice, Par)):
        return type(h)(replace(h.left, table), replace(h.right, table))
    if isinstance(h, Ann):
        return Ann(h.value, replace(h.body, table))
    if isinstance(h, SecF):
        return SecF(h.policy, replace(h.body, table))
    if isinstance(h, MetF):
        return MetF(h.check, replace(h.body, table))
    if isinstance(h, Mu):
        return Mu(h.var, replace(h.body, table))
    return h


# -- denotational semantics -----------------------------------------------------------


@dataclass(frozen=True)
class TraceSet:
    """A finite set of traces; ``truncated`` records that some recursion was
    cut at the unfolding bound, so the set may be a strict under-approximation."""

    traces: frozenset
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __contains__(self, trace) -> bool:
        return tuple(trace) in self.traces

    def stripped(self) -> frozenset:
        return frozenset(tuple(i for i in t if isinstance(i, Event)) for t in self.traces)


@lru_cache(maxsize=200_000)
def _interleave(x: tuple, y: tuple) -> frozenset:
    if not y:
        return frozenset((x,))
    a, rest = y[0], y[1:]
    out = set()
    for i in range(len(x) + 1):
        head, tail = x[:i], x[i:]
        for t in _interleave(rest, tail):
            out.add(head + (a,) + t)
    return frozenset(out)


def interleave(x: Iterable, y: Iterable) -> frozenset:
    """All shuffles of ``x`` and ``y`` that keep each input's internal order.

    Follows the two-case definition: the empty second trace gives ``{x}``;
    otherwise, for every split ``x = x1 x2``, the first item ``a`` of ``y``
    is placed after ``x1`` and followed by a shuffle of the rest of ``y``
    with ``x2``.
    """
    return _interleave(tuple(x), tuple(y))


def _check_cap(size: int, cap: int, h: HistExpr) -> None:
    if size > cap:
        raise TraceSetOverflow(
            f"denotation exceeds {cap} traces at {render(h)}", subterm=h
        )


def denote(
    h: HistExpr,
    env: Mapping[str, TraceSet | Iterable] | None = None,
    depth: int = DEFAULT_DEPTH,
    cap: int = DEFAULT_TRACE_CAP,
) -> TraceSet:
    """Traces of ``h`` with every recursion unfolded at most ``depth`` times.

    ``μh.H`` denotes the union of ``f(ε), f(f(ε)), ...`` up to ``depth``
    iterates, where ``f(X)`` is the denotation of ``H`` with ``h`` bound to
    ``X``.  Iteration stops early at a fixed point; otherwise the result is
    flagged as truncated.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    bound: dict[str, TraceSet] = {}
    for name, value in (env or {}).items():
        if not isinstance(value, TraceSet):
            value = TraceSet(frozenset(tuple(t) for t in value))
        bound[name] = value
    return _denote(h, bound, depth, cap)


def _denote(h: HistExpr, env: dict, depth: int, cap: int) -> TraceSet:
    if isinstance(h, Eps):
        return TraceSet(frozenset(((),)))
    if isinstance(h, Ev):
        return TraceSet(frozenset(((Event(h.action, h.resource),),)))
    if isinstance(h, HVar):
        if h.name not in env:
            raise HistoryError(f"unbound history variable {h.name}")
        return env[h.name]
    if isinstance(h, Ann):
        return _denote(h.body, env, depth, cap)
    if isinstance(h, (SecF, MetF)):
        inner = _denote(h.body, env, depth, cap)
        frame = h.policy if isinstance(h, SecF) else h.check
        start, end = (Marker(True, frame),), (Marker(False, frame),)
        return TraceSet(frozenset(start + t + end for t in inner.traces), inner.truncated)
    if isinstance(h, Choice):
        a = _denote(h.left, env, depth, cap)
        b = _denote(h.right, env, depth, cap)
        out = a.traces | b.traces
        _check_cap(len(out), cap, h)
        return TraceSet(out, a.truncated or b.truncated)
    if isinstance(h, Seq):
        a = _denote(h.left, env, depth, cap)
        b = _denote(h.right, env, depth, cap)
        out = set()
        for x in a.traces:
            for y in b.traces:
                out.add(x + y)
            _check_cap(len(out), cap, h)
        return TraceSet(frozenset(out), a.truncated or b.truncated)
    if isinstance(h, Par):
        a = _denote(h.left, env, depth, cap)
        b = _denote(h.right, env, depth, cap)
        out = set()
        for x in a.traces:
            for y in b.traces:
                out |= _interleave(x, y)
                _check_cap(len(out), cap, h)
        return TraceSet(frozenset(out), a.truncated or b.truncated)
    if isinstance(h, Mu):
        previous = TraceSet(frozenset(((),)))
        union: set = set()
        truncated = False
        reached_fixpoint = False
        for _ in range(depth):
            current = _denote(h.body, {**env, h.var: previous}, depth, cap)
            truncated = truncated or current.truncated
            union |= current.traces
            _check_cap(len(union), cap, h)
            if current.traces == previous.traces:
                reached_fixpoint = True
                break
            previous = current
        return TraceSet(frozenset(union), truncated or not reached_fixpoint)
    raise HistoryError(f"not a history expression: {h!r}")


def subsumes(
    h: HistExpr, h2: HistExpr, depth: int = DEFAULT_DEPTH, cap: int = DEFAULT_TRACE_CAP
) -> bool:
    """Bounded check of ``h ⊑ h2``: every (marker-free) trace of ``h`` is a
    trace of ``h2``.  Exact when neither denotation is truncated."""
    return denote(h, None, depth, cap).stripped() <= denote(h2, None, depth, cap).stripped()


# -- rendering --------------------------------------------------------------------------

_MU, _CHOICE, _PAR, _SEQ, _PREFIX = range(5)


def render(h: HistExpr) -> str:
    return _render(h, _MU)


def _render(h: HistExpr, ctx: int) -> str:
    def wrap(text: str, level: int) -> str:
        return f"({text})" if ctx > level else text

    if isinstance(h, Eps):
        return "ε"
    if isinstance(h, HVar):
        return h.name
    if isinstance(h, Ev):
        return f"{h.action}({h.resource})"
    if isinstance(h, Mu):
        return wrap(f"μ{h.var}.{_render(h.body, _MU)}", _MU)
    if isinstance(h, Choice):
        return wrap(f"{_render(h.left, _CHOICE)} + {_render(h.right, _PAR)}", _CHOICE)
    if isinstance(h, Par):
        return wrap(f"{_render(h.left, _PAR)} | {_render(h.right, _SEQ)}", _PAR)
    if isinstance(h, Seq):
        return wrap(f"{_render(h.left, _SEQ)} · {_render(h.right, _PREFIX)}", _SEQ)
    if isinstance(h, Ann):
        return f"M[{h.value}]{_render(h.body, _PREFIX)}"
    if isinstance(h, SecF):
        return f"sec[{h.policy}]({_render(h.body, _MU)})"
    if isinstance(h, MetF):
        c = h.check
        return f"met[{c.metric}{c.semiring.check_symbol}{c.threshold}]({_render(h.body, _MU)})"
    raise HistoryError(f"not a history expression: {h!r}")


def to_json(h: HistExpr):
    """Structured form of ``h`` for machine-readable reports."""
    if isinstance(h, Eps):
        return {"eps": True}
    if isinstance(h, HVar):
        return {"var": h.name}
    if isinstance(h, Ev):
        return {"event": h.action, "resource": h.resource}
    if isinstance(h, (Seq, Choice, Par)):
        return {type(h).__name__.lower(): [to_json(h.left), to_json(h.right)]}
    if isinstance(h, Ann):
        return {"ann": h.value.to_json(), "body": to_json(h.body)}
    if isinstance(h, SecF):
        return {"sec": h.policy, "body": to_json(h.body)}
    if isinstance(h, MetF):
        return {"met": str(h.check), "body": to_json(h.body)}
    if isinstance(h, Mu):
        return {"mu": h.var, "body": to_json(h.body)}
    raise HistoryError(f"not a history expression: {h!r}")


# -- parsing ----------------------------------------------------------------------------

_TOKENS = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<ann>M\[[^\]]*\])
  | (?P<sec>sec\[[^\]]*\])
  | (?P<met>met\[[^\]]*\])
  | (?P<eps>ε|eps\b)
  | (?P<mu>μ|mu\b)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>[·.+|()])
    """,
    re.VERBOSE,
)
_CHECK = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*(<=|>=)\s*(.+?)\s*$")


class _HistParser:
    def __init__(self, text: str, semiring: Semiring):
        self.semiring = semiring
        self.toks: list[tuple[str, str, int]] = []
        i = 0
        while i < len(text):
            m = _TOKENS.match(text, i)
            if m is None:
                raise HistoryError(f"unexpected character {text[i]!r} at offset {i}")
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, m.group(), i))
            i = m.end()
        self.toks.append(("eof", "", len(text)))
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.toks[self.i]

    def take(self, kind: str, text: str | None = None) -> str:
        k, t, off = self.peek()
        if k != kind or (text is not None and t != text):
            want = text or kind
            raise HistoryError(f"expected {want!r} at offset {off}, found {t or 'end'!r}")
        self.i += 1
        return t

    def is_sym(self, *texts: str) -> bool:
        k, t, _ = self.peek()
        return k == "sym" and t in texts

    def top(self) -> HistExpr:
        h = self.mu()
        if self.peek()[0] != "eof":
            raise HistoryError(f"unexpected trailing input at offset {self.peek()[2]}")
        return h

    def mu(self) -> HistExpr:
        if self.peek()[0] == "mu":
            self.i += 1
            var = self.take("ident")
            if not self.is_sym(".", "·"):
                raise HistoryError(f"expected '.' after μ{var}")
            self.i += 1
            return Mu(var, self.mu())
        return self.binary(_CHOICE)

    def binary(self, level: int) -> HistExpr:
        if level == _PREFIX:
            return self.prefix()
        ops = {_CHOICE: ("+",), _PAR: ("|",), _SEQ: ("·", ".")}[level]
        cls = {_CHOICE: Choice, _PAR: Par, _SEQ: Seq}[level]
        left = self.binary(level + 1)
        while self.is_sym(*ops):
            self.i += 1
            left = cls(left, self.binary(level + 1))
        return left

    def prefix(self) -> HistExpr:
        kind, text, off = self.peek()
        if kind == "ann":
            self.i += 1
            try:
                value = self.semiring.parse(text[2:-1])
            except AlgebraError as exc:
                raise HistoryError(f"bad annotation at offset {off}: {exc}") from None
            return Ann(value, self.prefix())
        if kind in ("sec", "met"):
            self.i += 1
            inner = text[4:-1].strip()
            self.take("sym", "(")
            body = self.mu()
            self.take("sym", ")")
            if kind == "sec":
                return SecF(inner.strip('"'), body)
            return MetF(_parse_check(inner), body)
        return self.atom()

    def atom(self) -> HistExpr:
        kind, text, off = self.peek()
        if kind == "eps":
            self.i += 1
            return EPS
        if kind == "mu":
            return self.mu()
        if kind == "ident":
            self.i += 1
            if self.is_sym("("):
                self.i += 1
                res = self.take("ident")
                self.take("sym", ")")
                return Ev(text, res)
            return HVar(text)
        if self.is_sym("("):
            self.i += 1
            h = self.mu()
            self.take("sym", ")")
            return h
        raise HistoryError(f"expected a history expression at offset {off}")


def _parse_check(text: str) -> MetricCheck:
    m = _CHECK.match(text)
    if m is None:
        raise HistoryError(f"malformed metric check {text!r}")
    try:
        s = get_semiring(m.group(1))
        if m.group(2) != s.check_symbol:
            raise HistoryError(f"{s.name} checks are written with {s.check_symbol}")
        return MetricCheck(s.name, s.parse(m.group(3)))
    except AlgebraError as exc:
        raise HistoryError(str(exc)) from None


def parse_history(text: str, semiring: Semiring | str = "RISK") -> HistExpr:
    """Read the text syntax; annotation values belong to ``semiring``."""
    if isinstance(semiring, str):
        semiring = get_semiring(semiring)
    return _HistParser(text, semiring).top()
