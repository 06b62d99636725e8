"""Elimination of the surface abbreviations.

* ``e ; e'`` becomes ``(fun _(_) = e') e``;
* ``fork { e } and { e' }`` becomes ``((fun _(_) = \\x -> x) e') e``, so the
  two branches are evaluated as the two sides of an application;
* ``\\x -> e`` receives a fresh, unused self name;
* an annotated request applied to an argument becomes a security framing
  around a metric framing around the plain request application.

Fresh names carry a prefix the lexer cannot produce, so they never clash
with user identifiers.
"""

from __future__ import annotations

import itertools

from .syntax import (
    FRESH_PREFIX,
    Abs,
    App,
    Event,
    Expr,
    Fork,
    If,
    MetFrame,
    Req,
    SecFrame,
    Sequence,
    Var,
)


class _Fresh:
    def __init__(self):
        self._counter = itertools.count(1)

    def __call__(self) -> str:
        return f"{FRESH_PREFIX}{next(self._counter)}"


def _frame(req: Req, arg: Expr, pos) -> Expr:
    core: Expr = App(Req(req.rid, req.input, req.output, pos=req.pos), arg, pos=pos)
    if req.check is not None:
        core = MetFrame(req.check, core, pos=pos)
    if req.policy is not None:
        core = SecFrame(req.policy, core, pos=pos)
    return core


def desugar(e: Expr) -> Expr:
    """Return the core term denoted by ``e``; idempotent."""
    return _desugar(e, _Fresh())


def _desugar(e: Expr, fresh: _Fresh) -> Expr:
    d = lambda x: _desugar(x, fresh)  # noqa: E731
    if isinstance(e, Sequence):
        return App(Abs(fresh(), fresh(), d(e.second), pos=e.pos), d(e.first), pos=e.pos)
    if isinstance(e, Fork):
        x = fresh()
        ident = Abs(fresh(), x, Var(x, pos=e.pos), pos=e.pos)
        first = App(Abs(fresh(), fresh(), ident, pos=e.pos), d(e.right), pos=e.pos)
        return App(first, d(e.left), pos=e.pos)
    if isinstance(e, Abs):
        self_name = e.self_name if e.self_name is not None else fresh()
        return Abs(self_name, e.param, d(e.body), e.param_type, pos=e.pos)
    if isinstance(e, App):
        if isinstance(e.fn, Req) and e.fn.annotated:
            return _frame(e.fn, d(e.arg), e.pos)
        return App(d(e.fn), d(e.arg), pos=e.pos)
    if isinstance(e, Req) and e.annotated:
        x = fresh()
        body = _frame(e, Var(x, pos=e.pos), e.pos)
        return Abs(fresh(), x, body, e.input, pos=e.pos)
    if isinstance(e, Event):
        return Event(e.action, d(e.arg), pos=e.pos)
    if isinstance(e, If):
        return If(e.guard, d(e.then), d(e.else_), pos=e.pos)
    if isinstance(e, SecFrame):
        return SecFrame(e.policy, d(e.body), pos=e.pos)
    if isinstance(e, MetFrame):
        return MetFrame(e.check, d(e.body), pos=e.pos)
    return e
