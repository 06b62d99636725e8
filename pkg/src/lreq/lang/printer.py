"""Canonical source rendering; ``parse(show(e)) == e`` for parsed terms."""

from __future__ import annotations

import re

from ..semiring import MetricCheck
from .syntax import (
    Abs,
    App,
    Event,
    Expr,
    Fork,
    If,
    MetFrame,
    Req,
    Res,
    SecFrame,
    Sequence,
    Unit,
    Var,
)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")


def show_check(check: MetricCheck) -> str:
    raw = check.threshold.to_json()
    if isinstance(raw, str) and not _IDENT.match(raw) and raw != "inf":
        text = '"' + raw + '"'
    else:
        text = str(raw)
    return f"{check.metric} {check.semiring.check_symbol} {text}"


def show(e: Expr) -> str:
    return _expr(e)


def _expr(e: Expr) -> str:
    if isinstance(e, Sequence):
        return f"{_nonseq(e.first, tail=False)} ; {_expr(e.second)}"
    return _nonseq(e, tail=True)


def _nonseq(e: Expr, tail: bool) -> str:
    if isinstance(e, Abs):
        ann = f" : {e.param_type}" if e.param_type else ""
        if e.self_name is None:
            text = f"\\{e.param}{ann} -> {_expr(e.body)}"
        else:
            text = f"fun {e.self_name}({e.param}{ann}) = {_expr(e.body)}"
        return text if tail else f"({text})"
    if isinstance(e, If):
        else_ = _nonseq(e.else_, tail)
        return f"if {e.guard} then {_expr(e.then)} else {else_}"
    if isinstance(e, App):
        return _app(e)
    if isinstance(e, Sequence):
        return f"({_expr(e)})"
    return _atom(e)


def _app(e: App) -> str:
    fn = _app(e.fn) if isinstance(e.fn, App) else _atom(e.fn, fn_position=True)
    return f"{fn} {_atom(e.arg)}"


def _atom(e: Expr, fn_position: bool = False) -> str:
    if isinstance(e, Unit):
        return "*"
    if isinstance(e, Res):
        return e.name
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Event):
        return f"{e.action}({_expr(e.arg)})"
    if isinstance(e, SecFrame):
        return f'sec "{e.policy}" {{ {_expr(e.body)} }}'
    if isinstance(e, MetFrame):
        return f"met {show_check(e.check)} {{ {_expr(e.body)} }}"
    if isinstance(e, Fork):
        return f"fork {{ {_expr(e.left)} }} and {{ {_expr(e.right)} }}"
    if isinstance(e, Req):
        if e.annotated:
            parts = []
            if e.policy is not None:
                parts.append(f'sec "{e.policy}"')
            if e.check is not None:
                parts.append(f"met {show_check(e.check)}")
            arrow = f"-[{', '.join(parts)}]->"
        else:
            arrow = "->"
        text = f"req {e.rid} : {e.input} {arrow} {e.output}"
        return f"({text})" if fn_position else text
    return f"({_expr(e)})"
