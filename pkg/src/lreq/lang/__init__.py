"""The service language: syntax, parser, printer and desugaring."""

from .desugar import desugar
from .parser import parse, tokenize
from .printer import show, show_check
from .syntax import (
    FRESH_PREFIX,
    UNIT_TYPE_NAME,
    Abs,
    App,
    Event,
    Expr,
    Fork,
    If,
    MetFrame,
    Req,
    Res,
    ResourceDomain,
    SecFrame,
    Sequence,
    Signature,
    Unit,
    Var,
    free_vars,
    is_value,
    requests,
    walk,
)

__all__ = [
    "FRESH_PREFIX", "UNIT_TYPE_NAME", "Abs", "App", "Event", "Expr", "Fork", "If",
    "MetFrame", "Req", "Res", "ResourceDomain", "SecFrame", "Sequence", "Signature",
    "Unit", "Var", "desugar", "free_vars", "is_value", "parse", "requests", "show",
    "show_check", "tokenize", "walk",
]
