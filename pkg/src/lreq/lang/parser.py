"""Recursive-descent parser for the textual service language.

Grammar (``;`` binds loosest and associates to the right; a lambda or
``fun`` body extends as far right as possible; the ``else`` branch of a
conditional does not swallow a following ``;``)::

    expr    ::= nonseq [ ";" expr ]
    nonseq  ::= "\\" IDENT [":" DOM] "->" expr
              | "fun" IDENT "(" IDENT [":" DOM] ")" "=" expr
              | "if" IDENT "then" expr "else" nonseq
              | app
    app     ::= atom { atom }
    atom    ::= "*" | RESOURCE | VAR | ACTION "(" expr ")" | "(" expr ")"
              | "sec" STRING "{" expr "}"
              | "met" METRIC ("<=" | ">=") VALUE "{" expr "}"
              | "req" IDENT ":" DOM ("->" | "-[" annots "]->") DOM
              | "fork" "{" expr "}" "and" "{" expr "}"
    annots  ::= annot { "," annot }
    annot   ::= "sec" STRING | "met" METRIC ("<=" | ">=") VALUE

Resources start with an upper-case letter, variables with a lower-case
letter or underscore.  ``act(e)`` is an event only when the parenthesis
touches the action name; ``f (e)`` is an application.  ``--`` starts a
comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import AlgebraError, ParseError
from ..semiring import MetricCheck, get_semiring
from .syntax import (
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
    SecFrame,
    Sequence,
    Signature,
    Unit,
    Var,
)

KEYWORDS = frozenset({"if", "then", "else", "fun", "fork", "and", "sec", "met", "req"})

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--(?![>\[])[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?|∞)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>\]->|-\[|->|<=|>=|[*(){};:\\=,λ])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: tuple[int, int]
    adjacent: bool


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    prev_end = -1
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise ParseError(f"unexpected character {source[i]!r}", (line, col))
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            if kind == "sym" and text == "λ":
                text = "\\"
            tokens.append(Token(kind, text, (line, col), adjacent=(prev_end == i)))
            prev_end = m.end()
        else:
            prev_end = -1
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        i = m.end()
    tokens.append(Token("eof", "", (line, col), False))
    return tokens


class _Parser:
    def __init__(self, source: str, signature: Signature | None):
        self.tokens = tokenize(source)
        self.i = 0
        self.sig = signature
        self.rids: set[str] = set()

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "ident") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        return self.advance()

    def fail(self, message: str, pos=None):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"{message}, found {found}", pos or t.pos)

    def ident(self, what: str) -> Token:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            self.fail(f"expected {what}")
        return self.advance()

    # -- resolution ------------------------------------------------------------

    def domain(self) -> str:
        t = self.ident("a domain name")
        if self.sig is not None and t.text != UNIT_TYPE_NAME and t.text not in self.sig.domains:
            raise ParseError(f"unknown resource domain {t.text}", t.pos)
        return t.text

    def check(self) -> MetricCheck:
        name = self.ident("a metric name")
        try:
            semiring = get_semiring(name.text)
        except AlgebraError:
            raise ParseError(f"unknown metric {name.text}", name.pos) from None
        op = self.tok
        if not (self.at("<=") or self.at(">=")):
            self.fail("expected '<=' or '>='")
        self.advance()
        if op.text != semiring.check_symbol:
            raise ParseError(
                f"{semiring.name} thresholds are written with {semiring.check_symbol!r}", op.pos
            )
        v = self.tok
        if v.kind not in ("number", "ident", "string"):
            self.fail("expected a threshold value")
        self.advance()
        text = v.text[1:-1] if v.kind == "string" else v.text
        try:
            return MetricCheck(semiring.name, semiring.parse(text))
        except AlgebraError as exc:
            raise ParseError(str(exc), v.pos) from None

    def policy(self) -> str:
        t = self.tok
        if t.kind != "string":
            self.fail("expected a quoted policy name")
        self.advance()
        name = t.text[1:-1]
        if self.sig is not None and self.sig.policies is not None and name not in self.sig.policies:
            raise ParseError(f"unknown policy {name!r}", t.pos)
        return name

    # -- grammar ---------------------------------------------------------------

    def program(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            self.fail("unexpected trailing input")
        return e

    def expr(self) -> Expr:
        first = self.nonseq()
        if self.at(";"):
            t = self.advance()
            return Sequence(first, self.expr(), pos=t.pos)
        return first

    def nonseq(self) -> Expr:
        t = self.tok
        if self.at("\\"):
            self.advance()
            param = self.ident("a parameter name").text
            ptype = None
            if self.at(":"):
                self.advance()
                ptype = self.domain()
            self.expect("->")
            return Abs(None, param, self.expr(), ptype, pos=t.pos)
        if self.at("fun"):
            self.advance()
            self_name = self.ident("a function name").text
            self.expect("(")
            param = self.ident("a parameter name").text
            ptype = None
            if self.at(":"):
                self.advance()
                ptype = self.domain()
            self.expect(")")
            self.expect("=")
            return Abs(self_name, param, self.expr(), ptype, pos=t.pos)
        if self.at("if"):
            self.advance()
            g = self.ident("a guard name")
            if self.sig is not None and self.sig.guards is not None and g.text not in self.sig.guards:
                raise ParseError(f"unknown guard {g.text}", g.pos)
            self.expect("then")
            then = self.expr()
            self.expect("else")
            return If(g.text, then, self.nonseq(), pos=t.pos)
        return self.app()

    def starts_atom(self) -> bool:
        t = self.tok
        if t.kind == "ident":
            return t.text not in KEYWORDS or t.text in ("sec", "met", "req", "fork")
        return t.kind == "sym" and t.text in ("*", "(")

    def app(self) -> Expr:
        if not self.starts_atom():
            self.fail("expected an expression")
        e = self.atom()
        while self.starts_atom():
            pos = self.tok.pos
            e = App(e, self.atom(), pos=pos)
        return e

    def atom(self) -> Expr:
        t = self.tok
        if self.at("*"):
            self.advance()
            return Unit(pos=t.pos)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if self.at("sec"):
            self.advance()
            name = self.policy()
            body = self.braced()
            return SecFrame(name, body, pos=t.pos)
        if self.at("met"):
            self.advance()
            check = self.check()
            return MetFrame(check, self.braced(), pos=t.pos)
        if self.at("fork"):
            self.advance()
            left = self.braced()
            self.expect("and")
            return Fork(left, self.braced(), pos=t.pos)
        if self.at("req"):
            return self.request()
        name = self.ident("an expression").text
        nxt = self.tok
        if nxt.kind == "sym" and nxt.text == "(" and nxt.adjacent and not name[0].isupper():
            self.advance()
            arg = self.expr()
            self.expect(")")
            return Event(name, arg, pos=t.pos)
        if name[0].isupper():
            domain = None
            if self.sig is not None:
                domain = self.sig.domain_of(name)
                if domain is None:
                    raise ParseError(f"unknown resource {name}", t.pos)
            return Res(name, domain, pos=t.pos)
        return Var(name, pos=t.pos)

    def braced(self) -> Expr:
        self.expect("{")
        e = self.expr()
        self.expect("}")
        return e

    def request(self) -> Req:
        t = self.expect("req")
        rid = self.ident("a request identifier")
        if rid.text in self.rids:
            raise ParseError(f"duplicate request identifier {rid.text}", rid.pos)
        self.rids.add(rid.text)
        self.expect(":")
        src = self.domain()
        policy = check = None
        if self.at("-["):
            self.advance()
            while True:
                if self.at("sec") and policy is None:
                    self.advance()
                    policy = self.policy()
                elif self.at("met") and check is None:
                    self.advance()
                    check = self.check()
                else:
                    self.fail("expected a 'sec' or 'met' annotation")
                if self.at(","):
                    self.advance()
                    continue
                break
            self.expect("]->")
        else:
            self.expect("->")
        dst = self.domain()
        return Req(rid.text, src, dst, policy, check, pos=t.pos)


def parse(source: str, signature: Signature | None = None) -> Expr:
    """Parse a program.  With a signature, every resource, domain, guard and
    policy name must be declared in it."""
    return _Parser(source, signature).program()
