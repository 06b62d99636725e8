"""Metric algebras.

A c*-semiring is a c-semiring whose sum always picks one of its two
operands.  That choice induces a total order (``leq``): ``a <= b`` iff
``plus(a, b) == b``, so the sum returns the better value and ``inv_plus``
the worse one.  Risk is the tropical semiring (lower is better, losses add
up); Trust is the possibilistic one (higher is better, probabilities
multiply).  Further finite semirings can be registered from Cayley tables.
"""

from __future__ import annotations

import math
import numbers
import operator
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

from .errors import AlgebraError, ConfigError


class Semiring:
    """A c*-semiring ``<D, plus, times, zero, one>`` over raw domain values.

    ``check_symbol`` is the operator used to write a threshold check in the
    metric's natural notation: ``<=`` for Risk ("risk at most 75"), ``>=``
    for Trust and for user-defined semirings (read as ``>=_T``).
    """

    def __init__(
        self,
        name: str,
        zero: Hashable,
        one: Hashable,
        plus: Callable[[Any, Any], Any],
        times: Callable[[Any, Any], Any],
        contains: Callable[[Any], bool],
        *,
        check_symbol: str = ">=",
        parse_value: Callable[[str], Any] | None = None,
        format_value: Callable[[Any], str] | None = None,
        to_json: Callable[[Any], Any] | None = None,
        elements: Sequence[Hashable] | None = None,
    ):
        self.name = name.upper()
        self._zero = zero
        self._one = one
        self._plus = plus
        self._times = times
        self._contains = contains
        self.check_symbol = check_symbol
        self._parse_value = parse_value
        self._format_value = format_value or str
        self._to_json = to_json or (lambda raw: raw)
        self.elements = tuple(elements) if elements is not None else None

    def __repr__(self) -> str:
        return f"Semiring({self.name})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Semiring) and other.name == self.name

    def __hash__(self) -> int:
        return hash(("Semiring", self.name))

    @property
    def zero(self) -> MetricValue:
        return MetricValue(self, self._zero)

    @property
    def one(self) -> MetricValue:
        return MetricValue(self, self._one)

    @property
    def is_finite(self) -> bool:
        return self.elements is not None

    def contains(self, raw: Any) -> bool:
        try:
            return bool(self._contains(raw))
        except TypeError:
            return False

    def value(self, raw: Any) -> MetricValue:
        if isinstance(raw, MetricValue):
            if raw.semiring != self:
                raise AlgebraError(f"{raw} is not a {self.name} value")
            return raw
        if not self.contains(raw):
            raise AlgebraError(f"{raw!r} is not in the domain of {self.name}")
        return MetricValue(self, raw)

    def parse(self, text: str) -> MetricValue:
        if self._parse_value is None:
            raise AlgebraError(f"{self.name} has no textual value syntax")
        try:
            raw = self._parse_value(text)
        except (ValueError, KeyError) as exc:
            raise AlgebraError(f"cannot read {text!r} as a {self.name} value") from exc
        return self.value(raw)

    def format(self, raw: Any) -> str:
        return self._format_value(raw)

    def json_value(self, raw: Any) -> Any:
        return self._to_json(raw)


@dataclass(frozen=True)
class MetricValue:
    semiring: Semiring
    value: Any

    def __str__(self) -> str:
        return self.semiring.format(self.value)

    def __repr__(self) -> str:
        return f"{self.semiring.name}({self.semiring.format(self.value)})"

    def to_json(self) -> Any:
        return self.semiring.json_value(self.value)


@dataclass(frozen=True)
class MetricCheck:
    """A threshold constraint ``metric >=_T threshold``."""

    metric: str
    threshold: MetricValue

    def __post_init__(self):
        if self.threshold.semiring.name != self.metric.upper():
            raise AlgebraError(
                f"threshold {self.threshold!r} does not belong to metric {self.metric}"
            )
        object.__setattr__(self, "metric", self.metric.upper())

    @property
    def semiring(self) -> Semiring:
        return self.threshold.semiring

    def __str__(self) -> str:
        return f"{self.metric} {self.semiring.check_symbol} {self.threshold}"


def _same(a: MetricValue, b: MetricValue) -> Semiring:
    if not isinstance(a, MetricValue) or not isinstance(b, MetricValue):
        raise AlgebraError(f"expected metric values, got {a!r} and {b!r}")
    if a.semiring != b.semiring:
        raise AlgebraError(
            f"cannot combine {a.semiring.name} and {b.semiring.name} values"
        )
    return a.semiring


def plus(a: MetricValue, b: MetricValue) -> MetricValue:
    s = _same(a, b)
    return MetricValue(s, s._plus(a.value, b.value))


def times(a: MetricValue, b: MetricValue) -> MetricValue:
    s = _same(a, b)
    return MetricValue(s, s._times(a.value, b.value))


def inv_plus(a: MetricValue, b: MetricValue) -> MetricValue:
    """The operand rejected by ``plus``: the worse of the two (``a`` on ties)."""
    s = _same(a, b)
    if s._plus(a.value, b.value) == b.value:
        return a
    return b


def leq(a: MetricValue, b: MetricValue) -> bool:
    """``a <=_T b``: ``b`` is at least as good as ``a``."""
    s = _same(a, b)
    return s._plus(a.value, b.value) == b.value


def satisfies(d: MetricValue, check: MetricCheck) -> bool:
    if d.semiring.name != check.metric:
        raise AlgebraError(f"{d!r} cannot be checked against {check}")
    return leq(check.threshold, d)


def times_all(values: Iterable[MetricValue], semiring: Semiring) -> MetricValue:
    acc = semiring.one
    for v in values:
        acc = times(acc, v)
    return acc


# -- built-in semirings ------------------------------------------------------


def _is_number(x: Any) -> bool:
    return isinstance(x, numbers.Real) and not isinstance(x, bool) and not math.isnan(x)


def _parse_number(text: str) -> float | int:
    t = text.strip()
    if t in ("inf", "Infinity", "∞", "+inf"):
        return math.inf
    try:
        return int(t)
    except ValueError:
        return float(t)


def _format_number(x: Any) -> str:
    if x == math.inf:
        return "∞"
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return str(x)


def _number_json(x: Any) -> Any:
    if x == math.inf:
        return "inf"
    if isinstance(x, float) and x.is_integer():
        return int(x)
    return x


RISK = Semiring(
    "RISK",
    zero=math.inf,
    one=0,
    plus=min,
    times=operator.add,
    contains=lambda x: _is_number(x) and x >= 0,
    check_symbol="<=",
    parse_value=_parse_number,
    format_value=_format_number,
    to_json=_number_json,
)

TRUST = Semiring(
    "TRUST",
    zero=0,
    one=1,
    plus=max,
    times=operator.mul,
    contains=lambda x: _is_number(x) and 0 <= x <= 1,
    check_symbol=">=",
    parse_value=_parse_number,
    format_value=_format_number,
    to_json=_number_json,
)


_REGISTRY: dict[str, Semiring] = {"RISK": RISK, "TRUST": TRUST}


def get_semiring(name: str) -> Semiring:
    try:
        return _REGISTRY[name.upper()]
    except KeyError:
        raise AlgebraError(f"unknown semiring {name!r}") from None


def register_semiring(semiring: Semiring, *, replace: bool = False) -> Semiring:
    if semiring.name in _REGISTRY and not replace and _REGISTRY[semiring.name] is not semiring:
        raise AlgebraError(f"semiring {semiring.name} is already registered")
    _REGISTRY[semiring.name] = semiring
    return semiring


def unregister_semiring(name: str) -> None:
    if name.upper() in ("RISK", "TRUST"):
        raise AlgebraError("built-in semirings cannot be removed")
    _REGISTRY.pop(name.upper(), None)


# -- finite semirings from Cayley tables ---------------------------------------


def law_violations(s: Semiring, sample: Sequence[Any]) -> list[str]:
    """Every c*-semiring axiom that fails on ``sample`` (raw values).

    Exhaustive over ``sample``^3, so keep the sample small.
    """
    p, t = s._plus, s._times
    zero, one = s._zero, s._one
    problems: list[str] = []

    def bad(msg: str) -> None:
        if len(problems) < 20:
            problems.append(msg)

    for a in sample:
        if p(a, zero) != a or p(zero, a) != a:
            bad(f"zero is not a unit of plus at {a!r}")
        if t(a, one) != a or t(one, a) != a:
            bad(f"one is not a unit of times at {a!r}")
        if t(a, zero) != zero or t(zero, a) != zero:
            bad(f"zero does not absorb under times at {a!r}")
        if p(a, one) != one or p(one, a) != one:
            bad(f"one does not absorb under plus at {a!r}")
        if p(a, a) != a:
            bad(f"plus not idempotent at {a!r}")
        for b in sample:
            if p(a, b) != p(b, a):
                bad(f"plus not commutative at {a!r}, {b!r}")
            if t(a, b) != t(b, a):
                bad(f"times not commutative at {a!r}, {b!r}")
            if p(a, b) not in (a, b):
                bad(f"plus({a!r}, {b!r}) selects neither operand")
            for c in sample:
                if p(a, p(b, c)) != p(p(a, b), c):
                    bad(f"plus not associative at {a!r}, {b!r}, {c!r}")
                if t(a, t(b, c)) != t(t(a, b), c):
                    bad(f"times not associative at {a!r}, {b!r}, {c!r}")
                if t(a, p(b, c)) != p(t(a, b), t(a, c)):
                    bad(f"times does not distribute over plus at {a!r}, {b!r}, {c!r}")
    return problems


def finite_semiring(
    name: str,
    elements: Sequence[str],
    zero: str,
    one: str,
    plus_table: Sequence[Sequence[str]] | Mapping[str, Mapping[str, str]],
    times_table: Sequence[Sequence[str]] | Mapping[str, Mapping[str, str]],
    *,
    check_symbol: str = ">=",
) -> Semiring:
    """Build a finite semiring from Cayley tables and validate every axiom."""
    elems = [str(e) for e in elements]
    if len(set(elems)) != len(elems) or not elems:
        raise ConfigError(f"semiring {name}: elements must be distinct and non-empty")
    index = {e: i for i, e in enumerate(elems)}

    def table(raw, label):
        rows: dict[tuple[str, str], str] = {}
        if isinstance(raw, Mapping):
            for a in elems:
                for b in elems:
                    try:
                        rows[a, b] = str(raw[a][b])
                    except KeyError:
                        raise ConfigError(f"semiring {name}: {label} table misses ({a}, {b})") from None
        else:
            if len(raw) != len(elems) or any(len(r) != len(elems) for r in raw):
                raise ConfigError(f"semiring {name}: {label} table must be {len(elems)}x{len(elems)}")
            for i, a in enumerate(elems):
                for j, b in enumerate(elems):
                    rows[a, b] = str(raw[i][j])
        for v in rows.values():
            if v not in index:
                raise ConfigError(f"semiring {name}: {label} table yields unknown element {v!r}")
        return rows

    ptab = table(plus_table, "plus")
    ttab = table(times_table, "times")
    for e in (zero, one):
        if e not in index:
            raise ConfigError(f"semiring {name}: {e!r} is not an element")

    s = Semiring(
        name,
        zero=zero,
        one=one,
        plus=lambda a, b: ptab[a, b],
        times=lambda a, b: ttab[a, b],
        contains=lambda x: x in index,
        check_symbol=check_symbol,
        parse_value=lambda text: text.strip().strip('"'),
        format_value=str,
        elements=elems,
    )
    problems = law_violations(s, elems)
    if problems:
        raise AlgebraError(f"semiring {name} is not a c*-semiring: " + "; ".join(problems))
    return s


def load_semiring(doc: Mapping[str, Any]) -> Semiring:
    """Read a finite semiring document::

        {"name": "LEVEL", "elements": [...], "zero": "...", "one": "...",
         "plus": [[...], ...], "times": [[...], ...]}
    """
    try:
        return finite_semiring(
            doc["name"],
            doc["elements"],
            doc["zero"],
            doc["one"],
            doc["plus"],
            doc["times"],
            check_symbol=doc.get("check_symbol", ">="),
        )
    except KeyError as exc:
        raise ConfigError(f"semiring document lacks field {exc.args[0]!r}") from None
