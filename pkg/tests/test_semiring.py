import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lreq.errors import AlgebraError, ConfigError
from lreq.semiring import (
    RISK,
    TRUST,
    MetricCheck,
    finite_semiring,
    get_semiring,
    inv_plus,
    law_violations,
    leq,
    load_semiring,
    plus,
    register_semiring,
    satisfies,
    times,
    times_all,
    unregister_semiring,
)

LEVELS = ["none", "low", "mid", "high"]


def level_doc(name="LEVEL"):
    """Bottleneck semiring on a 4-chain: sum = max, product = min."""
    idx = {e: i for i, e in enumerate(LEVELS)}
    return {
        "name": name,
        "elements": LEVELS,
        "zero": "none",
        "one": "high",
        "plus": [[LEVELS[max(idx[a], idx[b])] for b in LEVELS] for a in LEVELS],
        "times": [[LEVELS[min(idx[a], idx[b])] for b in LEVELS] for a in LEVELS],
    }


def r(x):
    return RISK.value(x)


def t(x):
    return TRUST.value(x)


risk_raw = st.one_of(st.integers(min_value=0, max_value=10**6), st.just(math.inf))
trust_raw = st.fractions(min_value=0, max_value=1, max_denominator=1000)


class TestBuiltins:
    def test_risk_operations(self):
        assert plus(r(20), r(15)) == r(15)
        assert times(r(20), r(15)) == r(35)
        assert inv_plus(r(20), r(15)) == r(20)
        assert RISK.zero == r(math.inf) and RISK.one == r(0)

    def test_trust_operations(self):
        assert plus(t(0.5), t(0.8)) == t(0.8)
        assert times(t(Fraction(1, 2)), t(Fraction(1, 2))) == t(Fraction(1, 4))
        assert inv_plus(t(0.5), t(0.8)) == t(0.5)

    def test_order_points_to_better(self):
        # a <= b means b is at least as good: lower risk, higher trust.
        assert leq(r(20), r(15)) and not leq(r(15), r(20))
        assert leq(t(0.2), t(0.9))
        assert leq(RISK.zero, RISK.one) and leq(TRUST.zero, TRUST.one)

    def test_checks(self):
        check = MetricCheck("RISK", r(75))
        assert satisfies(r(75), check) and satisfies(r(10), check)
        assert not satisfies(r(78), check)
        assert str(check) == "RISK <= 75"
        assert satisfies(t(0.9), MetricCheck("TRUST", t(0.5)))

    def test_mixing_semirings_fails(self):
        with pytest.raises(AlgebraError):
            plus(r(1), t(0.5))
        with pytest.raises(AlgebraError):
            MetricCheck("TRUST", r(3))

    def test_domain_membership(self):
        with pytest.raises(AlgebraError):
            RISK.value(-1)
        with pytest.raises(AlgebraError):
            TRUST.value(1.5)
        with pytest.raises(AlgebraError):
            RISK.value(True)

    def test_parse_and_format(self):
        assert RISK.parse("∞") == RISK.zero
        assert str(RISK.zero) == "∞" and RISK.zero.to_json() == "inf"
        assert RISK.parse("12") == r(12)
        with pytest.raises(AlgebraError):
            RISK.parse("abc")

    def test_times_all(self):
        assert times_all([r(1), r(2), r(3)], RISK) == r(6)
        assert times_all([], TRUST) == TRUST.one

    def test_registry(self):
        assert get_semiring("risk") is RISK
        with pytest.raises(AlgebraError):
            get_semiring("nope")
        with pytest.raises(AlgebraError):
            unregister_semiring("RISK")


class TestFinite:
    def test_load_and_register(self):
        s = load_semiring(level_doc("LEVEL_T"))
        register_semiring(s)
        try:
            assert get_semiring("LEVEL_T") is s
            assert plus(s.value("low"), s.value("mid")) == s.value("mid")
            assert times(s.value("low"), s.value("mid")) == s.value("low")
            assert s.parse('"mid"') == s.value("mid")
            with pytest.raises(AlgebraError):
                register_semiring(load_semiring(level_doc("LEVEL_T")))
        finally:
            unregister_semiring("LEVEL_T")

    def test_rejects_non_semiring(self):
        doc = level_doc()
        doc["times"] = [[LEVELS[0]] * 4 for _ in LEVELS]  # one is no unit
        with pytest.raises(AlgebraError, match="one is not a unit"):
            load_semiring(doc)

    def test_rejects_non_selective_sum(self):
        # Sum on {0,1,2}: 1 + 2 = 0 picks neither operand.
        els = ["0", "1", "2"]
        plus_t = [["0", "1", "2"], ["1", "1", "0"], ["2", "0", "2"]]
        times_t = [["0", "0", "0"], ["0", "1", "2"], ["0", "2", "2"]]
        with pytest.raises(AlgebraError):
            finite_semiring("BAD", els, "0", "1", plus_t, times_t)

    def test_malformed_documents(self):
        with pytest.raises(ConfigError):
            load_semiring({"name": "X"})
        doc = level_doc()
        doc["plus"] = doc["plus"][:2]
        with pytest.raises(ConfigError):
            load_semiring(doc)
        doc = level_doc()
        doc["zero"] = "absent"
        with pytest.raises(ConfigError):
            load_semiring(doc)

    def test_law_violations_on_builtins(self):
        assert law_violations(RISK, [0, 1, 5, math.inf]) == []
        assert law_violations(TRUST, [Fraction(0), Fraction(1, 3), Fraction(1, 2), Fraction(1)]) == []


@given(risk_raw, risk_raw, risk_raw)
def test_risk_inv_plus_properties(a, b, c):
    a, b, c = r(a), r(b), r(c)
    assert inv_plus(a, b) == inv_plus(b, a)
    assert inv_plus(a, inv_plus(b, c)) == inv_plus(inv_plus(a, b), c)
    assert inv_plus(a, a) == a
    assert times(a, inv_plus(b, c)) == inv_plus(times(a, b), times(a, c))
    if leq(a, b):
        assert leq(inv_plus(a, c), inv_plus(b, c))
        assert leq(times(a, c), times(b, c))


@given(trust_raw, trust_raw)
def test_trust_sum_is_selective_and_ordered(a, b):
    a, b = t(a), t(b)
    assert plus(a, b) in (a, b)
    assert leq(a, b) or leq(b, a)
    assert leq(inv_plus(a, b), plus(a, b))
